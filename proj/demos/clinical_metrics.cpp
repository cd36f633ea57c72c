/*
 * Copyright 2026 The tma-debias Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Clinical metrics for a fixed operating point and a toy score list.

#include "debias/metrics/clinical.hpp"

#include <cstdio>
#include <vector>

using namespace debias::metrics;

int main() {
    const double s = 0.87;
    const double e = 0.883;
    for (double p : {0.05, 0.15, 0.30}) {
        const auto r = prevalence_adjusted(s, e, p);
        const auto ci = logit_ci_predictive(s, e, p, 300, 1200);
        std::printf("prevalence %.2f: accuracy %.3f, PPV %.3f [%.3f, %.3f], NPV %.3f [%.3f, %.3f]\n", p, r.accuracy,
                    r.ppv.value(), ci.ppv.lower, ci.ppv.upper, r.npv.value(), ci.npv.lower, ci.npv.upper);
    }

    const auto sens = clopper_pearson(261, 300);
    std::printf("sensitivity 261/300 = %.3f, exact 95%% CI [%.3f, %.3f]\n", 261.0 / 300.0, sens.lower, sens.upper);

    const std::vector<double> scores{0.9, 0.8, 0.7, 0.65, 0.6, 0.4, 0.35, 0.3, 0.2, 0.1};
    const std::vector<int> positive{1, 1, 0, 1, 0, 1, 0, 0, 0, 0};
    const double auc = roc_auc(scores, positive);
    const auto auc_ci = auc_interval(auc, 4, 6);
    std::printf("AUC %.3f [%.3f, %.3f]\n", auc, auc_ci.lower, auc_ci.upper);
}
