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
#pragma once

// Analytic-versus-numeric gradient comparisons shared by the unit and
// acceptance tests.

#include "debias/core/random.hpp"
#include "debias/nn/losses.hpp"
#include "debias/nn/mlp.hpp"
#include "debias/stats/dependence.hpp"

#include "oracles.hpp"

#include <array>
#include <vector>

namespace gradcheck {

using debias::Matrix;

inline constexpr double step = 1e-5;
// Entries with both sides below this magnitude are compared absolutely.
inline constexpr double abs_floor = 1e-5;

struct Report {
    double xent = 0.0;          // loss wrt logits
    double corr = 0.0;          // loss wrt predictions
    double fe_task = 0.0;       // extractor + task head, task loss
    double fe_bias = 0.0;       // extractor + bias head, correlation loss
    std::size_t parameters = 0; // largest network stack checked

    [[nodiscard]] double worst() const { return std::max({xent, corr, fe_task, fe_bias}); }
};

inline Matrix normals(debias::Rng& rng, Eigen::Index n, Eigen::Index p) {
    Matrix m(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) m(i, j) = debias::standard_normal(rng);
    }
    return m;
}

inline double matrix_check(Matrix at, const Matrix& analytic, const std::function<double(const Matrix&)>& f) {
    std::vector<double> a;
    std::vector<double> n;
    for (Eigen::Index i = 0; i < at.rows(); ++i) {
        for (Eigen::Index j = 0; j < at.cols(); ++j) {
            const double v = at(i, j);
            at(i, j) = v + step;
            const double up = f(at);
            at(i, j) = v - step;
            const double down = f(at);
            at(i, j) = v;
            a.push_back(analytic(i, j));
            n.push_back((up - down) / (2.0 * step));
        }
    }
    return oracle::max_rel_error(a, n, abs_floor);
}

/// Codes with every category present, so every target column varies.
inline std::vector<int> covering_codes(debias::Rng& rng, std::size_t n, int k) {
    std::vector<int> c;
    for (std::size_t i = 0; i < n; ++i) {
        c.push_back(i < static_cast<std::size_t>(k) ? static_cast<int>(i)
                                                    : static_cast<int>(debias::uniform01(rng) * k));
    }
    return c;
}

inline Report run(std::uint64_t seed) {
    using namespace debias;
    Rng rng = make_rng(seed, "gradcheck");
    Report r;
    const Eigen::Index n = 12;

    {
        const Matrix logits = 2.0 * normals(rng, n, 3);
        const auto y = covering_codes(rng, n, 3);
        const auto g = nn::xent_loss_grad(logits, y);
        r.xent = matrix_check(logits, g.grad, [&](const Matrix& z) { return nn::xent_loss_grad(z, y).loss; });
    }
    {
        const auto codes = covering_codes(rng, n, 4);
        const Matrix target = stats::one_hot(codes, 4);
        const Matrix pred = normals(rng, n, 4);
        const auto g = nn::corr_loss_grad(target, pred);
        r.corr = matrix_check(pred, g.grad, [&](const Matrix& z) { return nn::corr_loss_grad(target, z).loss; });
    }

    const std::array<std::size_t, 3> fe_dims{5, 6, 4};
    const std::array<std::size_t, 3> task_dims{4, 5, 2};
    const std::array<std::size_t, 3> bias_dims{4, 5, 3};
    nn::Mlp fe = nn::Mlp::random(fe_dims, rng);
    nn::Mlp task = nn::Mlp::random(task_dims, rng);
    nn::Mlp bias = nn::Mlp::random(bias_dims, rng);
    const Matrix x = normals(rng, n, 5);
    const auto y = covering_codes(rng, n, 2);
    const auto b = covering_codes(rng, n, 3);
    const Matrix target = stats::one_hot(b, 3);

    auto composed = [](nn::Mlp& first, nn::Mlp& second, const Matrix& input, auto&& loss_grad) {
        nn::ForwardCache c1;
        nn::ForwardCache c2;
        const Matrix f = nn::forward(first, input, &c1);
        const Matrix out = nn::forward(second, f, &c2);
        const auto lg = loss_grad(out);
        const auto g2 = nn::backward(second, c2, lg.grad);
        const auto g1 = nn::backward(first, c1, g2.input);
        auto loss = [&] { return loss_grad(nn::forward(second, nn::forward(first, input))).loss; };
        auto a = oracle::flatten(g1.layers);
        const auto a2 = oracle::flatten(g2.layers);
        a.insert(a.end(), a2.begin(), a2.end());
        auto num = oracle::numeric_grad(first, loss, step);
        const auto num2 = oracle::numeric_grad(second, loss, step);
        num.insert(num.end(), num2.begin(), num2.end());
        return oracle::max_rel_error(a, num, abs_floor);
    };
    r.fe_task = composed(fe, task, x, [&](const Matrix& z) { return nn::xent_loss_grad(z, y); });
    r.fe_bias = composed(fe, bias, x, [&](const Matrix& z) { return nn::corr_loss_grad(target, z); });
    r.parameters = fe.parameter_count() + std::max(task.parameter_count(), bias.parameter_count());
    return r;
}

} // namespace gradcheck
