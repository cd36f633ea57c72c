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

// Independent reference implementations used by the unit and acceptance
// tests. Each one follows the textbook definition rather than the
// library's streaming or closed-form route.

#include "debias/core/types.hpp"
#include "debias/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using debias::Matrix;

/// Squared distance correlation from fully materialized double-centered
/// distance matrices.
inline double dcor_sq(const Matrix& x, const Matrix& y) {
    const Eigen::Index n = x.rows();
    auto centered = [n](const Matrix& m) {
        Matrix d(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (m.row(i) - m.row(j)).norm();
        }
        const Eigen::VectorXd row = d.rowwise().mean();
        const Eigen::RowVectorXd col = d.colwise().mean();
        const double all = d.mean();
        Matrix a(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) a(i, j) = d(i, j) - row(i) - col(j) + all;
        }
        return a;
    };
    const Matrix a = centered(x);
    const Matrix b = centered(y);
    const double vxy = (a.array() * b.array()).mean();
    const double vxx = (a.array() * a.array()).mean();
    const double vyy = (b.array() * b.array()).mean();
    if (vxx <= 0.0 || vyy <= 0.0) return 0.0;
    return vxy / std::sqrt(vxx * vyy);
}

/// AUC by enumerating every positive/negative pair.
inline double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] == 0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// P(X >= k) for X ~ Binomial(n, p), summed term by term in log space.
inline double binom_upper_tail(int k, int n, double p) {
    double total = 0.0;
    for (int i = k; i <= n; ++i) {
        const double lc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
        const double lp = (p <= 0.0 ? (i == 0 ? 0.0 : -INFINITY) : i * std::log(p)) +
                          (p >= 1.0 ? (i == n ? 0.0 : -INFINITY) : (n - i) * std::log1p(-p));
        total += std::exp(lc + lp);
    }
    return total;
}

/// Root of a monotone function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
    double flo = f(lo);
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Clopper-Pearson bounds as the p where the binomial tails equal a/2.
inline std::pair<double, double> clopper_pearson_tails(int k, int n, double confidence) {
    const double a = (1.0 - confidence) / 2.0;
    const double lo = k == 0 ? 0.0 : bisect([&](double p) { return binom_upper_tail(k, n, p) - a; }, 0.0, 1.0);
    const double hi =
        k == n ? 1.0 : bisect([&](double p) { return (1.0 - binom_upper_tail(k + 1, n, p)) - a; }, 0.0, 1.0);
    return {lo, hi};
}

struct BootstrapBounds {
    double ppv_lo, ppv_hi, npv_lo, npv_hi;
};

/// Percentile intervals of prevalence-adjusted PPV and NPV when S and E
/// are re-estimated from binomial draws of the given sizes.
inline BootstrapBounds bootstrap_predictive(double s, double e, double p, int n_pos, int n_neg, double confidence,
                                            int draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::binomial_distribution<int> pos(n_pos, s);
    std::binomial_distribution<int> neg(n_neg, e);
    std::vector<double> ppv;
    std::vector<double> npv;
    for (int i = 0; i < draws; ++i) {
        const double sb = static_cast<double>(pos(rng)) / n_pos;
        const double eb = static_cast<double>(neg(rng)) / n_neg;
        ppv.push_back(sb * p / (sb * p + (1.0 - eb) * (1.0 - p)));
        npv.push_back(eb * (1.0 - p) / (eb * (1.0 - p) + (1.0 - sb) * p));
    }
    auto q = [](std::vector<double>& v, double f) {
        const auto k = static_cast<std::size_t>(f * static_cast<double>(v.size() - 1));
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
        return v[k];
    };
    const double a = (1.0 - confidence) / 2.0;
    return {q(ppv, a), q(ppv, 1.0 - a), q(npv, a), q(npv, 1.0 - a)};
}

/// Central finite differences of `loss` with respect to every parameter
/// of `net`, in (layer, weights row-major, bias) order.
inline std::vector<double> numeric_grad(debias::nn::Mlp& net, const std::function<double()>& loss, double h = 1e-6) {
    std::vector<double> g;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto rows = net.layers()[l].weights.rows();
        const auto cols = net.layers()[l].weights.cols();
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                const double w = net.layers()[l].weights(r, c);
                net.mutable_layer(l).weights(r, c) = w + h;
                const double up = loss();
                net.mutable_layer(l).weights(r, c) = w - h;
                const double down = loss();
                net.mutable_layer(l).weights(r, c) = w;
                g.push_back((up - down) / (2.0 * h));
            }
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double b = net.layers()[l].bias(c);
            net.mutable_layer(l).bias(c) = b + h;
            const double up = loss();
            net.mutable_layer(l).bias(c) = b - h;
            const double down = loss();
            net.mutable_layer(l).bias(c) = b;
            g.push_back((up - down) / (2.0 * h));
        }
    }
    return g;
}

inline std::vector<double> flatten(const std::vector<debias::nn::Layer>& layers) {
    std::vector<double> out;
    for (const auto& l : layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out.push_back(l.weights(r, c));
        }
        for (Eigen::Index c = 0; c < l.bias.size(); ++c) out.push_back(l.bias(c));
    }
    return out;
}

/// Largest |a - b| / max(|a|, |b|) over entries; pairs where both sides are
/// below `floor` are compared absolutely against `floor`.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

} // namespace oracle
