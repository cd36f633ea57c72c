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

#include "debias/core/error.hpp"
#include "debias/core/random.hpp"
#include "debias/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace debias::stats {

/// Squared distance correlation together with the sample count it used.
struct DcValue {
    double value = 0.0;
    std::size_t n = 0;
};

/// Sample cap for O(n^2) dependence computations. Larger inputs are
/// uniformly subsampled with `seed`.
struct DcOptions {
    std::size_t max_samples = 8192;
    std::uint64_t seed = 0;
};

namespace detail {

inline constexpr double sqrt2 = 1.41421356237309504880168872420969808;

/// Pairwise Euclidean distance between rows of a row-major copy.
class EuclideanDistance {
public:
    explicit EuclideanDistance(const Matrix& x) : rows_(x) {}

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(rows_.rows()); }

    double operator()(std::size_t j, std::size_t k) const noexcept {
        const auto p = rows_.cols();
        const double* a = rows_.data() + static_cast<Eigen::Index>(j) * p;
        const double* b = rows_.data() + static_cast<Eigen::Index>(k) * p;
        double s = 0.0;
        for (Eigen::Index c = 0; c < p; ++c) {
            const double d = a[c] - b[c];
            s += d * d;
        }
        return std::sqrt(s);
    }

private:
    RowMajorMatrix rows_;
};

/// Euclidean distance between one-hot encodings of category codes
/// without materializing them: sqrt(2) when the codes differ.
class CategoricalDistance {
public:
    explicit CategoricalDistance(std::span<const int> codes) : codes_(codes.begin(), codes.end()) {}

    [[nodiscard]] std::size_t size() const noexcept { return codes_.size(); }

    double operator()(std::size_t j, std::size_t k) const noexcept {
        return codes_[j] == codes_[k] ? 0.0 : sqrt2;
    }

private:
    std::vector<int> codes_;
};

template <class Dist>
std::vector<double> row_means(const Dist& dist, std::size_t n, double& grand) {
    std::vector<double> sums(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j + 1; k < n; ++k) {
            const double d = dist(j, k);
            sums[j] += d;
            sums[k] += d;
        }
    }
    grand = 0.0;
    for (auto& s : sums) {
        grand += s;
        s /= static_cast<double>(n);
    }
    grand /= static_cast<double>(n) * static_cast<double>(n);
    return sums;
}

/// dCov^2 terms for one x-distance against several y-distances, sharing
/// the x pass. Double-centering is applied on the fly, so memory is O(n).
template <class DistX, class DistY>
std::vector<DcValue> dc_many(const DistX& dx, const std::vector<DistY>& dys) {
    const std::size_t n = dx.size();
    double gx = 0.0;
    const auto mx = row_means(dx, n, gx);
    std::vector<double> gy(dys.size(), 0.0);
    std::vector<std::vector<double>> my;
    my.reserve(dys.size());
    for (std::size_t v = 0; v < dys.size(); ++v) {
        my.push_back(row_means(dys[v], n, gy[v]));
    }

    double sxx = 0.0;
    std::vector<double> sxy(dys.size(), 0.0);
    std::vector<double> syy(dys.size(), 0.0);
    std::vector<double> row_xy(dys.size(), 0.0);
    std::vector<double> row_yy(dys.size(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        // Diagonal entries: distance 0, counted once.
        const double ajj = -2.0 * mx[j] + gx;
        sxx += ajj * ajj;
        for (std::size_t v = 0; v < dys.size(); ++v) {
            const double bjj = -2.0 * my[v][j] + gy[v];
            sxy[v] += ajj * bjj;
            syy[v] += bjj * bjj;
        }
        double row_xx = 0.0;
        std::fill(row_xy.begin(), row_xy.end(), 0.0);
        std::fill(row_yy.begin(), row_yy.end(), 0.0);
        for (std::size_t k = j + 1; k < n; ++k) {
            const double a = dx(j, k) - mx[j] - mx[k] + gx;
            row_xx += a * a;
            for (std::size_t v = 0; v < dys.size(); ++v) {
                const double b = dys[v](j, k) - my[v][j] - my[v][k] + gy[v];
                row_xy[v] += a * b;
                row_yy[v] += b * b;
            }
        }
        sxx += 2.0 * row_xx;
        for (std::size_t v = 0; v < dys.size(); ++v) {
            sxy[v] += 2.0 * row_xy[v];
            syy[v] += 2.0 * row_yy[v];
        }
    }

    std::vector<DcValue> out;
    out.reserve(dys.size());
    for (std::size_t v = 0; v < dys.size(); ++v) {
        DcValue dc{0.0, n};
        const double denom = sxx * syy[v];
        if (sxx > 0.0 && syy[v] > 0.0) {
            dc.value = std::clamp(sxy[v] / std::sqrt(denom), 0.0, 1.0);
        }
        out.push_back(dc);
    }
    return out;
}

inline void check_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        fail(ErrorKind::numeric, std::string(what) + " contains non-finite entries");
    }
}

} // namespace detail

/// Squared distance correlation between the rows of `x` (n x p) and `y`
/// (n x q). Zero when either distance variance vanishes.
inline DcValue distance_correlation_sq(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) {
        fail(ErrorKind::dimension, "distance correlation: row counts differ (" + std::to_string(x.rows()) +
                                       " vs " + std::to_string(y.rows()) + ")");
    }
    if (x.rows() < 2) {
        fail(ErrorKind::dimension, "distance correlation needs at least 2 samples");
    }
    detail::check_finite(x, "x");
    detail::check_finite(y, "y");
    const detail::EuclideanDistance dx(x);
    std::vector<detail::EuclideanDistance> dy{detail::EuclideanDistance(y)};
    return detail::dc_many(dx, dy).front();
}

/// Categorical variant: `codes` enter as one-hot rows under Euclidean
/// distance, identical to passing `one_hot(codes, K)` as `y`.
inline std::vector<DcValue> distance_correlation_sq(const Matrix& x,
                                                    const std::vector<std::vector<int>>& code_sets) {
    if (x.rows() < 2) {
        fail(ErrorKind::dimension, "distance correlation needs at least 2 samples");
    }
    detail::check_finite(x, "x");
    std::vector<detail::CategoricalDistance> dys;
    dys.reserve(code_sets.size());
    for (const auto& codes : code_sets) {
        if (codes.size() != static_cast<std::size_t>(x.rows())) {
            fail(ErrorKind::dimension, "distance correlation: label count " + std::to_string(codes.size()) +
                                           " differs from row count " + std::to_string(x.rows()));
        }
        dys.emplace_back(codes);
    }
    return detail::dc_many(detail::EuclideanDistance(x), dys);
}

inline DcValue distance_correlation_sq(const Matrix& x, std::span<const int> codes) {
    return distance_correlation_sq(x, std::vector<std::vector<int>>{{codes.begin(), codes.end()}}).front();
}

/// Sorted uniform subsample of [0, n) of size min(n, cap).
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n <= cap) {
        return idx;
    }
    Rng rng = make_rng(seed, "dc-subsample", n);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < cap; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
        std::swap(idx[i], idx[std::min(j, n - 1)]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Squared Pearson correlation; 0 when either vector has zero variance.
inline double pearson_corr_sq(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        fail(ErrorKind::dimension, "pearson: lengths differ (" + std::to_string(u.size()) + " vs " +
                                       std::to_string(v.size()) + ")");
    }
    if (u.size() < 2) {
        fail(ErrorKind::dimension, "pearson: need at least 2 values");
    }
    const double n = static_cast<double>(u.size());
    const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
    const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double suv = 0.0;
    double suu = 0.0;
    double svv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i] - mu;
        const double b = v[i] - mv;
        suv += a * b;
        suu += a * a;
        svv += b * b;
    }
    if (suu <= 0.0 || svv <= 0.0) {
        return 0.0;
    }
    return std::clamp((suv * suv) / (suu * svv), 0.0, 1.0);
}

/// n x K indicator matrix with exactly one 1 per row.
inline Matrix one_hot(std::span<const int> labels, int categories) {
    if (categories < 1) {
        fail(ErrorKind::encoding, "one_hot: category count must be positive");
    }
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), categories);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 0 || c >= categories) {
            fail(ErrorKind::encoding, "one_hot: label " + std::to_string(c) + " at row " + std::to_string(i) +
                                          " outside [0, " + std::to_string(categories) + ")");
        }
        out(static_cast<Eigen::Index>(i), c) = 1.0;
    }
    return out;
}

} // namespace debias::stats
