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
#include "debias/core/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace debias::stats {

struct PcaResult {
    Matrix components;                // k x p, orthonormal rows
    Matrix scores;                    // n x k
    Vector eigenvalues;               // k, covariance eigenvalues, non-increasing
    Vector explained_variance_ratio;  // k
};

/// Principal components from the eigendecomposition of the sample
/// covariance. Each component is sign-fixed so that its largest-magnitude
/// entry is positive.
inline PcaResult pca_project(const Matrix& x, Eigen::Index k) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (n < 2) {
        fail(ErrorKind::dimension, "pca: need at least 2 rows");
    }
    if (k < 1 || k > std::min(n, p)) {
        fail(ErrorKind::dimension, "pca: k=" + std::to_string(k) + " must lie in [1, min(n, p)=" +
                                       std::to_string(std::min(n, p)) + "]");
    }
    if (!x.allFinite()) {
        fail(ErrorKind::numeric, "pca: non-finite input");
    }

    const RowVector mean = x.colwise().mean();
    const Matrix centered = x.rowwise() - mean;
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) {
        fail(ErrorKind::numeric, "pca: eigendecomposition failed");
    }
    // Ascending from Eigen; walk from the top.
    const Vector& values = solver.eigenvalues();
    const Matrix& vectors = solver.eigenvectors();
    const double total = values.cwiseMax(0.0).sum();

    PcaResult out;
    out.components.resize(k, p);
    out.eigenvalues.resize(k);
    out.explained_variance_ratio.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index src = p - 1 - i;
        Vector v = vectors.col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) {
            v = -v;
        }
        out.components.row(i) = v.transpose();
        const double lambda = std::max(values(src), 0.0);
        out.eigenvalues(i) = lambda;
        out.explained_variance_ratio(i) = total > 0.0 ? lambda / total : 0.0;
    }
    out.scores = centered * out.components.transpose();
    return out;
}

} // namespace debias::stats
