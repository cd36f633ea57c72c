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

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace debias::nn {

struct LossGrad {
    double loss = 0.0;
    Matrix grad;  // d loss / d predictions, same shape as the predictions
};

inline constexpr double probability_floor = 1e-12;

/// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        double z = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            p(i, c) = std::exp(logits(i, c) - m);
            z += p(i, c);
        }
        p.row(i) /= z;
    }
    return p;
}

/// Batch-summed cross-entropy over softmax(logits) with probabilities
/// floored at 1e-12 before the log. Gradient is softmax - onehot(y).
inline LossGrad xent_loss_grad(const Matrix& logits, std::span<const int> labels) {
    const Eigen::Index n = logits.rows();
    const Eigen::Index m = logits.cols();
    if (m < 2) {
        fail(ErrorKind::dimension, "cross-entropy needs at least 2 classes");
    }
    if (static_cast<std::size_t>(n) != labels.size()) {
        fail(ErrorKind::dimension, "cross-entropy: " + std::to_string(labels.size()) + " labels for " +
                                       std::to_string(n) + " rows");
    }
    if (!logits.allFinite()) {
        fail(ErrorKind::numeric, "cross-entropy: non-finite logits");
    }
    LossGrad out;
    out.grad = softmax(logits);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= m) {
            fail(ErrorKind::domain, "cross-entropy: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(m) + ")");
        }
        out.loss -= std::log(std::max(out.grad(i, y), probability_floor));
        out.grad(i, y) -= 1.0;
    }
    return out;
}

/// Negative mean squared Pearson correlation between matching columns of
/// `target` (one-hot bias) and `predicted`. The mean runs over columns
/// whose target varies within the batch; a column where either side is
/// constant contributes 0 with zero gradient.
inline LossGrad corr_loss_grad(const Matrix& target, const Matrix& predicted) {
    if (target.rows() != predicted.rows() || target.cols() != predicted.cols()) {
        fail(ErrorKind::dimension, "correlation loss: shapes " + std::to_string(target.rows()) + "x" +
                                       std::to_string(target.cols()) + " and " + std::to_string(predicted.rows()) +
                                       "x" + std::to_string(predicted.cols()) + " differ");
    }
    const Eigen::Index n = target.rows();
    if (n < 2) {
        fail(ErrorKind::dimension, "correlation loss needs at least 2 rows");
    }
    if (!predicted.allFinite()) {
        fail(ErrorKind::numeric, "correlation loss: non-finite predictions");
    }
    LossGrad out;
    out.grad = Matrix::Zero(n, target.cols());
    Eigen::Index active = 0;
    Vector r2(target.cols());
    for (Eigen::Index k = 0; k < target.cols(); ++k) {
        const Vector u = target.col(k).array() - target.col(k).mean();
        const double suu = u.squaredNorm();
        r2(k) = 0.0;
        if (suu <= 0.0) {
            continue;
        }
        ++active;
        const Vector v = predicted.col(k).array() - predicted.col(k).mean();
        const double svv = v.squaredNorm();
        if (svv <= 0.0) {
            continue;
        }
        const double suv = u.dot(v);
        r2(k) = suv * suv / (suu * svv);
        // d r^2 / d predicted_i = 2 suv / (suu svv) * (u_i - (suv / svv) v_i)
        out.grad.col(k) = (2.0 * suv / (suu * svv)) * (u - (suv / svv) * v);
    }
    if (active == 0) {
        return out;
    }
    const double scale = 1.0 / static_cast<double>(active);
    out.loss = -scale * r2.sum();
    out.grad *= -scale;
    return out;
}

/// Fraction of rows whose arg-max matches the label.
inline double accuracy(const Matrix& logits, std::span<const int> labels) {
    if (logits.rows() == 0) {
        return 0.0;
    }
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        hits += (arg == labels[static_cast<std::size_t>(i)]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

} // namespace debias::nn
