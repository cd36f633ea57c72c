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
#include "debias/nn/bundle.hpp"
#include "debias/nn/losses.hpp"
#include "debias/nn/mlp.hpp"
#include "debias/nn/optimizer.hpp"

#include "../common/gradcheck.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace debias;

TEST(Gradients, MatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto r = gradcheck::run(seed);
        EXPECT_LE(r.xent, 1e-4) << "seed " << seed;
        EXPECT_LE(r.corr, 1e-4) << "seed " << seed;
        EXPECT_LE(r.fe_task, 1e-4) << "seed " << seed;
        EXPECT_LE(r.fe_bias, 1e-4) << "seed " << seed;
        EXPECT_LE(r.parameters, 300u);
    }
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
    Matrix z(2, 3);
    z << 1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0;
    const Matrix p = nn::softmax(z);
    EXPECT_TRUE(p.allFinite());
    for (Eigen::Index i = 0; i < 2; ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    EXPECT_GT(p(0, 1), p(0, 0));
}

TEST(CrossEntropy, KnownValue) {
    Matrix z = Matrix::Zero(2, 2);
    const std::vector<int> y{0, 1};
    const auto lg = nn::xent_loss_grad(z, y);
    EXPECT_NEAR(lg.loss, 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(lg.grad(0, 0), -0.5, 1e-12);
    EXPECT_NEAR(lg.grad(0, 1), 0.5, 1e-12);
}

TEST(CrossEntropy, RejectsBadLabels) {
    const Matrix z = Matrix::Zero(2, 2);
    EXPECT_THROW(nn::xent_loss_grad(z, std::vector<int>{0, 2}), Error);
    EXPECT_THROW(nn::xent_loss_grad(z, std::vector<int>{0}), Error);
}

TEST(CorrelationLoss, PerfectPredictionIsMinusOne) {
    const std::vector<int> codes{0, 1, 2, 0, 1, 2};
    const Matrix t = stats::one_hot(codes, 3);
    const auto lg = nn::corr_loss_grad(t, 2.0 * t.array() + 1.0);
    EXPECT_NEAR(lg.loss, -1.0, 1e-12);
    EXPECT_NEAR(lg.grad.norm(), 0.0, 1e-12);
}

TEST(CorrelationLoss, ConstantColumnsAreInactive) {
    // Column 2 never occurs, so only two columns contribute.
    const std::vector<int> codes{0, 1, 0, 1};
    const Matrix t = stats::one_hot(codes, 3);
    Matrix p = t;
    p(0, 2) = 5.0;
    const auto lg = nn::corr_loss_grad(t, p);
    EXPECT_NEAR(lg.loss, -1.0, 1e-12);
    EXPECT_EQ(lg.grad.col(2).norm(), 0.0);
}

TEST(Mlp, ForwardShapesAndParameterCount) {
    Rng rng = make_rng(1, "test/mlp");
    const std::vector<std::size_t> dims{4, 8, 3};
    const auto net = nn::Mlp::random(dims, rng);
    EXPECT_EQ(net.parameter_count(), 4u * 8 + 8 + 8 * 3 + 3);
    EXPECT_EQ(net.dims(), dims);
    const Matrix out = nn::forward(net, Matrix::Ones(5, 4));
    EXPECT_EQ(out.rows(), 5);
    EXPECT_EQ(out.cols(), 3);
    EXPECT_THROW(nn::forward(net, Matrix::Ones(5, 3)), Error);
}

TEST(Mlp, StaleCacheIsRejected) {
    Rng rng = make_rng(2, "test/mlp");
    const std::vector<std::size_t> dims{3, 4, 2};
    auto net = nn::Mlp::random(dims, rng);
    nn::ForwardCache cache;
    const Matrix out = nn::forward(net, Matrix::Ones(2, 3), &cache);
    net.mutable_layer(0).bias(0) += 1.0;
    EXPECT_THROW(nn::backward(net, cache, Matrix::Ones(2, 2)), Error);
}

TEST(Optimizer, SignAndZeroRate) {
    const std::vector<std::size_t> dims{1, 1};
    auto net = nn::Mlp::zeros(dims);
    std::vector<nn::Layer> g{{Matrix::Constant(1, 1, 2.0), RowVector::Constant(1, 2.0)}};
    nn::OptimizerConfig sgd;
    sgd.kind = nn::OptimizerKind::sgd;
    nn::OptimizerState st;
    nn::opt_step(net, g, st, sgd, nn::StepSign::descend, 0.5);
    EXPECT_DOUBLE_EQ(net.layers()[0].weights(0, 0), -1.0);
    nn::opt_step(net, g, st, sgd, nn::StepSign::ascend, 0.5);
    EXPECT_DOUBLE_EQ(net.layers()[0].weights(0, 0), 0.0);
    const auto before = net;
    nn::OptimizerConfig adam;
    nn::OptimizerState st2;
    nn::opt_step(net, g, st2, adam, nn::StepSign::descend, 0.0);
    EXPECT_EQ(net, before);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
    const std::vector<std::size_t> dims{1, 1};
    auto net = nn::Mlp::zeros(dims);
    std::vector<nn::Layer> g{{Matrix::Constant(1, 1, 3.0), RowVector::Constant(1, -0.2)}};
    nn::OptimizerState st;
    nn::opt_step(net, g, st, nn::OptimizerConfig{}, nn::StepSign::descend, 0.01);
    EXPECT_NEAR(net.layers()[0].weights(0, 0), -0.01, 1e-8);
    EXPECT_NEAR(net.layers()[0].bias(0), 0.01, 1e-7);
}

TEST(Optimizer, DescentReducesQuadratic) {
    Rng rng = make_rng(3, "test/opt");
    const std::vector<std::size_t> dims{3, 2};
    auto net = nn::Mlp::random(dims, rng);
    const Matrix x = gradcheck::normals(rng, 40, 3);
    const std::vector<int> y = gradcheck::covering_codes(rng, 40, 2);
    nn::OptimizerState st;
    nn::ForwardCache c;
    const double first = nn::xent_loss_grad(nn::forward(net, x), y).loss;
    for (int i = 0; i < 50; ++i) {
        const auto lg = nn::xent_loss_grad(nn::forward(net, x, &c), y);
        const auto g = nn::backward(net, c, lg.grad);
        nn::opt_step(net, g.layers, st, nn::OptimizerConfig{}, nn::StepSign::descend, 0.05);
    }
    EXPECT_LT(nn::xent_loss_grad(nn::forward(net, x), y).loss, first);
}

TEST(Bundle, InitializationIsIndependentOfBiasHeads) {
    nn::Architecture arch{{8}, 6, {5}};
    const auto a = nn::make_bundle(4, arch, {}, {}, 17);
    const auto b = nn::make_bundle(4, arch, {"project", "glass"}, {2, 8}, 17);
    EXPECT_EQ(a.fe, b.fe);
    EXPECT_EQ(a.msi_head, b.msi_head);
    EXPECT_EQ(b.be_heads.size(), 2u);
    EXPECT_EQ(b.be_heads[1].output_dim(), 8u);
    EXPECT_NE(a.fe, nn::make_bundle(4, arch, {}, {}, 18).fe);
}

TEST(Bundle, CheckpointRoundTrip) {
    nn::Architecture arch{{8}, 6, {5}};
    const auto b = nn::make_bundle(4, arch, {"project"}, {3}, 5);
    const auto dir = std::filesystem::temp_directory_path() / "debias_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.ckpt";
    nn::save_checkpoint(b, path, "abc");
    const auto loaded = nn::load_checkpoint(path);
    EXPECT_EQ(loaded.sidecar["config_hash"], "abc");
    EXPECT_EQ(loaded.bundle.bias_names, b.bias_names);
    // Parameters are stored as f32.
    const Matrix x = Matrix::Ones(3, 4);
    EXPECT_NEAR((nn::predict_msi(loaded.bundle, x) - nn::predict_msi(b, x)).norm(), 0.0, 1e-5);
    EXPECT_EQ(nn::encode_checkpoint(loaded.bundle), nn::encode_checkpoint(b));

    auto bytes = nn::encode_checkpoint(b);
    bytes[0] = 'X';
    EXPECT_THROW(nn::decode_checkpoint(bytes, {"project"}, "bad"), Error);
    bytes = nn::encode_checkpoint(b);
    bytes.pop_back();
    EXPECT_THROW(nn::decode_checkpoint(bytes, {"project"}, "short"), Error);
    EXPECT_THROW(nn::decode_checkpoint(nn::encode_checkpoint(b), {}, "names"), Error);
    try {
        nn::load_checkpoint(dir / "missing.ckpt");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_artifact);
    }
    std::filesystem::remove_all(dir);
}
