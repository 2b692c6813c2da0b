#include "maglive/error.hpp"
#include "maglive/nn/checkpoint.hpp"
#include "maglive/nn/grad_check.hpp"
#include "maglive/nn/ops.hpp"
#include "maglive/nn/tensor.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace maglive::nn {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = true) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<double> v(element_count(shape));
    for (double& x : v) x = g(rng);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

Parameter param(const std::string& name, Shape shape, std::uint64_t seed) {
    return {name, random_tensor(std::move(shape), seed), true};
}

TEST(Conv1d, TableShapeForFirstLayer) {
    const auto y = conv1d(random_tensor({2, 100, 1}, 1), random_tensor({3, 1, 16}, 2), random_tensor({16}, 3));
    EXPECT_EQ(y.shape(), (Shape{2, 98, 16}));
}

TEST(Conv1d, UnitKernelIsIdentity) {
    const auto x = random_tensor({1, 20, 1}, 4);
    const auto y = conv1d(x, Tensor::from({1, 1, 1}, {1.0}), Tensor::from({1}, {0.0}));
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv1d, MatchesNestedLoopOracle) {
    const std::size_t N = 2, L = 5, K = 2, Ci = 3, Co = 4;
    const auto x = random_tensor({N, L, Ci}, 5), k = random_tensor({K, Ci, Co}, 6), b = random_tensor({Co}, 7);
    const auto y = conv1d(x, k, b);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t l = 0; l + K <= L; ++l)
            for (std::size_t o = 0; o < Co; ++o) {
                double acc = b[o];
                for (std::size_t j = 0; j < K; ++j)
                    for (std::size_t c = 0; c < Ci; ++c) acc += x[(n * L + l + j) * Ci + c] * k[(j * Ci + c) * Co + o];
                EXPECT_NEAR(y[(n * (L - K + 1) + l) * Co + o], acc, 1e-12);
            }
}

TEST(Conv1d, ShortInputIsShapeError) {
    EXPECT_THROW(conv1d(random_tensor({1, 2, 1}, 1), random_tensor({3, 1, 1}, 1), random_tensor({1}, 1)),
                 ShapeError);
}

TEST(Conv2d, TableShapeAndParameterCount) {
    const auto k = random_tensor({3, 3, 2, 16}, 2), b = random_tensor({16}, 3);
    const auto y = conv2d(random_tensor({1, 17, 69, 2}, 1), k, b);
    EXPECT_EQ(y.shape(), (Shape{1, 15, 67, 16}));
    EXPECT_EQ(k.size() + b.size(), 304u);
}

TEST(Conv2d, ZeroKernelsGiveBias) {
    const auto y = conv2d(random_tensor({1, 5, 5, 2}, 1), Tensor::zeros({3, 3, 2, 3}), Tensor::from({3}, {1, 2, 3}));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], static_cast<double>(i % 3 + 1));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
    const std::size_t H = 4, W = 4, Ci = 2, Co = 3;
    const auto x = random_tensor({1, H, W, Ci}, 8), k = random_tensor({3, 3, Ci, Co}, 9), b = random_tensor({Co}, 10);
    const auto y = conv2d(x, k, b);
    for (std::size_t i = 0; i < H - 2; ++i)
        for (std::size_t j = 0; j < W - 2; ++j)
            for (std::size_t o = 0; o < Co; ++o) {
                double acc = b[o];
                for (std::size_t p = 0; p < 3; ++p)
                    for (std::size_t q = 0; q < 3; ++q)
                        for (std::size_t c = 0; c < Ci; ++c)
                            acc += x[((i + p) * W + (j + q)) * Ci + c] * k[((p * 3 + q) * Ci + c) * Co + o];
                EXPECT_NEAR(y[(i * (W - 2) + j) * Co + o], acc, 1e-12);
            }
}

TEST(Conv2d, UndersizedInputIsShapeError) {
    EXPECT_THROW(conv2d(random_tensor({1, 2, 5, 1}, 1), random_tensor({3, 3, 1, 1}, 1), random_tensor({1}, 1)),
                 ShapeError);
}

TEST(Pool, TableShapes) {
    EXPECT_EQ(pool1d(random_tensor({1, 94, 16}, 1), PoolKind::avg, 2).shape(), (Shape{1, 47, 16}));
    EXPECT_EQ(pool2d(random_tensor({1, 15, 67, 16}, 1), PoolKind::max, 2).shape(), (Shape{1, 7, 33, 16}));
    EXPECT_EQ(pool2d(random_tensor({1, 5, 31, 32}, 1), PoolKind::max, 2).shape(), (Shape{1, 2, 15, 32}));
}

TEST(Pool, ConstantInputStaysConstant) {
    const auto x = Tensor::from({1, 6, 6, 2}, std::vector<double>(72, 3.5));
    for (auto kind : {PoolKind::max, PoolKind::avg}) {
        const auto y = pool2d(x, kind, 2);
        for (double v : y.values()) EXPECT_EQ(v, 3.5);
    }
}

TEST(Pool, OddLengthDropsLastElement) {
    const auto x = random_tensor({1, 7, 1}, 11);
    const auto mx = pool1d(x, PoolKind::max, 2), av = pool1d(x, PoolKind::avg, 2);
    ASSERT_EQ(mx.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(mx[i], std::max(x[2 * i], x[2 * i + 1]));
        EXPECT_NEAR(av[i], 0.5 * (x[2 * i] + x[2 * i + 1]), 1e-15);
    }
}

TEST(Pool, WindowLargerThanInputIsShapeError) {
    EXPECT_THROW(pool1d(random_tensor({1, 1, 1}, 1), PoolKind::max, 2), ShapeError);
}

TEST(BatchNorm, StandardizedBatchPassesThrough) {
    // Per-channel values with mean 0 and biased variance 1.
    const auto x = Tensor::from({4, 1}, {-1.0, 1.0, -1.0, 1.0});
    auto rm = Tensor::zeros({1}), rv = Tensor::from({1}, {1.0});
    const auto y = batchnorm(x, Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0}), rm, rv, true);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, HandComputedToyBatch) {
    // values 1, 2, 3, 6: mean 3, biased var 3.5, unbiased var 14/3.
    const auto x = Tensor::from({4, 1}, {1.0, 2.0, 3.0, 6.0});
    auto rm = Tensor::zeros({1}), rv = Tensor::from({1}, {1.0});
    const auto y = batchnorm(x, Tensor::from({1}, {2.0}), Tensor::from({1}, {0.5}), rm, rv, true);
    const double inv = 1.0 / std::sqrt(3.5 + 1e-5);
    const double in[] = {1, 2, 3, 6};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], 2.0 * (in[i] - 3.0) * inv + 0.5, 1e-12);
    EXPECT_NEAR(rm[0], 0.1 * 3.0, 1e-15);
    EXPECT_NEAR(rv[0], 0.9 * 1.0 + 0.1 * 14.0 / 3.0, 1e-15);
    // Inference mode uses the running statistics.
    const auto z = batchnorm(x, Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0}), rm, rv, false);
    EXPECT_NEAR(z[0], (1.0 - rm[0]) / std::sqrt(rv[0] + 1e-5), 1e-12);
}

TEST(BatchNorm, ChannelMismatchIsShapeError) {
    auto rm = Tensor::zeros({2}), rv = Tensor::zeros({2});
    EXPECT_THROW(batchnorm(random_tensor({4, 3}, 1), Tensor::zeros({2}), Tensor::zeros({2}), rm, rv, true),
                 ShapeError);
}

TEST(Dense, TableParameterCounts) {
    EXPECT_EQ(752u * 64u + 64u, 48192u);
    const auto y = dense(random_tensor({2, 752}, 1), random_tensor({752, 64}, 2), random_tensor({64}, 3));
    EXPECT_EQ(y.shape(), (Shape{2, 64}));
}

TEST(Dense, IdentityWeights) {
    std::vector<double> eye(9, 0.0);
    eye[0] = eye[4] = eye[8] = 1.0;
    const auto x = random_tensor({2, 3}, 4);
    const auto y = dense(x, Tensor::from({3, 3}, eye), Tensor::zeros({3}));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Dense, MatchesMatrixProduct) {
    const auto x = random_tensor({1, 3}, 5), w = random_tensor({3, 2}, 6), b = random_tensor({2}, 7);
    const auto y = dense(x, w, b);
    for (std::size_t o = 0; o < 2; ++o)
        EXPECT_NEAR(y[o], b[o] + x[0] * w[o] + x[1] * w[2 + o] + x[2] * w[4 + o], 1e-12);
}

TEST(Dense, MismatchIsShapeError) {
    EXPECT_THROW(dense(random_tensor({1, 4}, 1), random_tensor({3, 2}, 1), random_tensor({2}, 1)), ShapeError);
}

TEST(Activations, ReluAndSigmoidValues) {
    const auto r = relu(Tensor::from({3}, {-1.0, 0.0, 2.0}));
    EXPECT_EQ(std::vector<double>(r.values().begin(), r.values().end()), (std::vector<double>{0, 0, 2}));
    EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
}

TEST(Activations, SigmoidGradientAtZero) {
    auto x = Tensor::scalar(0.0, true);
    sum(sigmoid(x)).backward();
    const double h = 1e-6;
    const double fd = (1 / (1 + std::exp(-h)) - 1 / (1 + std::exp(h))) / (2 * h);
    EXPECT_NEAR(x.grad()[0], 0.25, 1e-15);
    EXPECT_NEAR(x.grad()[0], fd, 1e-9);
}

TEST(Activations, ReluSubgradientAtZeroIsZero) {
    auto x = Tensor::from({2}, {0.0, 1.0}, true);
    sum(relu(x)).backward();
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Backward, NonScalarOutputIsUsageError) {
    EXPECT_THROW(random_tensor({2, 2}, 1).backward(), UsageError);
}

TEST(GradCheck, ZeroParameterGraphPassesVacuously) {
    const auto r = grad_check([] { return Tensor::scalar(1.0); }, {});
    EXPECT_EQ(r.max_rel_error, 0.0);
    EXPECT_EQ(r.elements_checked, 0u);
}

TEST(GradCheck, DenseQuadraticLoss) {
    auto w = param("w", {4, 3}, 1), b = param("b", {3}, 2);
    const auto x = random_tensor({5, 4}, 3, false);
    const auto r = grad_check([&] { return sum_squares(dense(x, w.tensor, b.tensor)); }, {&w, &b});
    EXPECT_LE(r.max_rel_error, 1e-6);
    EXPECT_EQ(r.elements_checked, 15u);
}

TEST(GradCheck, KinkInsideStepIsNarrowed) {
    // relu(x) with x half a step above the kink: the plain central difference
    // reads 0.75 instead of 1.
    auto x = Parameter{"x", Tensor::from({1}, {5e-7}, true)};
    auto fn = [&] { return sum(relu(x.tensor)); };
    GradCheckOptions opt;
    opt.step = 1e-6;
    EXPECT_NEAR(grad_check(fn, {&x}, opt).max_rel_error, 0.25, 1e-6);
    opt.kink_retries = 2;
    const auto r = grad_check(fn, {&x}, opt);
    EXPECT_LE(r.max_rel_error, 1e-6);
    EXPECT_EQ(r.kinks_narrowed, 1u);
}

// Every op, one small graph each: loss = sum of squares of the op output.
TEST(GradCheck, EveryOpOnSmallShapes) {
    auto x1 = param("x1", {2, 7, 2}, 20), k1 = param("k1", {3, 2, 3}, 21), b1 = param("b1", {3}, 22);
    auto x2 = param("x2", {2, 5, 6, 2}, 23), k2 = param("k2", {3, 3, 2, 2}, 24), b2 = param("b2", {2}, 25);
    auto g = param("g", {3}, 26), be = param("be", {3}, 27);
    auto rm = Tensor::zeros({3}), rv = Tensor::from({3}, {1, 1, 1});
    auto a = param("a", {3, 4}, 28), c = param("c", {3, 2}, 29);

    const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"conv1d", [&] { return sum_squares(conv1d(x1.tensor, k1.tensor, b1.tensor)); }},
        {"conv2d", [&] { return sum_squares(conv2d(x2.tensor, k2.tensor, b2.tensor)); }},
        {"pool1d max", [&] { return sum_squares(pool1d(x1.tensor, PoolKind::max, 2)); }},
        {"pool1d avg", [&] { return sum_squares(pool1d(x1.tensor, PoolKind::avg, 2)); }},
        {"pool2d max", [&] { return sum_squares(pool2d(x2.tensor, PoolKind::max, 2)); }},
        {"pool2d avg", [&] { return sum_squares(pool2d(x2.tensor, PoolKind::avg, 2)); }},
        {"batchnorm",
         [&] {
             // Cubic readout: a plain sum of squares of a standardized output is
             // constant in the input and would test nothing.
             auto y = batchnorm(conv1d(x1.tensor, k1.tensor, b1.tensor), g.tensor, be.tensor, rm, rv, true);
             return sum(mul_scalar(sum_squares(add(y, sigmoid(y))), 0.5));
         }},
        {"sigmoid relu", [&] { return sum_squares(sigmoid(relu(a.tensor))); }},
        {"concat mean scale",
         [&] {
             auto cat = concat_features(a.tensor, c.tensor);
             return sum_squares(scale_rows(cat, sigmoid(mean_features(cat))));
         }},
        {"select column", [&] { return sum_squares(select_column(a.tensor, 2)); }},
        {"l2 normalize", [&] { return sum(l2_normalize_rows(a.tensor)); }},
        {"flatten reshape", [&] { return sum_squares(reshape(flatten(x2.tensor), {2, 60})); }},
    };
    const std::vector<Parameter*> params = {&x1, &k1, &b1, &x2, &k2, &b2, &g, &be, &a, &c};
    // Central differences carry ~1e-10 of absolute roundoff at the default
    // step, which swamps tiny gradients (batch norm cancels the conv bias
    // exactly). A wider step and a floor keep the check meaningful.
    GradCheckOptions opt;
    opt.step = 1e-4;
    opt.abs_floor = 1e-4;
    for (const auto& [name, fn] : cases) {
        const auto r = grad_check(fn, params, opt);
        EXPECT_LE(r.max_rel_error, 1e-6) << name << " worst " << r.worst_param << "[" << r.worst_index << "]";
    }
}

TEST(Determinism, RepeatedForwardBackwardIsBitIdentical) {
    auto run = [] {
        auto k = param("k", {3, 1, 4}, 1), b = param("b", {4}, 2);
        const auto x = random_tensor({3, 10, 1}, 3, false);
        sum_squares(relu(conv1d(x, k.tensor, b.tensor))).backward();
        return std::vector<double>(k.tensor.grad().begin(), k.tensor.grad().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(L2Normalize, ZeroRowMapsToFirstBasisVector) {
    std::vector<std::size_t> degenerate;
    const auto y = l2_normalize_rows(Tensor::from({2, 2}, {0.0, 0.0, 3.0, 4.0}), &degenerate);
    EXPECT_EQ(degenerate, (std::vector<std::size_t>{0}));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 0.0);
    EXPECT_NEAR(y[2], 0.6, 1e-15);
}

TEST(Checkpoint, RoundTripIsExactAndByteStable) {
    testing::TempDir dir;
    Parameter a = param("layer.a", {2, 3}, 1), b = param("layer.b", {4}, 2);
    save_checkpoint(dir / "c.bin", {&a, &b});
    const auto bytes = testing::read_bytes(dir / "c.bin");
    EXPECT_EQ(bytes.substr(0, 4), "MLCK");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointVersion);

    Parameter a2{"layer.a", Tensor::zeros({2, 3}), true}, b2{"layer.b", Tensor::zeros({4}), true};
    load_checkpoint(dir / "c.bin", {&b2, &a2});
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a2.tensor[i], a.tensor[i]);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(b2.tensor[i], b.tensor[i]);
    save_checkpoint(dir / "d.bin", {&a2, &b2});
    EXPECT_EQ(testing::read_bytes(dir / "d.bin"), bytes);
}

TEST(Checkpoint, ShapeMismatchAndMissingNamesFail) {
    testing::TempDir dir;
    Parameter a = param("a", {2, 3}, 1);
    save_checkpoint(dir / "c.bin", {&a});
    Parameter wrong{"a", Tensor::zeros({3, 2}), true};
    EXPECT_THROW(load_checkpoint(dir / "c.bin", {&wrong}), Error);
    Parameter other{"z", Tensor::zeros({2, 3}), true};
    EXPECT_THROW(load_checkpoint(dir / "c.bin", {&other}), Error);
    EXPECT_THROW(decode_checkpoint("MLCKjunk"), Error);
}

}  // namespace
}  // namespace maglive::nn
