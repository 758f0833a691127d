#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ecgen/conv.hpp"
#include "ecgen/gradcheck.hpp"
#include "ecgen/rng.hpp"

using namespace ecgen;

namespace {

// Independent nested-loop oracle for cross-correlation with stride/padding.
std::vector<double> conv_oracle(const std::vector<double>& x, size_t B, size_t Cin, size_t T,
                                const std::vector<double>& k, size_t Cout, size_t W, size_t stride,
                                size_t pad, size_t& Tout) {
    Tout = (T + 2 * pad - W) / stride + 1;
    std::vector<double> y(B * Cout * Tout, 0.0);
    for (size_t b = 0; b < B; ++b)
        for (size_t co = 0; co < Cout; ++co)
            for (size_t t = 0; t < Tout; ++t) {
                double acc = 0;
                for (size_t ci = 0; ci < Cin; ++ci)
                    for (size_t w = 0; w < W; ++w) {
                        long src = static_cast<long>(t * stride + w) - static_cast<long>(pad);
                        if (src < 0 || src >= static_cast<long>(T)) continue;
                        acc += x[(b * Cin + ci) * T + src] * k[(co * Cin + ci) * W + w];
                    }
                y[(b * Cout + co) * Tout + t] = acc;
            }
    return y;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(Conv, TinyHandExample) {
    Tensor x = Tensor::from({1, 1, 3}, {1, 2, 3});
    Tensor k = Tensor::from({1, 1, 2}, {1, 1});
    Tensor y = conv1d(x, k, 1, 0);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 2}));
    EXPECT_DOUBLE_EQ(y.data()[0], 3);
    EXPECT_DOUBLE_EQ(y.data()[1], 5);
}

TEST(Conv, ZeroKernelGivesZeroOutput) {
    Rng rng(1);
    Tensor x = Tensor::from({2, 3, 10}, random_vec(60, rng));
    Tensor k = Tensor::zeros({4, 3, 3});
    Tensor y = conv1d(x, k, 1, 1);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0);
}

TEST(Conv, MatchesNestedLoopOracle) {
    Rng rng(2);
    size_t B = 2, Cin = 3, T = 16, Cout = 4, W = 5, s = 2, p = 2;
    auto xv = random_vec(B * Cin * T, rng);
    auto kv = random_vec(Cout * Cin * W, rng);
    size_t Tout = 0;
    auto want = conv_oracle(xv, B, Cin, T, kv, Cout, W, s, p, Tout);
    EXPECT_EQ(Tout, 8u);
    Tensor y = conv1d(Tensor::from({B, Cin, T}, xv), Tensor::from({Cout, Cin, W}, kv), s, p);
    ASSERT_EQ(y.shape(), (Shape{B, Cout, Tout}));
    for (size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.data()[i], want[i], 1e-10);
}

TEST(Conv, OracleSweepOverGeometries) {
    Rng rng(3);
    struct Geo { size_t B, Cin, T, Cout, W, s, p; };
    for (Geo g : {Geo{1, 1, 7, 1, 3, 1, 0}, Geo{2, 2, 9, 3, 3, 1, 1}, Geo{1, 4, 12, 2, 5, 3, 2},
                  Geo{3, 1, 8, 2, 1, 1, 0}, Geo{1, 2, 6, 2, 4, 2, 3}}) {
        auto xv = random_vec(g.B * g.Cin * g.T, rng);
        auto kv = random_vec(g.Cout * g.Cin * g.W, rng);
        size_t Tout = 0;
        auto want = conv_oracle(xv, g.B, g.Cin, g.T, kv, g.Cout, g.W, g.s, g.p, Tout);
        Tensor y = conv1d(Tensor::from({g.B, g.Cin, g.T}, xv),
                          Tensor::from({g.Cout, g.Cin, g.W}, kv), g.s, g.p);
        ASSERT_EQ(y.shape(), (Shape{g.B, g.Cout, Tout}));
        for (size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.data()[i], want[i], 1e-10);
    }
}

TEST(Conv, ShapeErrors) {
    Tensor x = Tensor::from({1, 2, 8}, std::vector<double>(16, 1.0));
    Tensor k_badc = Tensor::from({1, 3, 3}, std::vector<double>(9, 1.0));
    EXPECT_THROW(conv1d(x, k_badc, 1, 0), ContractError);
    Tensor k_wide = Tensor::from({1, 2, 11}, std::vector<double>(22, 1.0));
    EXPECT_THROW(conv1d(x, k_wide, 1, 0), ContractError);
    EXPECT_THROW(conv1d(x, Tensor::from({1, 2, 3}, std::vector<double>(6, 1.0)), 0, 0),
                 ContractError);
}

TEST(Conv, TransposeShapeAndScatterOracle) {
    Rng rng(4);
    size_t B = 2, Cout = 3, Tin = 5, Cin = 2, W = 4, s = 2, p = 1;
    auto xv = random_vec(B * Cout * Tin, rng);
    auto kv = random_vec(Cout * Cin * W, rng);
    Tensor y = conv1d_transpose(Tensor::from({B, Cout, Tin}, xv), Tensor::from({Cout, Cin, W}, kv),
                                s, p);
    size_t Tout = (Tin - 1) * s + W - 2 * p;
    ASSERT_EQ(y.shape(), (Shape{B, Cin, Tout}));
    // Scatter oracle: each input element adds x*k into the padded output.
    std::vector<double> want(B * Cin * Tout, 0.0);
    for (size_t b = 0; b < B; ++b)
        for (size_t co = 0; co < Cout; ++co)
            for (size_t t = 0; t < Tin; ++t)
                for (size_t ci = 0; ci < Cin; ++ci)
                    for (size_t w = 0; w < W; ++w) {
                        long dst = static_cast<long>(t * s + w) - static_cast<long>(p);
                        if (dst < 0 || dst >= static_cast<long>(Tout)) continue;
                        want[(b * Cin + ci) * Tout + dst] +=
                            xv[(b * Cout + co) * Tin + t] * kv[(co * Cin + ci) * W + w];
                    }
    for (size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.data()[i], want[i], 1e-10);
}

TEST(Conv, TransposeIsExactAdjoint) {
    // <conv(x,k), y> == <x, convT(y,k)> for the same kernel tensor, on
    // geometries where the stride divides the padded span exactly (the only
    // ones the model uses; otherwise convT returns the minimal length and the
    // trailing conv-ignored samples are absent rather than zero).
    Rng rng(5);
    struct Geo { size_t T, W; int s, p; };
    for (Geo g : {Geo{14, 5, 1, 0}, Geo{14, 5, 3, 0}, Geo{14, 5, 1, 2}, Geo{14, 4, 2, 1},
                  Geo{16, 4, 4, 2}}) {
        size_t B = 2, Cin = 3, Cout = 4;
        ASSERT_EQ((g.T + 2 * g.p - g.W) % g.s, 0u);
        Tensor x = Tensor::from({B, Cin, g.T}, random_vec(B * Cin * g.T, rng));
        Tensor k = Tensor::from({Cout, Cin, g.W}, random_vec(Cout * Cin * g.W, rng));
        Tensor cx = conv1d(x, k, g.s, g.p);
        size_t Tout = cx.shape()[2];
        Tensor y = Tensor::from({B, Cout, Tout}, random_vec(B * Cout * Tout, rng));
        Tensor cty = conv1d_transpose(y, k, g.s, g.p);
        ASSERT_EQ(cty.shape(), x.shape());
        double lhs = dot(cx.data(), y.data());
        double rhs = dot(x.data(), cty.data());
        EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::fabs(lhs)));
    }
}

TEST(Conv, GradCheckNonDividingStride) {
    // Stride that does not divide the span: trailing input samples never feed
    // the output, so their gradient must be exactly zero and the rest must
    // match finite differences.
    Rng rng(7);
    Tensor x = Tensor::param({1, 1, 10}, random_vec(10, rng), "x");
    Tensor k = Tensor::param({2, 1, 3}, random_vec(6, rng), "k");
    auto f = [&] { return sum(square(conv1d(x, k, 2, 0))); };
    std::vector<Tensor> inputs{x, k};
    EXPECT_LT(grad_check(f, inputs, 1e-5), 1e-4);
    x.zero_grad();
    k.zero_grad();
    backward(f());
    EXPECT_DOUBLE_EQ(x.grad()[9], 0.0);  // position 9 unused: Tout=4, last tap at 8
    EXPECT_NE(x.grad()[8], 0.0);
}

TEST(Conv, GradCheckConvChain) {
    // conv1d -> sigmoid -> sum, gradients vs central differences.
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(300 + seed);
        Tensor x = Tensor::param({2, 2, 9}, random_vec(36, rng), "x");
        Tensor k = Tensor::param({3, 2, 3}, random_vec(18, rng), "k");
        auto f = [&] { return sum(sigmoid(conv1d(x, k, 2, 1))); };
        std::vector<Tensor> inputs{x, k};
        EXPECT_LT(grad_check(f, inputs, 1e-5), 1e-4) << "seed " << seed;
    }
}

TEST(Conv, GradCheckTransposeChain) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(400 + seed);
        Tensor x = Tensor::param({1, 3, 5}, random_vec(15, rng), "x");
        Tensor k = Tensor::param({3, 2, 4}, random_vec(24, rng), "k");
        auto f = [&] { return mean(square(tanh(conv1d_transpose(x, k, 2, 1)))); };
        std::vector<Tensor> inputs{x, k};
        EXPECT_LT(grad_check(f, inputs, 1e-5), 1e-4) << "seed " << seed;
    }
}

TEST(Conv, BiasAddBroadcastsPerChannel) {
    Tensor x = Tensor::param({1, 2, 3}, {0, 0, 0, 0, 0, 0}, "x");
    Tensor b = Tensor::param({2}, {1.5, -2.0}, "b");
    Tensor y = bias_add(x, b);
    EXPECT_DOUBLE_EQ(y.data()[0], 1.5);
    EXPECT_DOUBLE_EQ(y.data()[3], -2.0);
    backward(sum(y));
    EXPECT_DOUBLE_EQ(b.grad()[0], 3);
    EXPECT_DOUBLE_EQ(b.grad()[1], 3);
}

TEST(Conv, StackedGradCheck) {
    // Two conv layers with pooling, the shape of the encoder stem.
    Rng rng(6);
    Tensor x = Tensor::param({1, 2, 12}, random_vec(24, rng), "x");
    Tensor k1 = Tensor::param({3, 2, 5}, random_vec(30, rng), "k1");
    Tensor b1 = Tensor::param({3}, random_vec(3, rng), "b1");
    Tensor k2 = Tensor::param({2, 3, 3}, random_vec(18, rng), "k2");
    auto f = [&] {
        Tensor h = swish(bias_add(conv1d(x, k1, 1, 2), b1));
        Tensor g = conv1d(h, k2, 2, 1);
        return mean(square(g));
    };
    std::vector<Tensor> inputs{x, k1, b1, k2};
    EXPECT_LT(grad_check(f, inputs, 1e-5), 1e-4);
}
