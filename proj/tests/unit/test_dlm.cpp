#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ecgen/dlm.hpp"
#include "ecgen/gradcheck.hpp"
#include "ecgen/rng.hpp"

using namespace ecgen;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

double sigmoid_s(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Straight-line transcription of the head math from raw channel values,
// kept independent of the library's unpack/effective_params/likelihood.
struct RawOracle {
    const std::vector<double>& raw;  // [B, 33K, T] row-major
    size_t B, K, T;
    int bits;

    double ch(size_t b, size_t c, size_t t) const { return raw[(b * K * 33 + c) * T + t]; }
    double pi(size_t b, size_t m, size_t t) const { return ch(b, m * 33 + 0, t); }
    double mu(size_t b, size_t m, size_t l, size_t t) const { return ch(b, m * 33 + 1 + l, t); }
    double lam(size_t b, size_t m, size_t l, size_t t) const {
        double v = ch(b, m * 33 + 9 + l, t);
        return std::min(7.0, std::max(-7.0, v));
    }
    double beta(size_t b, size_t m, size_t t) const { return std::tanh(ch(b, m * 33 + 17, t)); }
    double alpha(size_t b, size_t m, size_t k, size_t j, size_t t) const {
        size_t flat = (k - 2) * (k - 1) / 2 + (j - 1);
        return std::tanh(ch(b, m * 33 + 18 + flat, t));
    }

    // Effective location/log-scale for head lead l and component m given
    // reference values for already-resolved leads.
    std::pair<double, double> eff(size_t b, size_t m, size_t l, size_t t,
                                  const std::array<double, 8>& ref) const {
        double mh = mu(b, m, l, t), lh = lam(b, m, l, t);
        if (l == 1) {
            double bt = beta(b, m, t);
            mh += bt * ref[0];
            lh += bt * lam(b, m, 0, t);
        } else if (l >= 3) {
            for (size_t j = 2; j < l; ++j) {
                double a = alpha(b, m, l - 1, j - 1, t);
                mh += a * ref[j];
                lh += a * lam(b, m, j, t);
            }
        }
        return {mh, lh};
    }

    double bin_mass(int bin, double mh, double lh) const {
        double width = 2.0 / (1 << bits);
        double c = -1.0 + (bin + 0.5) * width;
        double s = std::exp(lh);
        double upper = bin == (1 << bits) - 1 ? 1.0 : sigmoid_s((c + width / 2 - mh) / s);
        double lower = bin == 0 ? 0.0 : sigmoid_s((c - width / 2 - mh) / s);
        return upper - lower;
    }

    double log_likelihood(const QuantTargets& tg) const {
        double width = 2.0 / (1 << bits);
        double total = 0;
        for (size_t b = 0; b < B; ++b)
            for (size_t t = 0; t < T; ++t) {
                std::array<double, 8> ref{};
                for (size_t l = 0; l < 8; ++l)
                    ref[l] = -1.0 + (tg.bins[l][b * T + t] + 0.5) * width;
                double zmax = -1e300;
                for (size_t m = 0; m < K; ++m) zmax = std::max(zmax, pi(b, m, t));
                double z = 0;
                for (size_t m = 0; m < K; ++m) z += std::exp(pi(b, m, t) - zmax);
                double p = 0;
                for (size_t m = 0; m < K; ++m) {
                    double w = std::exp(pi(b, m, t) - zmax) / z;
                    double mass = 1;
                    for (size_t l = 0; l < 8; ++l) {
                        auto [mh, lh] = eff(b, m, l, t, ref);
                        mass *= bin_mass(tg.bins[l][b * T + t], mh, lh);
                    }
                    p += w * mass;
                }
                total += std::log(p);
            }
        return total;
    }
};

QuantTargets random_targets(size_t B, size_t T, int bits, Rng& rng) {
    QuantTargets tg;
    tg.B = B;
    tg.T = T;
    for (auto& v : tg.bins) {
        v.resize(B * T);
        for (auto& b : v) b = static_cast<int>(rng.below(1u << bits));
    }
    return tg;
}

}  // namespace

TEST(Dlm, UnpackZeroInit) {
    Tensor raw = Tensor::zeros({1, 33, 4});
    MixtureParams p = unpack(raw);
    EXPECT_EQ(p.K, 1u);
    ASSERT_EQ(p.pi.shape(), (Shape{1, 1, 4}));
    for (double v : p.pi.data()) EXPECT_DOUBLE_EQ(v, 0.0);
    for (size_t l = 0; l < 8; ++l) {
        for (double v : p.mu[l].data()) EXPECT_DOUBLE_EQ(v, 0.0);
        for (double v : p.lam[l].data()) EXPECT_DOUBLE_EQ(v, 0.0);  // s = exp(0) = 1
    }
    for (double v : p.beta.data()) EXPECT_DOUBLE_EQ(v, 0.0);
    for (auto& a : p.alpha)
        for (double v : a.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Dlm, UnpackChannelCount) {
    EXPECT_NO_THROW(unpack(Tensor::zeros({1, 330, 2})));
    try {
        unpack(Tensor::zeros({1, 329, 2}));
        FAIL() << "329 channels must be rejected";
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("33K"), std::string::npos);
    }
    EXPECT_THROW(unpack(Tensor::zeros({330, 2})), ContractError);
}

TEST(Dlm, UnpackRepackIdentity) {
    Rng rng(51);
    size_t B = 2, K = 3, T = 5;
    Tensor raw = Tensor::from({B, 33 * K, T}, random_vec(B * 33 * K * T, rng, 1.5));
    Tensor back = repack(unpack(raw));
    ASSERT_EQ(back.shape(), raw.shape());
    for (size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(back.data()[i], raw.data()[i], 1e-12);
}

TEST(Dlm, LambdaClampedAtUnpack) {
    std::vector<double> v(33, 0.0);
    v[9] = 25.0;    // lead I lambda
    v[10] = -30.0;  // lead III lambda
    MixtureParams p = unpack(Tensor::from({1, 33, 1}, v));
    EXPECT_DOUBLE_EQ(p.lam[0].data()[0], 7.0);
    EXPECT_DOUBLE_EQ(p.lam[1].data()[0], -7.0);
}

TEST(Dlm, EffectiveParamsDecoupledLimit) {
    Rng rng(52);
    size_t B = 1, K = 2, T = 3;
    std::vector<double> raw(B * 33 * K * T, 0.0);
    for (size_t m = 0; m < K; ++m)
        for (size_t o = 0; o < 17; ++o)  // pi, mu, lambda random; couplings stay 0
            for (size_t t = 0; t < T; ++t) raw[(m * 33 + o) * T + t] = rng.normal();
    MixtureParams p = unpack(Tensor::from({B, 33 * K, T}, raw));
    std::array<Tensor, 8> refs;
    refs[0] = Tensor::full({B, 1, T}, 0.7);
    for (size_t j = 2; j < 7; ++j) refs[j] = Tensor::full({B, 1, T}, -0.3);
    EffectiveParams e = effective_params(p, refs);
    for (size_t l = 0; l < 8; ++l)
        for (size_t i = 0; i < p.mu[l].size(); ++i) {
            EXPECT_DOUBLE_EQ(e.mu_hat[l].data()[i], p.mu[l].data()[i]);
            EXPECT_DOUBLE_EQ(e.lam_hat[l].data()[i], p.lam[l].data()[i]);
        }
}

TEST(Dlm, EffectiveParamsLinearForm) {
    // beta = 0.5, ref_I = 1.0, mu_III = 0.2 -> mu_hat_III = 0.7.
    std::vector<double> raw(33, 0.0);
    raw[2] = 0.2;                 // mu for head lead 1 (III)
    raw[17] = std::atanh(0.5);    // beta
    MixtureParams p = unpack(Tensor::from({1, 33, 1}, raw));
    std::array<Tensor, 8> refs;
    refs[0] = Tensor::full({1, 1, 1}, 1.0);
    for (size_t j = 2; j < 7; ++j) refs[j] = Tensor::zeros({1, 1, 1});
    EffectiveParams e = effective_params(p, refs);
    EXPECT_NEAR(e.mu_hat[1].data()[0], 0.7, 1e-12);
}

TEST(Dlm, EffectiveParamsMatchesFormulaOracle) {
    Rng rng(53);
    size_t B = 2, K = 2, T = 4;
    std::vector<double> rawv = random_vec(B * 33 * K * T, rng);
    RawOracle oracle{rawv, B, K, T, 8};
    MixtureParams p = unpack(Tensor::from({B, 33 * K, T}, rawv));
    std::array<double, 8> refv = {0.4, 0.0, -0.2, 0.1, 0.5, -0.6, 0.3, 0.0};
    std::array<Tensor, 8> refs;
    for (size_t l : {size_t(0), size_t(2), size_t(3), size_t(4), size_t(5), size_t(6)})
        refs[l] = Tensor::full({B, 1, T}, refv[l]);
    EffectiveParams e = effective_params(p, refs);
    for (size_t b = 0; b < B; ++b)
        for (size_t m = 0; m < K; ++m)
            for (size_t l = 0; l < 8; ++l)
                for (size_t t = 0; t < T; ++t) {
                    auto [mh, lh] = oracle.eff(b, m, l, t, refv);
                    size_t i = (b * K + m) * T + t;
                    EXPECT_NEAR(e.mu_hat[l].data()[i], mh, 1e-12);
                    EXPECT_NEAR(e.lam_hat[l].data()[i], lh, 1e-12);
                }
    // Idempotence: same inputs give bitwise-identical outputs.
    EffectiveParams e2 = effective_params(p, refs);
    for (size_t l = 0; l < 8; ++l)
        for (size_t i = 0; i < e.mu_hat[l].size(); ++i) {
            EXPECT_EQ(e.mu_hat[l].data()[i], e2.mu_hat[l].data()[i]);
            EXPECT_EQ(e.lam_hat[l].data()[i], e2.lam_hat[l].data()[i]);
        }
}

TEST(Dlm, MissingReferenceNamesLead) {
    MixtureParams p = unpack(Tensor::zeros({1, 33, 1}));
    std::array<Tensor, 8> refs;  // all undefined
    refs[0] = Tensor::zeros({1, 1, 1});
    try {
        effective_params(p, refs);  // V-lead refs missing
        FAIL();
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("V1"), std::string::npos);
    }
}

TEST(Dlm, MixtureWeightsNormalized) {
    Rng rng(54);
    Tensor raw = Tensor::from({1, 66, 3}, random_vec(66 * 3, rng, 2.0));
    MixtureParams p = unpack(raw);
    Tensor w = exp(log_softmax(p.pi, 1));
    for (size_t t = 0; t < 3; ++t) {
        double s = w.data()[0 * 3 + t] + w.data()[1 * 3 + t];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Dlm, BinMassSumsToOne) {
    // For fixed effective params the discretized mixture must sum to 1 over
    // all bins, open tails included.
    Rng rng(55);
    int bits = 4;
    size_t K = 3;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> muv = random_vec(K, rng, 2.0);  // deliberately off-grid
        std::vector<double> lamv = random_vec(K, rng, 1.5);
        std::vector<double> piv = random_vec(K, rng);
        Tensor mu = Tensor::from({1, K, 1}, muv);
        Tensor lam = Tensor::from({1, K, 1}, lamv);
        double zmax = *std::max_element(piv.begin(), piv.end());
        double z = 0;
        for (double v : piv) z += std::exp(v - zmax);
        QuantGrid grid(bits);
        double total = 0;
        for (int bin = 0; bin < grid.levels(); ++bin) {
            Tensor x = Tensor::full({1, 1, 1}, grid.dequantize(bin));
            std::vector<double> lo = {bin == 0 ? 1.0 : 0.0};
            std::vector<double> hi = {bin == grid.levels() - 1 ? 1.0 : 0.0};
            Tensor p = detail::bin_probability(mu, lam, x, lo, hi, grid.bin_width() / 2);
            for (size_t m = 0; m < K; ++m)
                total += std::exp(piv[m] - zmax) / z * p.data()[m];
        }
        EXPECT_NEAR(total, 1.0, 1e-9) << "trial " << trial;
    }
}

TEST(Dlm, PointMassLimit) {
    // K=1, tiny scale, mu at a bin center: that bin carries all the mass.
    int bits = 4;
    QuantGrid grid(bits);
    size_t B = 1, T = 1;
    std::vector<double> raw(33, 0.0);
    for (size_t l = 0; l < 8; ++l) {
        raw[1 + l] = grid.dequantize(5);  // mu at bin 5 center
        raw[9 + l] = -7.0;                // s = exp(-7)
    }
    QuantTargets tg;
    tg.B = B;
    tg.T = T;
    for (auto& v : tg.bins) v = {5};
    Tensor ll = log_likelihood(unpack(Tensor::from({1, 33, 1}, raw)), tg, bits);
    EXPECT_NEAR(ll.data()[0], 0.0, 1e-9);  // log 1
}

TEST(Dlm, LikelihoodMatchesExhaustiveOracle) {
    Rng rng(56);
    size_t B = 2, K = 2, T = 3;
    int bits = 4;
    std::vector<double> rawv = random_vec(B * 33 * K * T, rng);
    QuantTargets tg = random_targets(B, T, bits, rng);
    RawOracle oracle{rawv, B, K, T, bits};
    Tensor ll = log_likelihood(unpack(Tensor::from({B, 33 * K, T}, rawv)), tg, bits);
    ASSERT_EQ(ll.shape(), (Shape{B}));
    // The oracle accumulates over records and timesteps jointly; compare sums
    // and per-record values.
    double total = ll.data()[0] + ll.data()[1];
    EXPECT_NEAR(total, oracle.log_likelihood(tg), 1e-10);
    RawOracle o1{rawv, B, K, T, bits};
    QuantTargets tg0;
    tg0.B = 1;
    tg0.T = T;
    std::vector<double> raw0(33 * K * T);
    std::copy(rawv.begin(), rawv.begin() + 33 * K * T, raw0.begin());
    for (size_t l = 0; l < 8; ++l)
        tg0.bins[l] = std::vector<int>(tg.bins[l].begin(), tg.bins[l].begin() + T);
    RawOracle or0{raw0, 1, K, T, bits};
    Tensor ll0 = log_likelihood(unpack(Tensor::from({1, 33 * K, T}, raw0)), tg0, bits);
    EXPECT_NEAR(ll0.data()[0], or0.log_likelihood(tg0), 1e-10);
    EXPECT_NEAR(ll0.data()[0], ll.data()[0], 1e-10);
}

TEST(Dlm, LikelihoodGradientMatchesFiniteDifferences) {
    Rng rng(57);
    size_t B = 1, K = 2, T = 2;
    int bits = 4;
    Tensor raw = Tensor::param({B, 33 * K, T}, random_vec(B * 33 * K * T, rng, 0.5), "head");
    QuantTargets tg = random_targets(B, T, bits, rng);
    auto f = [&] { return sum(log_likelihood(unpack(raw), tg, bits)); };
    std::vector<Tensor> inputs{raw};
    EXPECT_LT(grad_check(f, inputs, 1e-5), 1e-4);
}

TEST(Dlm, ZeroMassRaisesNumericError) {
    // One component whose location is impossibly far from the target at tiny
    // scale: every component underflows to zero mass.
    int bits = 8;
    std::vector<double> raw(33, 0.0);
    for (size_t l = 0; l < 8; ++l) {
        raw[1 + l] = 400.0;  // mu far outside [-1,1]
        raw[9 + l] = -7.0;
    }
    QuantTargets tg;
    tg.B = 1;
    tg.T = 1;
    for (auto& v : tg.bins) v = {128};
    try {
        log_likelihood(unpack(Tensor::from({1, 33, 1}, raw)), tg, bits);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("record 0"), std::string::npos);
        EXPECT_NE(msg.find("timestep 0"), std::string::npos);
    }
}

TEST(Dlm, SampleMedianEqualsEffectiveLocation) {
    // u = 0.5 for every draw at tau = 1: logistic noise is zero, so each lead
    // lands exactly on its effective location resolved through the cascade.
    Rng rng(58);
    size_t B = 1, K = 1, T = 4;
    std::vector<double> rawv = random_vec(33 * T, rng, 0.2);
    MixtureParams p = unpack(Tensor::from({B, 33 * K, T}, rawv));
    CascadeSample s = sample_cascade_with(p, 1.0, [] { return 0.5; });
    RawOracle oracle{rawv, B, K, T, 8};
    for (size_t t = 0; t < T; ++t) {
        std::array<double, 8> ref{};
        for (size_t l = 0; l < 8; ++l) {
            auto [mh, lh] = oracle.eff(0, 0, l, t, ref);
            EXPECT_DOUBLE_EQ(s.leads[l][t], mh) << "lead " << l << " t " << t;
            ref[l] = mh;  // small raw values: no clamping in this test
        }
    }
}

TEST(Dlm, SampleUnitLogit) {
    // K=1, mu=0, s=1, u = e/(1+e): x = log(u/(1-u)) = 1.
    MixtureParams p = unpack(Tensor::zeros({1, 33, 1}));
    double u = std::numbers::e / (1.0 + std::numbers::e);
    CascadeSample s = sample_cascade_with(p, 1.0, [u] { return u; });
    EXPECT_NEAR(s.leads[0][0], 1.0, 1e-12);
}

TEST(Dlm, SampleDrawOrderIsDocumented) {
    // Per (record, timestep): one component draw then one draw per lead.
    size_t draws = 0;
    MixtureParams p = unpack(Tensor::zeros({2, 33, 3}));
    sample_cascade_with(p, 1.0, [&draws] {
        ++draws;
        return 0.5;
    });
    EXPECT_EQ(draws, 2u * 3u * 9u);
}

TEST(Dlm, SampleMomentsMatchLogisticFormulas) {
    // K=1, decoupled, constant params: sample mean ~ mu (3 SE) and variance
    // ~ s^2 pi^2 / 3 (5%).
    size_t N = 100000;
    double mu0 = 0.2, lam0 = std::log(0.1);
    std::vector<double> raw(33 * N, 0.0);
    for (size_t l = 0; l < 8; ++l)
        for (size_t t = 0; t < N; ++t) {
            raw[(1 + l) * N + t] = mu0;
            raw[(9 + l) * N + t] = lam0;
        }
    MixtureParams p = unpack(Tensor::from({1, 33, N}, raw));
    CascadeSample s = sample_cascade(p, 4242, 1.0);
    double s0 = 0.1;
    double var_expect = s0 * s0 * std::numbers::pi * std::numbers::pi / 3.0;
    for (size_t l = 0; l < 8; ++l) {
        double mean = 0;
        for (double v : s.leads[l]) mean += v;
        mean /= N;
        double var = 0;
        for (double v : s.leads[l]) var += (v - mean) * (v - mean);
        var /= N - 1;
        double se = std::sqrt(var_expect / N);
        EXPECT_NEAR(mean, mu0, 3 * se) << "lead " << l;
        EXPECT_NEAR(var, var_expect, 0.05 * var_expect) << "lead " << l;
    }
}

TEST(Dlm, DecoupledSamplesUncorrelated) {
    // All coupling channels zero: empirical cross-lead correlation vanishes.
    size_t N = 100000;
    std::vector<double> raw(33 * N, 0.0);
    for (size_t l = 0; l < 8; ++l)
        for (size_t t = 0; t < N; ++t) raw[(9 + l) * N + t] = std::log(0.15);
    MixtureParams p = unpack(Tensor::from({1, 33, N}, raw));
    CascadeSample s = sample_cascade(p, 777, 1.0);
    for (size_t a : {size_t(0), size_t(1), size_t(4)})
        for (size_t b : {size_t(2), size_t(7)}) {
            double ma = 0, mb = 0;
            for (size_t i = 0; i < N; ++i) {
                ma += s.leads[a][i];
                mb += s.leads[b][i];
            }
            ma /= N;
            mb /= N;
            double cov = 0, va = 0, vb = 0;
            for (size_t i = 0; i < N; ++i) {
                double da = s.leads[a][i] - ma, db = s.leads[b][i] - mb;
                cov += da * db;
                va += da * da;
                vb += db * db;
            }
            double rho = cov / std::sqrt(va * vb);
            EXPECT_LT(std::fabs(rho), 0.02) << "leads " << a << "," << b;
        }
}

TEST(Dlm, SamplingIsSeedReproducible) {
    Rng rng(59);
    MixtureParams p = unpack(Tensor::from({2, 66, 8}, random_vec(2 * 66 * 8, rng)));
    CascadeSample a = sample_cascade(p, 123, 0.8);
    CascadeSample b = sample_cascade(p, 123, 0.8);
    CascadeSample c = sample_cascade(p, 124, 0.8);
    for (size_t l = 0; l < 8; ++l) {
        EXPECT_EQ(a.leads[l], b.leads[l]);
    }
    bool any_diff = false;
    for (size_t l = 0; l < 8; ++l) any_diff = any_diff || a.leads[l] != c.leads[l];
    EXPECT_TRUE(any_diff);
    EXPECT_THROW(sample_cascade(p, 1, 0.0), ContractError);
}

TEST(Dlm, SamplesClampedToUnitRange) {
    std::vector<double> raw(33, 0.0);
    for (size_t l = 0; l < 8; ++l) raw[1 + l] = 5.0;  // mu far above 1
    MixtureParams p = unpack(Tensor::from({1, 33, 1}, raw));
    CascadeSample s = sample_cascade(p, 9, 1.0);
    for (size_t l = 0; l < 8; ++l) EXPECT_LE(std::fabs(s.leads[l][0]), 1.0);
}

TEST(Dlm, AlphaIndexLayout) {
    EXPECT_EQ(alpha_index(2, 1), 0u);
    EXPECT_EQ(alpha_index(3, 1), 1u);
    EXPECT_EQ(alpha_index(3, 2), 2u);
    EXPECT_EQ(alpha_index(6, 5), 14u);
    EXPECT_THROW(alpha_index(7, 1), ContractError);
    EXPECT_THROW(alpha_index(2, 2), ContractError);
}
