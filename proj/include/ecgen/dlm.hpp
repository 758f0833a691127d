#pragma once

// Mixture-of-discretized-logistics output head over 8 ECG leads with a
// cross-lead coupling cascade.
//
// Lead order inside the head: {I, III, V1..V6} (cascade resolution order).
// Raw head layout, channel = m*33 + o for component m:
//   o = 0        mixture logit pi_m
//   o = 1..8     location mu per lead
//   o = 9..16    log-scale lambda per lead (clamped to [-7, 7])
//   o = 17       beta (III <- I), tanh-squashed
//   o = 18..32   alpha (Vk <- Vj, j < k), tanh-squashed, ordered
//                (2,1),(3,1),(3,2),(4,1),(4,2),(4,3),(5,1..4),(6,1..5)
//
// Couplings: location offsets use reference lead *values* (ground truth when
// training, already-sampled when generating); scale offsets act in log-scale
// space on the raw lambda of the reference lead, keeping s = exp(lambda) > 0.

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "ecgen/ecg.hpp"
#include "ecgen/rng.hpp"
#include "ecgen/tensor.hpp"

namespace ecgen {

inline constexpr size_t kHeadLeads = 8;
inline constexpr size_t kAlphaCount = 15;
inline constexpr size_t kChannelsPerComponent = 1 + 2 * kHeadLeads + 1 + kAlphaCount;  // 33

// Flat index of the coefficient coupling chest lead k (2-based, 2..6) to
// chest lead j < k; both indices count V-leads from 1.
inline size_t alpha_index(size_t k, size_t j) {
    if (k < 2 || k > 6 || j < 1 || j >= k)
        throw ContractError(strf("alpha_index: no coefficient V%zu <- V%zu", k, j));
    return (k - 2) * (k - 1) / 2 + (j - 1);
}

struct MixtureParams {
    size_t K = 0;
    Tensor pi;                            // [B,K,T] mixture logits
    std::array<Tensor, kHeadLeads> mu;    // [B,K,T] per lead
    std::array<Tensor, kHeadLeads> lam;   // [B,K,T] per lead, clamped
    Tensor beta;                          // [B,K,T], in (-1,1)
    std::array<Tensor, kAlphaCount> alpha;  // [B,K,T], in (-1,1)

    size_t batch() const { return pi.dim(0); }
    size_t steps() const { return pi.dim(2); }
};

// Splits the raw head tensor [B, 33K, T] into named parameter groups.
inline MixtureParams unpack(const Tensor& raw) {
    if (raw.rank() != 3)
        throw ContractError(strf("unpack: raw head must be [B,C,T], got %s",
                                 shape_str(raw.shape()).c_str()));
    size_t C = raw.dim(1);
    if (C == 0 || C % kChannelsPerComponent != 0)
        throw ContractError(strf("unpack: raw head has %zu channels, expected 33K", C));
    MixtureParams p;
    p.K = C / kChannelsPerComponent;
    auto pick = [&](size_t offset) {
        std::vector<size_t> idx(p.K);
        for (size_t m = 0; m < p.K; ++m) idx[m] = m * kChannelsPerComponent + offset;
        return gather_channels(raw, idx);
    };
    p.pi = pick(0);
    for (size_t l = 0; l < kHeadLeads; ++l) {
        p.mu[l] = pick(1 + l);
        p.lam[l] = clamp(pick(1 + kHeadLeads + l), -7.0, 7.0);
    }
    p.beta = tanh(pick(1 + 2 * kHeadLeads));
    for (size_t j = 0; j < kAlphaCount; ++j) p.alpha[j] = tanh(pick(2 + 2 * kHeadLeads + j));
    return p;
}

// Inverse of unpack for already-squashed parameter values (test utility and
// oracle builder; atanh recovers the raw coupling channels).
inline Tensor repack(const MixtureParams& p) {
    size_t B = p.batch(), K = p.K, T = p.steps();
    std::vector<double> raw(B * K * kChannelsPerComponent * T, 0.0);
    auto put = [&](const Tensor& t, size_t offset, bool invert_tanh) {
        for (size_t b = 0; b < B; ++b)
            for (size_t m = 0; m < K; ++m)
                for (size_t i = 0; i < T; ++i) {
                    double v = t.data()[(b * K + m) * T + i];
                    if (invert_tanh) v = std::atanh(v);
                    size_t c = m * kChannelsPerComponent + offset;
                    raw[(b * K * kChannelsPerComponent + c) * T + i] = v;
                }
    };
    put(p.pi, 0, false);
    for (size_t l = 0; l < kHeadLeads; ++l) {
        put(p.mu[l], 1 + l, false);
        put(p.lam[l], 1 + kHeadLeads + l, false);
    }
    put(p.beta, 1 + 2 * kHeadLeads, true);
    for (size_t j = 0; j < kAlphaCount; ++j) put(p.alpha[j], 2 + 2 * kHeadLeads + j, true);
    return Tensor::from({B, K * kChannelsPerComponent, T}, std::move(raw));
}

struct EffectiveParams {
    std::array<Tensor, kHeadLeads> mu_hat;   // [B,K,T]
    std::array<Tensor, kHeadLeads> lam_hat;  // [B,K,T]
};

// Resolves the coupling cascade. refs[i] carries the *values* of head lead i
// as [B,1,T]; slots required: 0 (lead I) and 2..6 (V1..V5). During training
// these are ground-truth values (teacher forcing); during sampling, the
// already-sampled leads.
inline EffectiveParams effective_params(const MixtureParams& p,
                                        const std::array<Tensor, kHeadLeads>& refs) {
    auto need = [&](size_t i) -> const Tensor& {
        if (!refs[i].defined())
            throw ContractError(strf("effective_params: missing reference for lead %s",
                                     i == 0 ? "I" : strf("V%zu", i - 1).c_str()));
        return refs[i];
    };
    EffectiveParams e;
    // Lead I: independent.
    e.mu_hat[0] = p.mu[0];
    e.lam_hat[0] = p.lam[0];
    // Lead III <- I.
    e.mu_hat[1] = add(p.mu[1], mul(p.beta, need(0)));
    e.lam_hat[1] = add(p.lam[1], mul(p.beta, p.lam[0]));
    // V1 (head index 2): independent.
    e.mu_hat[2] = p.mu[2];
    e.lam_hat[2] = p.lam[2];
    // Vk, k = 2..6 (head index k+1): coupled to V1..V(k-1).
    for (size_t k = 3; k < kHeadLeads; ++k) {
        Tensor mu_acc = p.mu[k];
        Tensor lam_acc = p.lam[k];
        for (size_t j = 2; j < k; ++j) {
            const Tensor& a = p.alpha[alpha_index(k - 1, j - 1)];
            mu_acc = add(mu_acc, mul(a, need(j)));
            lam_acc = add(lam_acc, mul(a, p.lam[j]));
        }
        e.mu_hat[k] = mu_acc;
        e.lam_hat[k] = lam_acc;
    }
    return e;
}

// Quantized 8-lead training targets; bins[l] is row-major [B,T].
struct QuantTargets {
    size_t B = 0, T = 0;
    std::array<std::vector<int>, kHeadLeads> bins;

    void check(int bits) const {
        int hi = (1 << bits) - 1;
        for (size_t l = 0; l < kHeadLeads; ++l) {
            if (bins[l].size() != B * T)
                throw ContractError(strf("targets: lead %zu has %zu bins, expected %zu", l,
                                         bins[l].size(), B * T));
            for (int b : bins[l])
                if (b < 0 || b > hi)
                    throw ContractError(strf("targets: bin %d outside [0, %d]", b, hi));
        }
    }
};

namespace detail {

// Dequantized target values as a [B,1,T] constant.
inline Tensor target_values(const QuantTargets& t, size_t lead, int bits) {
    QuantGrid grid(bits);
    std::vector<double> v(t.B * t.T);
    for (size_t i = 0; i < v.size(); ++i) v[i] = grid.dequantize(t.bins[lead][i]);
    return Tensor::from({t.B, 1, t.T}, std::move(v));
}

// Per-bin logistic mass between the two CDF evaluation points, with the
// numerically accurate sigmoid pairing chosen per element and open tails
// applied via constant masks.
inline Tensor bin_probability(const Tensor& mu_hat, const Tensor& lam_hat, const Tensor& x,
                              const std::vector<double>& lo_mask,
                              const std::vector<double>& hi_mask, double half_bin) {
    Tensor inv_s = exp(neg(lam_hat));                       // [B,K,T]
    Tensor centered = sub(x, mu_hat);                       // [B,K,T] via broadcast
    Tensor plus = mul(shift(centered, half_bin), inv_s);    // upper CDF argument
    Tensor minus = mul(shift(centered, -half_bin), inv_s);  // lower CDF argument
    // sigma(plus) - sigma(minus) == sigma(-minus) - sigma(-plus); pick the side
    // whose operands are not both saturated at 1.
    std::vector<double> sel(plus.size());
    for (size_t i = 0; i < sel.size(); ++i)
        sel[i] = (plus.data()[i] + minus.data()[i] > 0) ? 1.0 : 0.0;
    Tensor use_neg = Tensor::from(plus.shape(), std::move(sel));
    Tensor direct = sub(sigmoid(plus), sigmoid(minus));
    Tensor mirrored = sub(sigmoid(neg(minus)), sigmoid(neg(plus)));
    Tensor p = add(mul(use_neg, mirrored), mul(shift(neg(use_neg), 1.0), direct));
    // Open tails: bottom bin integrates from -inf (lower CDF -> 0), top bin to
    // +inf (upper CDF -> 1). Masks are [B,1,T] and broadcast across components.
    size_t B = x.dim(0), T = x.dim(2);
    Tensor lo = Tensor::from({B, 1, T}, lo_mask);
    Tensor hi = Tensor::from({B, 1, T}, hi_mask);
    Tensor cdf_minus = sigmoid(minus);
    Tensor cdf_plus = sigmoid(plus);
    // p_tail-corrected = p + lo*(sigma(minus)) ... assembled explicitly:
    //   bottom bin: mass = sigma(plus)            = p + sigma(minus)
    //   top bin:    mass = 1 - sigma(minus)       = p + (1 - sigma(plus))
    p = add(p, mul(lo, cdf_minus));
    p = add(p, mul(hi, shift(neg(cdf_plus), 1.0)));
    return p;
}

}  // namespace detail

// Teacher-forced log-likelihood of quantized 8-lead targets, one scalar per
// record: sum_t log sum_m softmax(pi)_m prod_l P(bin_l | mu_hat, s_hat, m).
inline Tensor log_likelihood(const MixtureParams& params, const QuantTargets& target, int bits) {
    target.check(bits);
    if (params.batch() != target.B || params.steps() != target.T)
        throw ContractError(strf("log_likelihood: params [B=%zu,T=%zu] vs targets [B=%zu,T=%zu]",
                                 params.batch(), params.steps(), target.B, target.T));
    QuantGrid grid(bits);
    double half_bin = grid.bin_width() / 2.0;
    int top = grid.levels() - 1;

    std::array<Tensor, kHeadLeads> refs;
    refs[0] = detail::target_values(target, 0, bits);
    for (size_t j = 2; j < kHeadLeads - 1; ++j) refs[j] = detail::target_values(target, j, bits);
    EffectiveParams eff = effective_params(params, refs);

    Tensor log_prob_sum;  // sum over leads of log per-bin mass, [B,K,T]
    for (size_t l = 0; l < kHeadLeads; ++l) {
        Tensor x = detail::target_values(target, l, bits);
        std::vector<double> lo_mask(target.B * target.T), hi_mask(target.B * target.T);
        for (size_t i = 0; i < lo_mask.size(); ++i) {
            lo_mask[i] = target.bins[l][i] == 0 ? 1.0 : 0.0;
            hi_mask[i] = target.bins[l][i] == top ? 1.0 : 0.0;
        }
        Tensor p = detail::bin_probability(eff.mu_hat[l], eff.lam_hat[l], x, lo_mask, hi_mask,
                                           half_bin);
        Tensor lp = safe_log(p);
        log_prob_sum = l == 0 ? lp : add(log_prob_sum, lp);
    }
    Tensor per_step = logsumexp(add(log_softmax(params.pi, 1), log_prob_sum), 1);  // [B,1,T]
    for (size_t b = 0; b < target.B; ++b)
        for (size_t t = 0; t < target.T; ++t)
            if (std::isinf(per_step.data()[b * target.T + t]))
                throw NumericError(strf(
                    "log_likelihood: zero probability mass at record %zu, timestep %zu", b, t));
    return reshape(sum_axis(per_step, 2), {target.B});  // [B]
}

// Continuous 8-lead samples in head-lead order, values clamped to [-1,1].
struct CascadeSample {
    size_t B = 0, T = 0;
    std::array<std::vector<double>, kHeadLeads> leads;  // row-major [B,T]
};

// Inverse-CDF sampler over the cascade. The uniform source supplies every
// draw in a documented order: per record, per timestep: one component draw,
// then one draw per lead in cascade order. Values in [0,1) are mapped away
// from {0,1} for the logit.
inline CascadeSample sample_cascade_with(const MixtureParams& params, double temperature,
                                         const std::function<double()>& uniform) {
    if (!(temperature > 0)) throw ContractError("sample_cascade: temperature must be positive");
    size_t B = params.batch(), K = params.K, T = params.steps();
    CascadeSample out;
    out.B = B;
    out.T = T;
    for (auto& v : out.leads) v.assign(B * T, 0.0);

    std::vector<double> probs(K);
    for (size_t b = 0; b < B; ++b)
        for (size_t t = 0; t < T; ++t) {
            // Shared component from softmax(pi / tau).
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t m = 0; m < K; ++m)
                mx = std::max(mx, params.pi.data()[(b * K + m) * T + t] / temperature);
            double z = 0;
            for (size_t m = 0; m < K; ++m) {
                probs[m] = std::exp(params.pi.data()[(b * K + m) * T + t] / temperature - mx);
                z += probs[m];
            }
            double u0 = uniform() * z;
            size_t m = 0;
            double acc = 0;
            for (; m + 1 < K; ++m) {
                acc += probs[m];
                if (u0 < acc) break;
            }

            auto at = [&](const Tensor& p) { return p.data()[(b * K + m) * T + t]; };
            std::array<double, kHeadLeads> val{}, lam_raw{};
            for (size_t l = 0; l < kHeadLeads; ++l) lam_raw[l] = at(params.lam[l]);
            for (size_t l = 0; l < kHeadLeads; ++l) {
                double mu_hat = at(params.mu[l]);
                double lam_hat = lam_raw[l];
                if (l == 1) {
                    double beta = at(params.beta);
                    mu_hat += beta * val[0];
                    lam_hat += beta * lam_raw[0];
                } else if (l >= 3) {
                    for (size_t j = 2; j < l; ++j) {
                        double a = at(params.alpha[alpha_index(l - 1, j - 1)]);
                        mu_hat += a * val[j];
                        lam_hat += a * lam_raw[j];
                    }
                }
                double u = uniform();
                u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
                double x = mu_hat + std::exp(lam_hat) * temperature * std::log(u / (1.0 - u));
                val[l] = std::min(1.0, std::max(-1.0, x));
                out.leads[l][b * T + t] = val[l];
            }
        }
    return out;
}

inline CascadeSample sample_cascade(const MixtureParams& params, uint64_t seed,
                                    double temperature) {
    Rng rng(seed);
    return sample_cascade_with(params, temperature, [&rng] { return rng.uniform(); });
}

}  // namespace ecgen
