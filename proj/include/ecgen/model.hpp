#pragma once

// Conditional hierarchical VAE over 8-lead ECG signals.
//
// Encoder: conv stem (+ condition projection), pre-process cells, then per
// scale residual cells with stride-2 downsampling; activations at each scale
// feed the matching top-down groups.
// Decoder: trainable top feature h (+ condition projection), condition cells,
// then per scale a chain of latent groups — each with a learned prior, a
// residual posterior (deltas from the encoder features), and a projection of
// the sampled z back into the state — followed by transposed-conv upsampling;
// post-process cells and a 1x1 head producing the 33K mixture channels.
//
// Latent scales run coarsest to finest; groups_per_scale is listed in that
// order. All sampling is funneled through one seeded generator per call, so
// training and generation are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ecgen/dlm.hpp"
#include "ecgen/ecg.hpp"
#include "ecgen/nn.hpp"
#include "ecgen/optim.hpp"

namespace ecgen {

// Elementwise KL(q || p) between diagonal Gaussians given means and log
// standard deviations: (lam_p - lam_q) + (exp(2 lam_q) + (mu_q - mu_p)^2) /
// (2 exp(2 lam_p)) - 1/2. Exactly zero where q == p.
inline Tensor kl_diag_gaussian(const Tensor& mu_q, const Tensor& lam_q, const Tensor& mu_p,
                               const Tensor& lam_p) {
    Tensor dmu = sub(mu_q, mu_p);
    return add(sub(lam_p, lam_q),
               shift(mul(scale(add(exp(scale(lam_q, 2.0)), square(dmu)), 0.5),
                         exp(scale(lam_p, -2.0))),
                     -0.5));
}

struct ModelConfig {
    size_t scales = 3;
    std::vector<size_t> groups = {2, 3, 4};  // per scale, coarsest first
    size_t z_channels = 4;
    size_t width = 32;
    size_t pre_cells = 1;
    size_t post_cells = 1;
    size_t cond_cells = 1;
    size_t mixture = 10;  // K
    int bits = 8;
    size_t T = 512;
    size_t cond_dim = 64;
    uint16_t sampling_rate = 100;

    size_t top_length() const { return T >> (scales - 1); }

    void validate(size_t vocab_size) const {
        if (scales == 0 || groups.size() != scales)
            throw ContractError(strf("config: %zu scales but %zu group counts", scales,
                                     groups.size()));
        for (size_t g : groups)
            if (g == 0) throw ContractError("config: every scale needs at least one group");
        if (width == 0 || z_channels == 0 || mixture == 0 || cond_dim == 0)
            throw ContractError("config: channel counts must be positive");
        if (pre_cells == 0 || post_cells == 0 || cond_cells == 0)
            throw ContractError("config: cell counts must be at least 1");
        if (bits < 1 || bits > 16) throw ContractError("config: bits outside [1, 16]");
        size_t div = size_t(1) << (scales - 1);
        if (T == 0 || T % div != 0)
            throw ContractError(strf("config: signal length %zu not divisible by 2^(scales-1) = %zu",
                                     T, div));
        if (vocab_size == 0) throw ContractError("config: empty class vocabulary");
        if (sampling_rate == 0) throw ContractError("config: sampling rate must be positive");
    }
};

// Per-group latent bookkeeping produced by the top-down pass.
struct GroupStats {
    Tensor mu_p, lam_p;  // prior
    Tensor mu_q, lam_q;  // posterior (train mode only)
    Tensor z;
    Tensor kl;  // scalar: sum over latent dims, mean over batch (train mode)
};

struct TopDownResult {
    std::vector<GroupStats> groups;
    Tensor head_raw;  // [B, 33K, T]
};

struct ElboResult {
    Tensor nll;               // scalar, mean over batch
    std::vector<Tensor> kl;   // scalar per group
    Tensor total;             // nll + kl_weight * sum(kl)
    double kl_weight = 1.0;
};

struct EpochStats {
    double nll = 0, kl = 0, total = 0;
};

// Thrown when training hits a non-finite loss; carries what finished.
struct TrainingDiverged : std::runtime_error {
    std::vector<EpochStats> history;
    TrainingDiverged(const std::string& msg, std::vector<EpochStats> h)
        : std::runtime_error(msg), history(std::move(h)) {}
};

struct TrainOptions {
    int epochs = 30;
    size_t batch = 4;
    double lr = 1e-3;
    double weight_decay = 0.01;
    int lr_warmup = 5;
    int kl_warmup = 10;
    // Per-group KL floor in nats ("free bits"): groups below the floor
    // contribute a constant to the objective, so the penalty neither pushes
    // them to zero (posterior collapse) nor lets them grow unchecked. 0
    // disables the floor and optimizes the plain ELBO. Without the floor,
    // desk-scale runs collapse to a per-timestep marginal fit and sampled
    // signals carry no temporal structure.
    double free_bits = 8.0;
    double clip = 200.0;
    uint64_t seed = 1;
};

class CnvaeModel {
public:
    CnvaeModel(ModelConfig cfg, ClassVocabulary vocab, uint64_t init_seed)
        : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
        cfg_.validate(vocab_.size());
        for (Lead l : kEightLeads) norm_.range[l] = {-1.0, 1.0};
        Rng rng(derive_seed(init_seed, 0x11));
        build(rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const ClassVocabulary& vocabulary() const { return vocab_; }
    const LeadNorm& norm() const { return norm_; }
    void set_norm(LeadNorm n) { norm_ = std::move(n); }
    ParamStore& params() { return ps_; }
    const ParamStore& params() const { return ps_; }
    const std::vector<EpochStats>& history() const { return history_; }
    void set_history(std::vector<EpochStats> h) { history_ = std::move(h); }

    // Sum of embedding rows over set label bits -> [B, cond_dim].
    Tensor embed_condition(const std::vector<uint32_t>& labels) const {
        std::vector<std::vector<size_t>> rows(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) {
            uint32_t mask = labels[i];
            for (size_t bit = 0; mask != 0; ++bit, mask >>= 1)
                if (mask & 1u) {
                    if (bit >= vocab_.size())
                        throw ContractError(strf("label bit %zu outside vocabulary of %zu", bit,
                                                 vocab_.size()));
                    rows[i].push_back(bit);
                }
        }
        return rows_sum(embedding_, rows);
    }

    // Bottom-up features, one activation per scale (index 0 = finest).
    std::vector<Tensor> encode(const Tensor& x, const Tensor& c) const {
        if (x.rank() != 3 || x.dim(1) != kHeadLeads)
            throw ContractError(strf("encode: input must be [B,8,T], got %s",
                                     shape_str(x.shape()).c_str()));
        if (x.dim(2) != cfg_.T)
            throw ContractError(strf("encode: signal length %zu, model expects %zu (divisible by %zu)",
                                     x.dim(2), cfg_.T, size_t(1) << (cfg_.scales - 1)));
        Tensor hcur = add(stem_(x), reshape(cond_enc_(c), {x.dim(0), cfg_.width, 1}));
        for (const auto& cell : pre_) hcur = cell(hcur);
        std::vector<Tensor> pyramid;
        for (size_t s = 0; s < cfg_.scales; ++s) {
            hcur = enc_cells_[s](hcur);
            pyramid.push_back(hcur);
            if (s + 1 < cfg_.scales) hcur = enc_down_[s](hcur);
        }
        return pyramid;
    }

    enum class Mode { Train, Generate };

    // Top-down pass. Train mode consumes the encoder pyramid and an rng for
    // the reparameterized posterior draws; generate mode samples the prior
    // with temperature tau scaling the standard deviation.
    TopDownResult top_down(const std::vector<Tensor>* pyramid, const Tensor& c, Mode mode,
                           Rng* rng, double tau = 1.0) const {
        if (mode == Mode::Train && (pyramid == nullptr || rng == nullptr))
            throw ContractError("top_down: train mode needs the encoder pyramid and an rng");
        if (mode == Mode::Generate && pyramid != nullptr)
            throw ContractError("top_down: generate mode takes no encoder pyramid");
        if (mode == Mode::Generate && rng == nullptr)
            throw ContractError("top_down: generate mode needs an rng");
        if (pyramid && pyramid->size() != cfg_.scales)
            throw ContractError(strf("top_down: pyramid has %zu scales, model expects %zu",
                                     pyramid->size(), cfg_.scales));
        size_t B = c.dim(0);
        size_t t_len = cfg_.top_length();
        Tensor state = add(reshape(h_, {1, cfg_.width, t_len}),
                           reshape(cond_top_(c), {B, cfg_.width, 1}));
        for (const auto& cell : cond_cells_) state = cell(state);

        TopDownResult out;
        size_t gi = 0;  // flat group index
        for (size_t s = 0; s < cfg_.scales; ++s) {
            // Scale s is processed at resolution T / 2^(scales-1-s).
            const Tensor* enc = nullptr;
            if (mode == Mode::Train) {
                enc = &(*pyramid)[cfg_.scales - 1 - s];
                if ((*enc).dim(2) != t_len || (*enc).dim(0) != B)
                    throw ContractError(strf("top_down: scale %zu expects features [%zu,%zu,%zu]",
                                             s, B, cfg_.width, t_len));
            }
            for (size_t g = 0; g < cfg_.groups[s]; ++g, ++gi) {
                GroupStats st;
                Tensor pstats = prior_[gi](swish(state));  // [B, 2z, T_s]
                st.mu_p = gather_front_half(pstats);
                st.lam_p = clamp(gather_back_half(pstats), -7.0, 7.0);
                if (mode == Mode::Train) {
                    Tensor qin = concat_channels({state, *enc});
                    Tensor qstats = posterior_[gi](swish(qin));
                    Tensor dmu = gather_front_half(qstats);
                    Tensor dlam = gather_back_half(qstats);
                    st.mu_q = add(st.mu_p, dmu);
                    st.lam_q = clamp(add(st.lam_p, dlam), -7.0, 7.0);
                    Tensor eps = noise_like(st.mu_q, *rng);
                    st.z = add(st.mu_q, mul(exp(st.lam_q), eps));
                    // Sum over latent dims, mean over the batch.
                    Tensor kl_elem = kl_diag_gaussian(st.mu_q, st.lam_q, st.mu_p, st.lam_p);
                    st.kl = scale(sum(kl_elem), 1.0 / static_cast<double>(B));
                } else {
                    Tensor eps = noise_like(st.mu_p, *rng);
                    st.z = add(st.mu_p, mul(exp(st.lam_p), scale(eps, tau)));
                }
                state = add(state, zproj_[gi](st.z));
                state = group_cell_[gi](state);
                out.groups.push_back(std::move(st));
            }
            if (s + 1 < cfg_.scales) {
                state = dec_up_[s](state);
                t_len *= 2;
            }
        }
        if (gi != total_groups())
            throw ContractError(strf("top_down: processed %zu groups, expected %zu (group %zu)",
                                     gi, total_groups(), gi));
        for (const auto& cell : post_) state = cell(state);
        out.head_raw = head_(swish(state));
        return out;
    }

    // Full training objective on one batch of quantized targets.
    ElboResult elbo_loss(const QuantTargets& targets, const std::vector<uint32_t>& labels,
                         double kl_weight, Rng& rng, double free_bits = 0.0) const {
        if (!(kl_weight >= 0.0 && kl_weight <= 1.0))
            throw ContractError(strf("elbo_loss: kl weight %g outside [0,1]", kl_weight));
        if (!(free_bits >= 0.0))
            throw ContractError(strf("elbo_loss: free-bits floor %g negative", free_bits));
        if (labels.size() != targets.B)
            throw ContractError("elbo_loss: one label mask per record required");
        Tensor x = dequantized_input(targets);
        Tensor c = embed_condition(labels);
        std::vector<Tensor> pyramid = encode(x, c);
        TopDownResult td = top_down(&pyramid, c, Mode::Train, &rng);
        Tensor ll = log_likelihood(unpack(td.head_raw), targets, cfg_.bits);
        ElboResult r;
        r.kl_weight = kl_weight;
        r.nll = scale(sum(ll), -1.0 / static_cast<double>(targets.B));
        Tensor kl_sum;
        for (size_t g = 0; g < td.groups.size(); ++g) {
            r.kl.push_back(td.groups[g].kl);
            // Free bits: a group under the floor enters the objective as a
            // constant, detaching the penalty gradient while the likelihood
            // path keeps shaping the posterior within its budget.
            Tensor term = td.groups[g].kl;
            if (free_bits > 0.0 && term.item() < free_bits)
                term = Tensor::full(term.shape(), free_bits);
            kl_sum = g == 0 ? term : add(kl_sum, term);
        }
        r.total = add(r.nll, scale(kl_sum, kl_weight));
        return r;
    }

    // Shuffled mini-batch training; records must be 8-lead, equal length T,
    // normalized to [-1,1]. History holds per-epoch means of (nll, sum KL,
    // total). Throws TrainingDiverged (with partial history) on non-finite
    // loss, identifying the offending term.
    std::vector<EpochStats> train(const std::vector<EcgRecord>& records, const TrainOptions& opt) {
        if (records.empty()) throw ContractError("train: empty dataset");
        for (const auto& r : records) {
            if (!r.is_eight()) throw ContractError("train: records must be 8-lead");
            if (r.length() != cfg_.T)
                throw ContractError(strf("train: record length %zu, model expects %zu", r.length(),
                                         cfg_.T));
        }
        QuantTargets all = quantize_records(records);
        std::vector<uint32_t> all_labels(records.size());
        for (size_t i = 0; i < records.size(); ++i) all_labels[i] = records[i].labels;

        OptimizerConfig ocfg;
        ocfg.kind = OptKind::Adamax;
        ocfg.lr = opt.lr;
        ocfg.weight_decay = opt.weight_decay;
        ocfg.warmup_epochs = opt.lr_warmup;
        Optimizer optim(ocfg, ps_);
        Rng rng(derive_seed(opt.seed, 0x22));

        std::vector<size_t> order(records.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        history_.clear();
        for (int epoch = 0; epoch < opt.epochs; ++epoch) {
            optim.set_epoch(epoch);
            double klw = opt.kl_warmup > 0
                             ? std::min(1.0, static_cast<double>(epoch) / opt.kl_warmup)
                             : 1.0;
            rng.shuffle(std::span<size_t>(order));
            EpochStats stats;
            size_t seen = 0;
            for (size_t start = 0; start < order.size(); start += opt.batch) {
                size_t n = std::min(opt.batch, order.size() - start);
                QuantTargets batch = slice_targets(all, order, start, n);
                std::vector<uint32_t> labels(n);
                for (size_t i = 0; i < n; ++i) labels[i] = all_labels[order[start + i]];
                ps_.zero_grad();
                ElboResult r;
                try {
                    r = elbo_loss(batch, labels, klw, rng, opt.free_bits);
                } catch (const NumericError& e) {
                    throw TrainingDiverged(strf("training diverged at epoch %d: %s", epoch,
                                                e.what()),
                                           history_);
                }
                double nll_v = r.nll.item();
                double kl_v = 0;
                for (auto& k : r.kl) kl_v += k.item();
                double total_v = r.total.item();
                if (!std::isfinite(total_v)) {
                    const char* term = !std::isfinite(nll_v) ? "likelihood" : "kl";
                    throw TrainingDiverged(strf("training diverged at epoch %d: non-finite %s term",
                                                epoch, term),
                                           history_);
                }
                backward(r.total);
                clip_grad_norm(ps_, opt.clip);
                optim.step(ps_);
                stats.nll += nll_v * n;
                stats.kl += kl_v * n;
                stats.total += total_v * n;
                seen += n;
            }
            stats.nll /= seen;
            stats.kl /= seen;
            stats.total /= seen;
            history_.push_back(stats);
        }
        return history_;
    }

    // Conditional generation: prior sampling -> mixture cascade ->
    // denormalize -> expand to 12 leads. Deterministic per seed.
    std::vector<EcgRecord> generate(uint32_t labels, size_t count, double tau,
                                    uint64_t seed) const {
        std::vector<EcgRecord> out;
        if (count == 0) return out;
        NoGradGuard ng;
        Rng rng(derive_seed(seed, 0x33));
        size_t chunk = 32;
        for (size_t done = 0; done < count; done += chunk) {
            size_t n = std::min(chunk, count - done);
            Tensor c = embed_condition(std::vector<uint32_t>(n, labels));
            TopDownResult td = top_down(nullptr, c, Mode::Generate, &rng, tau);
            MixtureParams mp = unpack(td.head_raw);
            CascadeSample cs = sample_cascade_with(mp, tau, [&rng] { return rng.uniform(); });
            for (size_t i = 0; i < n; ++i) {
                EcgRecord rec;
                rec.sampling_rate = cfg_.sampling_rate;
                rec.labels = labels;
                rec.generated = true;
                for (size_t l = 0; l < kHeadLeads; ++l) {
                    std::vector<double> v(cfg_.T);
                    for (size_t t = 0; t < cfg_.T; ++t) v[t] = cs.leads[l][i * cfg_.T + t];
                    rec.leads[kEightLeads[l]] = std::move(v);
                }
                out.push_back(expand_to_twelve(denormalize_record(rec, norm_)));
            }
        }
        return out;
    }

    // Teacher-forced mean log-likelihood of given records (no training).
    double mean_log_likelihood(const std::vector<EcgRecord>& records) const {
        NoGradGuard ng;
        QuantTargets all = quantize_records(records);
        std::vector<uint32_t> labels(records.size());
        for (size_t i = 0; i < records.size(); ++i) labels[i] = records[i].labels;
        Tensor x = dequantized_input(all);
        Tensor c = embed_condition(labels);
        std::vector<Tensor> pyramid = encode(x, c);
        Rng rng(0);  // posterior noise; fixed stream for comparable numbers
        TopDownResult td = top_down(&pyramid, c, Mode::Train, &rng);
        Tensor ll = log_likelihood(unpack(td.head_raw), all, cfg_.bits);
        return mean(ll).item();
    }

    size_t total_groups() const {
        size_t n = 0;
        for (size_t g : cfg_.groups) n += g;
        return n;
    }

    QuantTargets quantize_records(const std::vector<EcgRecord>& records) const {
        QuantTargets tg;
        tg.B = records.size();
        tg.T = cfg_.T;
        QuantGrid grid(cfg_.bits);
        for (size_t l = 0; l < kHeadLeads; ++l) tg.bins[l].resize(tg.B * tg.T);
        for (size_t i = 0; i < records.size(); ++i)
            for (size_t l = 0; l < kHeadLeads; ++l) {
                const auto& v = records[i].lead(kEightLeads[l]);
                for (size_t t = 0; t < tg.T; ++t)
                    tg.bins[l][i * tg.T + t] = grid.quantize(v[t]);
            }
        return tg;
    }

private:
    void build(Rng& rng) {
        const double init = 0.02;
        size_t w = cfg_.width;
        embedding_ = ps_.add("cond.embedding",
                             Tensor::param({vocab_.size(), cfg_.cond_dim},
                                           trunc_normal(vocab_.size() * cfg_.cond_dim, init, rng),
                                           "cond.embedding"));
        cond_enc_ = LinearLayer(ps_, "cond.enc", cfg_.cond_dim, w, init, rng);
        cond_top_ = LinearLayer(ps_, "cond.top", cfg_.cond_dim, w, init, rng);
        stem_ = Conv1dLayer(ps_, "enc.stem", kHeadLeads, w, 5, 1, 2, init, rng);
        for (size_t i = 0; i < cfg_.pre_cells; ++i)
            pre_.emplace_back(ps_, strf("enc.pre%zu", i), w, init, rng);
        for (size_t s = 0; s < cfg_.scales; ++s) {
            enc_cells_.emplace_back(ps_, strf("enc.s%zu", s), w, init, rng);
            if (s + 1 < cfg_.scales)
                enc_down_.emplace_back(ps_, strf("enc.down%zu", s), w, w, 2, 2, 0, init, rng);
        }
        h_ = ps_.add("dec.h", Tensor::param({w, cfg_.top_length()},
                                            trunc_normal(w * cfg_.top_length(), init, rng),
                                            "dec.h"));
        for (size_t i = 0; i < cfg_.cond_cells; ++i)
            cond_cells_.emplace_back(ps_, strf("dec.cond%zu", i), w, init, rng);
        size_t gi = 0;
        for (size_t s = 0; s < cfg_.scales; ++s) {
            for (size_t g = 0; g < cfg_.groups[s]; ++g, ++gi) {
                prior_.emplace_back(ps_, strf("dec.g%zu.prior", gi), w, 2 * cfg_.z_channels, 1, 1,
                                    0, 0.0, rng);
                posterior_.emplace_back(ps_, strf("dec.g%zu.post", gi), 2 * w,
                                        2 * cfg_.z_channels, 1, 1, 0, 0.0, rng);
                zproj_.emplace_back(ps_, strf("dec.g%zu.zproj", gi), cfg_.z_channels, w, 1, 1, 0,
                                    init, rng);
                group_cell_.emplace_back(ps_, strf("dec.g%zu.cell", gi), w, init, rng);
            }
            if (s + 1 < cfg_.scales)
                dec_up_.emplace_back(ps_, strf("dec.up%zu", s), w, w, 2, 2, 0, init, rng);
        }
        for (size_t i = 0; i < cfg_.post_cells; ++i)
            post_.emplace_back(ps_, strf("dec.post%zu", i), w, init, rng);
        head_ = Conv1dLayer(ps_, "dec.head", w, kChannelsPerComponent * cfg_.mixture, 1, 1, 0,
                            0.0, rng);
    }

    // First/second half of a [B, 2z, T] stats tensor.
    static Tensor gather_front_half(const Tensor& t) {
        size_t z = t.dim(1) / 2;
        std::vector<size_t> idx(z);
        for (size_t i = 0; i < z; ++i) idx[i] = i;
        return gather_channels(t, idx);
    }
    static Tensor gather_back_half(const Tensor& t) {
        size_t z = t.dim(1) / 2;
        std::vector<size_t> idx(z);
        for (size_t i = 0; i < z; ++i) idx[i] = z + i;
        return gather_channels(t, idx);
    }

    static Tensor noise_like(const Tensor& t, Rng& rng) {
        std::vector<double> e(t.size());
        rng.fill_normal(e);
        return Tensor::from(t.shape(), std::move(e));
    }

    Tensor dequantized_input(const QuantTargets& tg) const {
        QuantGrid grid(cfg_.bits);
        std::vector<double> x(tg.B * kHeadLeads * tg.T);
        for (size_t i = 0; i < tg.B; ++i)
            for (size_t l = 0; l < kHeadLeads; ++l)
                for (size_t t = 0; t < tg.T; ++t)
                    x[(i * kHeadLeads + l) * tg.T + t] = grid.dequantize(tg.bins[l][i * tg.T + t]);
        return Tensor::from({tg.B, kHeadLeads, tg.T}, std::move(x));
    }

    static QuantTargets slice_targets(const QuantTargets& all, const std::vector<size_t>& order,
                                      size_t start, size_t n) {
        QuantTargets b;
        b.B = n;
        b.T = all.T;
        for (size_t l = 0; l < kHeadLeads; ++l) {
            b.bins[l].resize(n * all.T);
            for (size_t i = 0; i < n; ++i)
                std::copy_n(all.bins[l].begin() + order[start + i] * all.T, all.T,
                            b.bins[l].begin() + i * all.T);
        }
        return b;
    }

    ModelConfig cfg_;
    ClassVocabulary vocab_;
    LeadNorm norm_;
    ParamStore ps_;
    std::vector<EpochStats> history_;

    Tensor embedding_, h_;
    LinearLayer cond_enc_, cond_top_;
    Conv1dLayer stem_, head_;
    std::vector<ResCell> pre_, post_, cond_cells_;
    std::vector<ResCell> enc_cells_;
    std::vector<Conv1dLayer> enc_down_;
    std::vector<Conv1dLayer> prior_, posterior_, zproj_;
    std::vector<ResCell> group_cell_;
    std::vector<ConvT1dLayer> dec_up_;
};

}  // namespace ecgen
