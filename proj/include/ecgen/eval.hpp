#pragma once

// Downstream evaluation bench: Mann-Whitney AUROC, a small 1D residual
// classifier over 12-lead records, dataset-enrichment protocols that mix
// generated records into the real training split, and the experiment runner
// that retrains per proportion and reports per-class test AUROC as CSV.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ecgen/config.hpp"
#include "ecgen/ecg.hpp"
#include "ecgen/nn.hpp"
#include "ecgen/optim.hpp"

namespace ecgen {

// ---------------------------------------------------------------------------
// AUROC (Mann-Whitney with midranks; ties count 1/2)
// ---------------------------------------------------------------------------

inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ContractError(strf("auroc: %zu scores vs %zu labels", scores.size(),
                                 labels.size()));
    size_t pos = 0, neg = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ContractError("auroc: labels must be 0 or 1");
        (y ? pos : neg)++;
    }
    if (pos == 0 || neg == 0)
        throw ContractError("auroc: both classes must be present");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    // midranks over tie groups
    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += midrank;
        i = j;
    }
    double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// ---------------------------------------------------------------------------
// Record hashing (FNV-1a) for split freezing and leakage checks
// ---------------------------------------------------------------------------

inline uint64_t fnv1a_bytes(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
    const uint8_t* b = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t record_hash(const EcgRecord& rec) {
    uint64_t h = fnv1a_bytes(&rec.sampling_rate, sizeof rec.sampling_rate);
    h = fnv1a_bytes(&rec.labels, sizeof rec.labels, h);
    for (const auto& [l, v] : rec.leads) {
        uint8_t id = static_cast<uint8_t>(l);
        h = fnv1a_bytes(&id, 1, h);
        h = fnv1a_bytes(v.data(), v.size() * sizeof(double), h);
    }
    return h;
}

inline uint64_t split_hash(const std::vector<EcgRecord>& records) {
    uint64_t h = 14695981039346656037ull;
    for (const auto& r : records) {
        uint64_t rh = record_hash(r);
        h = fnv1a_bytes(&rh, sizeof rh, h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Classifier: shrunk 1D residual network (stem + widening stages + GAP head)
// ---------------------------------------------------------------------------

struct ClassifierConfig {
    std::vector<size_t> blocks = {1, 1, 1, 1};  // residual cells per stage
    size_t width = 16;                          // stage i runs at width * 2^i
    int epochs = 10;
    size_t batch = 16;
    double lr = 1e-3;
    double weight_decay = 0.01;
    uint64_t seed = 1;

    void validate() const {
        if (blocks.empty() || blocks.size() > 6)
            throw ContractError("classifier: 1 to 6 stages required");
        for (size_t b : blocks)
            if (b < 1) throw ContractError("classifier: every stage needs at least one block");
        if (width == 0) throw ContractError("classifier: width must be positive");
        if (epochs < 1) throw ContractError("classifier: epochs must be at least 1");
        if (batch == 0) throw ContractError("classifier: batch size must be positive");
    }
};

class Classifier {
public:
    Classifier(ClassifierConfig cfg, size_t n_classes) : cfg_(std::move(cfg)), n_classes_(n_classes) {
        cfg_.validate();
        if (n_classes_ == 0) throw ContractError("classifier: need at least one class");
        Rng rng(derive_seed(cfg_.seed, 0xC1));
        const double init = 0.05;
        stem_ = Conv1dLayer(ps_, "stem", 12, cfg_.width, 5, 1, 2, init, rng);
        size_t w = cfg_.width;
        for (size_t s = 0; s < cfg_.blocks.size(); ++s) {
            size_t w_out = cfg_.width << s;
            if (s > 0)
                transitions_.emplace_back(ps_, strf("stage%zu.widen", s), w, w_out, 1, 1, 0, init,
                                          rng);
            std::vector<ResCell> cells;
            for (size_t b = 0; b < cfg_.blocks[s]; ++b)
                cells.emplace_back(ps_, strf("stage%zu.cell%zu", s, b), w_out, init, rng);
            stages_.push_back(std::move(cells));
            w = w_out;
        }
        head_ = LinearLayer(ps_, "head", w, n_classes_, init, rng);
    }

    size_t classes() const { return n_classes_; }
    const ClassifierConfig& config() const { return cfg_; }
    ParamStore& params() { return ps_; }
    const ParamStore& params() const { return ps_; }

    // x: [B, 12, T] -> logits [B, n_classes]. Average pooling halves the
    // resolution after the stem and after every stage, then a global average
    // feeds the linear head.
    Tensor logits(const Tensor& x) const {
        if (x.rank() != 3 || x.dim(1) != 12)
            throw ContractError(strf("classifier: input must be [B,12,T], got %s",
                                     shape_str(x.shape()).c_str()));
        Tensor h = stem_(x);
        if (h.dim(2) >= 2) h = avg_pool1d(h, 2, 2);
        for (size_t s = 0; s < stages_.size(); ++s) {
            if (s > 0) h = transitions_[s - 1](h);
            for (const auto& cell : stages_[s]) h = cell(h);
            if (h.dim(2) >= 2) h = avg_pool1d(h, 2, 2);
        }
        h = avg_pool1d(swish(h), h.dim(2), 1);            // [B, C, 1]
        return head_(reshape(h, {h.dim(0), h.dim(1)}));  // [B, n_classes]
    }

    // Sigmoid scores for one class over a record list (inference only).
    std::vector<double> scores(const std::vector<EcgRecord>& recs, size_t class_idx,
                               size_t batch = 64) const {
        if (class_idx >= n_classes_) throw ContractError("classifier: class index out of range");
        NoGradGuard ng;
        std::vector<double> out(recs.size());
        for (size_t start = 0; start < recs.size(); start += batch) {
            size_t n = std::min(batch, recs.size() - start);
            Tensor x = batch_tensor(recs, start, n);
            Tensor z = logits(x);
            for (size_t i = 0; i < n; ++i)
                out[start + i] = detail::sigmoid_scalar(z.data()[i * n_classes_ + class_idx]);
        }
        return out;
    }

    // Fresh head weights (used when fine-tuning a pretrained trunk).
    void reinit_head(uint64_t seed) {
        Rng rng(derive_seed(seed, 0xEAD));
        Tensor& w = ps_.at("head.w");
        auto wv = trunc_normal(w.size(), 0.05, rng);
        std::copy(wv.begin(), wv.end(), w.mutable_data().begin());
        Tensor& b = ps_.at("head.b");
        std::fill(b.mutable_data().begin(), b.mutable_data().end(), 0.0);
    }

    std::vector<std::vector<double>> snapshot() const {
        std::vector<std::vector<double>> vals;
        for (const auto& [_, t] : ps_.items())
            vals.emplace_back(t.data().begin(), t.data().end());
        return vals;
    }

    void restore(const std::vector<std::vector<double>>& vals) {
        auto& items = ps_.items();
        if (vals.size() != items.size())
            throw ContractError("classifier: snapshot does not match parameter list");
        for (size_t i = 0; i < items.size(); ++i) {
            if (vals[i].size() != items[i].second.size())
                throw ContractError(strf("classifier: snapshot size mismatch on '%s'",
                                         items[i].first.c_str()));
            std::copy(vals[i].begin(), vals[i].end(),
                      items[i].second.mutable_data().begin());
        }
    }

    // [B, 12, T] batch from 12-lead records (canonical lead order).
    static Tensor batch_tensor(const std::vector<EcgRecord>& recs, size_t start, size_t n) {
        size_t T = recs[start].length();
        std::vector<double> x(n * 12 * T);
        for (size_t i = 0; i < n; ++i) {
            const EcgRecord& r = recs[start + i];
            if (!r.is_twelve())
                throw ContractError("classifier: records must carry all 12 leads");
            if (r.length() != T)
                throw ContractError(strf("classifier: record length %zu, batch expects %zu",
                                         r.length(), T));
            size_t li = 0;
            for (const auto& [l, v] : r.leads) {  // map iterates canonical order
                for (size_t t = 0; t < T; ++t) x[(i * 12 + li) * T + t] = v[t];
                ++li;
            }
        }
        return Tensor::from({n, 12, T}, std::move(x));
    }

private:
    ClassifierConfig cfg_;
    size_t n_classes_;
    ParamStore ps_;
    Conv1dLayer stem_;
    std::vector<Conv1dLayer> transitions_;
    std::vector<std::vector<ResCell>> stages_;
    LinearLayer head_;
};

// Multi-label targets [B, n_classes] from label bitmasks.
inline Tensor label_targets(const std::vector<EcgRecord>& recs, size_t start, size_t n,
                            size_t n_classes) {
    std::vector<double> y(n * n_classes, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < n_classes; ++c)
            if (ClassVocabulary::has_label(recs[start + i].labels, c)) y[i * n_classes + c] = 1.0;
    return Tensor::from({n, n_classes}, std::move(y));
}

// Binary cross-entropy from logits: mean of z*softplus(-x) + (1-z)*softplus(x).
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    Tensor pos = mul(targets, softplus(neg(logits)));
    Tensor negt = mul(shift(neg(targets), 1.0), softplus(logits));
    return mean(add(pos, negt));
}

// Macro-averaged one-vs-rest AUROC over the classes present with both
// outcomes; classes constant in `recs` are skipped.
inline double macro_auroc(const Classifier& clf, const std::vector<EcgRecord>& recs,
                          size_t n_classes) {
    double total = 0;
    size_t used = 0;
    for (size_t c = 0; c < n_classes; ++c) {
        std::vector<int> y(recs.size());
        size_t pos = 0;
        for (size_t i = 0; i < recs.size(); ++i) {
            y[i] = ClassVocabulary::has_label(recs[i].labels, c) ? 1 : 0;
            pos += y[i];
        }
        if (pos == 0 || pos == recs.size()) continue;
        total += auroc(clf.scores(recs, c), y);
        ++used;
    }
    if (used == 0) throw ContractError("macro_auroc: no class has both outcomes");
    return total / static_cast<double>(used);
}

struct ClassifierResult {
    Classifier model;
    std::vector<double> val_trace;  // macro val AUROC per epoch
    double best_val_auroc = 0;
};

// Supervised training with per-epoch validation; returns the parameters from
// the best validation epoch. `pretrained` optionally warm-starts the trunk
// (its head is re-initialized), implementing the fine-tuning path.
inline ClassifierResult train_classifier(const Dataset& train, const Dataset& val,
                                         const ClassifierConfig& cfg,
                                         const Classifier* pretrained = nullptr) {
    cfg.validate();
    if (train.records.empty() || val.records.empty())
        throw ContractError("train_classifier: empty split");
    if (train.vocab.names() != val.vocab.names())
        throw ContractError("train_classifier: train and val vocabularies differ");
    size_t n_classes = train.vocab.size();
    size_t T = train.records[0].length();
    for (const auto& r : train.records)
        if (r.length() != T)
            throw ContractError("train_classifier: record lengths differ within the split");
    // single-class guard: every class must have both outcomes in train
    for (size_t c = 0; c < n_classes; ++c) {
        size_t pos = 0;
        for (const auto& r : train.records)
            pos += ClassVocabulary::has_label(r.labels, c) ? 1 : 0;
        if (pos == 0 || pos == train.records.size())
            throw ContractError(strf("train_classifier: class '%s' is constant in train",
                                     train.vocab.name(c).c_str()));
    }
    {  // disjointness of splits, by content hash
        std::vector<uint64_t> vh;
        vh.reserve(val.records.size());
        for (const auto& r : val.records) vh.push_back(record_hash(r));
        std::sort(vh.begin(), vh.end());
        for (const auto& r : train.records)
            if (std::binary_search(vh.begin(), vh.end(), record_hash(r)))
                throw ContractError("train_classifier: train and val splits overlap");
    }

    ClassifierResult res{Classifier(cfg, n_classes), {}, 0};
    if (pretrained) {
        res.model.restore(pretrained->snapshot());
        res.model.reinit_head(cfg.seed);
    }

    OptimizerConfig ocfg;
    ocfg.kind = OptKind::AdamW;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    Optimizer optim(ocfg, res.model.params());
    Rng rng(derive_seed(cfg.seed, 0x5f));

    std::vector<size_t> order(train.records.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<EcgRecord> shuffled(train.records.size());
    std::vector<std::vector<double>> best;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        optim.set_epoch(epoch);
        rng.shuffle(std::span<size_t>(order));
        for (size_t i = 0; i < order.size(); ++i) shuffled[i] = train.records[order[i]];
        for (size_t start = 0; start < shuffled.size(); start += cfg.batch) {
            size_t n = std::min(cfg.batch, shuffled.size() - start);
            res.model.params().zero_grad();
            Tensor x = Classifier::batch_tensor(shuffled, start, n);
            Tensor loss = bce_with_logits(res.model.logits(x),
                                          label_targets(shuffled, start, n, n_classes));
            backward(loss);
            clip_grad_norm(res.model.params(), 200.0);
            optim.step(res.model.params());
        }
        double v = macro_auroc(res.model, val.records, n_classes);
        res.val_trace.push_back(v);
        if (best.empty() || v > res.best_val_auroc) {
            res.best_val_auroc = v;
            best = res.model.snapshot();
        }
    }
    res.model.restore(best);
    return res;
}

// ---------------------------------------------------------------------------
// Enrichment protocols
// ---------------------------------------------------------------------------

// Produces `count` records labeled with bitmask `labels`.
using RecordGenerator =
    std::function<std::vector<EcgRecord>(uint32_t labels, size_t count, uint64_t seed)>;

enum class EnrichMode { both_classes_proportional, minority_only, balanced_pretrain };

inline const char* enrich_mode_name(EnrichMode m) {
    switch (m) {
        case EnrichMode::both_classes_proportional: return "both_classes_proportional";
        case EnrichMode::minority_only: return "minority_only";
        case EnrichMode::balanced_pretrain: return "balanced_pretrain";
    }
    throw ContractError("unknown enrichment mode");
}

inline std::vector<EcgRecord> generate_checked(const RecordGenerator& gen, uint32_t labels,
                                               size_t count, uint64_t seed) {
    if (count == 0) return {};
    if (!gen) throw ContractError("enrichment: generator required to add records");
    std::vector<EcgRecord> out = gen(labels, count, seed);
    if (out.size() != count)
        throw ContractError(strf("enrichment: generator returned %zu records, requested %zu",
                                 out.size(), count));
    for (auto& r : out) {
        if (r.labels != labels)
            throw ContractError(strf("enrichment: generator produced labels %u, requested %u",
                                     r.labels, labels));
        r.generated = true;  // provenance flag
    }
    return out;
}

inline size_t count_with_class(const std::vector<EcgRecord>& recs, size_t class_idx) {
    size_t n = 0;
    for (const auto& r : recs) n += ClassVocabulary::has_label(r.labels, class_idx) ? 1 : 0;
    return n;
}

// Add generated records to a real training split; real records are never
// touched. proportional: round(n * count(c)) per class c. minority_only
// (binary): round(n * (majority - minority)) minority records, so n = 1
// exactly balances.
inline std::vector<EcgRecord> enrich_binary(const std::vector<EcgRecord>& real,
                                            const ClassVocabulary& vocab,
                                            const RecordGenerator& gen, EnrichMode mode,
                                            double n, uint64_t seed) {
    if (!(n > 0)) throw ContractError("enrichment: proportion must be positive");
    std::vector<EcgRecord> out = real;
    if (mode == EnrichMode::both_classes_proportional) {
        for (size_t c = 0; c < vocab.size(); ++c) {
            size_t have = count_with_class(real, c);
            size_t add = static_cast<size_t>(std::llround(n * static_cast<double>(have)));
            auto gen_recs = generate_checked(gen, ClassVocabulary::bit(c), add,
                                             derive_seed(seed, c));
            out.insert(out.end(), gen_recs.begin(), gen_recs.end());
        }
        return out;
    }
    if (mode == EnrichMode::minority_only) {
        if (vocab.size() != 2)
            throw ContractError("enrichment: minority_only expects a binary vocabulary");
        size_t c0 = count_with_class(real, 0), c1 = count_with_class(real, 1);
        size_t minority = c0 <= c1 ? 0 : 1;
        size_t gap = (minority == 0 ? c1 - c0 : c0 - c1);
        size_t add = static_cast<size_t>(std::llround(n * static_cast<double>(gap)));
        auto gen_recs = generate_checked(gen, ClassVocabulary::bit(minority), add,
                                         derive_seed(seed, minority));
        out.insert(out.end(), gen_recs.begin(), gen_recs.end());
        return out;
    }
    throw ContractError("enrichment: balanced_pretrain is a transfer-protocol mode");
}

// Top every non-majority class up to the majority count with generated
// records. Classes already at or above the majority count get nothing (a
// warning is recorded when they exceed it).
inline std::vector<EcgRecord> balance_pretrain(const std::vector<EcgRecord>& real,
                                               const ClassVocabulary& vocab,
                                               const RecordGenerator& gen, uint64_t seed,
                                               size_t majority_class = SIZE_MAX,
                                               std::vector<std::string>* warnings = nullptr) {
    if (vocab.size() == 0) throw ContractError("balance_pretrain: empty vocabulary");
    std::vector<size_t> counts(vocab.size());
    for (size_t c = 0; c < vocab.size(); ++c) counts[c] = count_with_class(real, c);
    if (majority_class == SIZE_MAX)
        majority_class =
            std::max_element(counts.begin(), counts.end()) - counts.begin();
    if (majority_class >= vocab.size())
        throw ContractError("balance_pretrain: majority class index out of range");
    size_t target = counts[majority_class];
    std::vector<EcgRecord> out = real;
    for (size_t c = 0; c < vocab.size(); ++c) {
        if (c == majority_class) continue;
        if (counts[c] > target) {
            if (warnings)
                warnings->push_back(strf("class '%s' exceeds majority count (%zu > %zu); left as is",
                                         vocab.name(c).c_str(), counts[c], target));
            continue;
        }
        size_t add = target - counts[c];
        auto gen_recs = generate_checked(gen, ClassVocabulary::bit(c), add, derive_seed(seed, c));
        out.insert(out.end(), gen_recs.begin(), gen_recs.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment runner and metrics report
// ---------------------------------------------------------------------------

struct EnrichmentPlan {
    EnrichMode mode = EnrichMode::minority_only;
    std::vector<double> proportions;  // sweep values (enrichment protocols)
    RecordGenerator generator;        // null -> baseline only
    std::string generator_id = "none";
    uint64_t seed = 1;
};

struct SplitDatasets {
    Dataset train, val, test;  // val and test are frozen before enrichment
};

struct MetricsRow {
    std::string protocol;
    std::string class_name;
    double proportion = 0;
    uint64_t seed = 0;
    double auroc = 0;
    size_t train_size = 0;
    size_t generated_count = 0;
    uint64_t test_hash = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "protocol,class,proportion,seed,auroc,train_size,generated_count,test_hash";

struct MetricsReport {
    std::vector<MetricsRow> rows;

    std::string to_csv() const {
        std::string out = std::string(kMetricsCsvHeader) + "\n";
        for (const auto& r : rows)
            out += strf("%s,%s,%s,%llu,%s,%zu,%zu,%llu\n", r.protocol.c_str(),
                        r.class_name.c_str(), fmt_double(r.proportion).c_str(),
                        static_cast<unsigned long long>(r.seed), fmt_double(r.auroc).c_str(),
                        r.train_size, r.generated_count,
                        static_cast<unsigned long long>(r.test_hash));
        return out;
    }
};

inline MetricsReport parse_metrics_csv(const std::string& text) {
    MetricsReport rep;
    size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != kMetricsCsvHeader) throw ContractError("metrics csv: unexpected header");
            continue;
        }
        std::vector<std::string> f;
        size_t p = 0;
        while (p <= line.size()) {
            size_t c = line.find(',', p);
            f.push_back(line.substr(p, c == std::string::npos ? c : c - p));
            if (c == std::string::npos) break;
            p = c + 1;
        }
        if (f.size() != 8)
            throw ContractError(strf("metrics csv line %zu: expected 8 fields, got %zu", line_no,
                                     f.size()));
        MetricsRow r;
        r.protocol = f[0];
        r.class_name = f[1];
        r.proportion = std::strtod(f[2].c_str(), nullptr);
        r.seed = std::strtoull(f[3].c_str(), nullptr, 10);
        r.auroc = std::strtod(f[4].c_str(), nullptr);
        r.train_size = std::strtoull(f[5].c_str(), nullptr, 10);
        r.generated_count = std::strtoull(f[6].c_str(), nullptr, 10);
        r.test_hash = std::strtoull(f[7].c_str(), nullptr, 10);
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

namespace detail {

// Enriched records must never collide with the frozen test split.
inline void check_no_leakage(const std::vector<EcgRecord>& train_set,
                             const std::vector<uint64_t>& sorted_test_hashes) {
    for (const auto& r : train_set)
        if (std::binary_search(sorted_test_hashes.begin(), sorted_test_hashes.end(),
                               record_hash(r)))
            throw ContractError("experiment: enriched training record found in the test split");
}

inline void append_per_class_rows(MetricsReport& rep, const std::string& protocol,
                                  double proportion, uint64_t seed, const Classifier& clf,
                                  const Dataset& test, size_t train_size,
                                  size_t generated_count, uint64_t test_h) {
    for (size_t c = 0; c < test.vocab.size(); ++c) {
        std::vector<int> y(test.records.size());
        size_t pos = 0;
        for (size_t i = 0; i < test.records.size(); ++i) {
            y[i] = ClassVocabulary::has_label(test.records[i].labels, c) ? 1 : 0;
            pos += y[i];
        }
        if (pos == 0 || pos == test.records.size()) continue;
        MetricsRow row;
        row.protocol = protocol;
        row.class_name = test.vocab.name(c);
        row.proportion = proportion;
        row.seed = seed;
        row.auroc = auroc(clf.scores(test.records, c), y);
        row.train_size = train_size;
        row.generated_count = generated_count;
        row.test_hash = test_h;
        rep.rows.push_back(std::move(row));
    }
}

}  // namespace detail

// Baseline plus one retrain-from-scratch per proportion; each cell reports
// per-class AUROC on the frozen test split.
inline MetricsReport run_experiment(const EnrichmentPlan& plan, const SplitDatasets& data,
                                    const ClassifierConfig& cfg) {
    if (plan.mode == EnrichMode::balanced_pretrain)
        throw ContractError("experiment: balanced_pretrain runs through run_transfer");
    for (double p : plan.proportions)
        if (!(p > 0)) throw ContractError("experiment: proportions must be positive");
    if (data.train.vocab.names() != data.test.vocab.names() ||
        data.train.vocab.names() != data.val.vocab.names())
        throw ContractError("experiment: splits must share one vocabulary");
    uint64_t test_h = split_hash(data.test.records);
    std::vector<uint64_t> test_hashes;
    test_hashes.reserve(data.test.records.size());
    for (const auto& r : data.test.records) test_hashes.push_back(record_hash(r));
    std::sort(test_hashes.begin(), test_hashes.end());

    MetricsReport rep;
    {  // baseline: real data only
        ClassifierResult res = train_classifier(data.train, data.val, cfg);
        detail::append_per_class_rows(rep, "baseline", 0.0, cfg.seed, res.model, data.test,
                                      data.train.records.size(), 0, test_h);
    }
    for (double prop : plan.proportions) {
        Dataset enriched;
        enriched.vocab = data.train.vocab;
        enriched.records = enrich_binary(data.train.records, data.train.vocab, plan.generator,
                                         plan.mode, prop, derive_seed(plan.seed, uint64_t(prop * 1e6)));
        detail::check_no_leakage(enriched.records, test_hashes);
        size_t generated = enriched.records.size() - data.train.records.size();
        ClassifierResult res = train_classifier(enriched, data.val, cfg);
        detail::append_per_class_rows(rep, enrich_mode_name(plan.mode), prop, cfg.seed,
                                      res.model, data.test, enriched.records.size(), generated,
                                      test_h);
    }
    return rep;
}

struct TransferPlan {
    bool balance = true;              // apply balance_pretrain to the pretrain set
    std::vector<double> fractions;    // target-train fractions, e.g. 0.1 .. 1.0
    RecordGenerator generator;
    std::string generator_id = "none";
    uint64_t seed = 1;
};

// Pretrain on (optionally balanced) source data, then fine-tune on growing
// fractions of the target train split; reports per-class AUROC per fraction
// plus a per-class average row ("transfer_avg").
inline MetricsReport run_transfer(const TransferPlan& plan, const Dataset& pretrain,
                                  const SplitDatasets& target, const ClassifierConfig& cfg) {
    if (plan.fractions.empty()) throw ContractError("transfer: at least one fraction required");
    for (double f : plan.fractions)
        if (!(f > 0 && f <= 1.0))
            throw ContractError("transfer: fractions must lie in (0, 1]");
    if (pretrain.vocab.names() != target.train.vocab.names())
        throw ContractError("transfer: pretrain and target vocabularies differ");
    uint64_t test_h = split_hash(target.test.records);
    std::vector<uint64_t> test_hashes;
    for (const auto& r : target.test.records) test_hashes.push_back(record_hash(r));
    std::sort(test_hashes.begin(), test_hashes.end());

    Dataset pre;
    pre.vocab = pretrain.vocab;
    size_t pre_generated = 0;
    if (plan.balance) {
        pre.records = balance_pretrain(pretrain.records, pretrain.vocab, plan.generator,
                                       derive_seed(plan.seed, 0xBA));
        pre_generated = pre.records.size() - pretrain.records.size();
    } else {
        pre.records = pretrain.records;
    }
    detail::check_no_leakage(pre.records, test_hashes);
    ClassifierResult pretrained = train_classifier(pre, target.val, cfg);

    // One seeded permutation of the target train set; fractions take nested
    // prefixes of it, so larger fractions strictly extend smaller ones and a
    // class-sorted input cannot yield a single-class subset by accident.
    std::vector<size_t> order(target.train.records.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng perm_rng(derive_seed(plan.seed, 0xF7));
    perm_rng.shuffle(std::span<size_t>(order));

    MetricsReport rep;
    std::map<std::string, std::pair<double, size_t>> sums;  // class -> (sum, count)
    for (double frac : plan.fractions) {
        size_t take = std::max<size_t>(
            1, static_cast<size_t>(std::llround(frac * target.train.records.size())));
        take = std::min(take, target.train.records.size());
        Dataset finetune;
        finetune.vocab = target.train.vocab;
        finetune.records.reserve(take);
        for (size_t i = 0; i < take; ++i)
            finetune.records.push_back(target.train.records[order[i]]);
        ClassifierResult res = train_classifier(finetune, target.val, cfg, &pretrained.model);
        size_t before = rep.rows.size();
        detail::append_per_class_rows(rep, "transfer", frac, cfg.seed, res.model, target.test,
                                      take, pre_generated, test_h);
        for (size_t i = before; i < rep.rows.size(); ++i) {
            auto& acc = sums[rep.rows[i].class_name];
            acc.first += rep.rows[i].auroc;
            acc.second += 1;
        }
    }
    for (const auto& [cls, acc] : sums) {
        MetricsRow row;
        row.protocol = "transfer_avg";
        row.class_name = cls;
        row.proportion = 0;
        row.seed = cfg.seed;
        row.auroc = acc.first / static_cast<double>(acc.second);
        row.train_size = target.train.records.size();
        row.generated_count = pre_generated;
        row.test_hash = test_h;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

}  // namespace ecgen
