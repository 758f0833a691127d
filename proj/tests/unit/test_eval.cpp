#include <gtest/gtest.h>

#include <cmath>

#include "ecgen/eval.hpp"
#include "ecgen/synth.hpp"

namespace {

using namespace ecgen;

// Exhaustive pair counting: fraction of (positive, negative) pairs ordered
// correctly, ties worth one half.
double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0;
    size_t pairs = 0;
    for (size_t i = 0; i < s.size(); ++i)
        for (size_t j = 0; j < s.size(); ++j) {
            if (!(y[i] == 1 && y[j] == 0)) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    return num / static_cast<double>(pairs);
}

TEST(Auroc, KnownValues) {
    EXPECT_DOUBLE_EQ(auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(auroc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}), 0.5);
    EXPECT_DOUBLE_EQ(auroc({0.8, 0.9, 0.3, 0.2}, {1, 0, 1, 0}), 0.5);
    EXPECT_DOUBLE_EQ(auroc({0.1, 0.9}, {0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(auroc({0.9, 0.1}, {0, 1}), 0.0);
}

TEST(Auroc, RejectsDegenerateInput) {
    EXPECT_THROW(auroc({0.1, 0.2}, {1, 1}), ContractError);
    EXPECT_THROW(auroc({0.1, 0.2}, {0, 0}), ContractError);
    EXPECT_THROW(auroc({0.1}, {0, 1}), ContractError);
    EXPECT_THROW(auroc({0.1, 0.2}, {0, 2}), ContractError);
}

// Midrank formula vs brute force on every label pattern of length <= 12,
// against several score layouts including heavy ties.
TEST(Auroc, MatchesExhaustiveOracleOnAllShortVectors) {
    Rng rng(3);
    for (size_t n = 2; n <= 12; ++n) {
        std::vector<std::vector<double>> score_sets;
        std::vector<double> random(n), tied(n), constant(n, 0.5);
        for (size_t i = 0; i < n; ++i) {
            random[i] = rng.uniform();
            tied[i] = static_cast<double>(i % 3);
        }
        score_sets = {random, tied, constant};
        for (uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
            std::vector<int> y(n);
            for (size_t i = 0; i < n; ++i) y[i] = (mask >> i) & 1;
            for (const auto& s : score_sets)
                ASSERT_DOUBLE_EQ(auroc(s, y), auroc_oracle(s, y)) << "n=" << n << " mask=" << mask;
        }
    }
}

TEST(Auroc, InvariantUnderMonotoneTransforms) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = 4 + static_cast<size_t>(rng.uniform() * 12);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool pos = false, neg = false;
        for (size_t i = 0; i < n; ++i) {
            s[i] = std::floor(rng.uniform() * 6) / 3.0 - 1.0;  // coarse grid forces ties
            y[i] = rng.uniform() < 0.5 ? 0 : 1;
            (y[i] ? pos : neg) = true;
        }
        if (!pos) y[0] = 1;
        if (!neg) y[n - 1] = 0;
        double base = auroc(s, y);
        auto apply = [&](double (*f)(double)) {
            std::vector<double> t(n);
            for (size_t i = 0; i < n; ++i) t[i] = f(s[i]);
            return auroc(t, y);
        };
        EXPECT_EQ(base, apply([](double x) { return 2.0 * x + 3.0; }));
        EXPECT_EQ(base, apply([](double x) { return std::exp(x); }));
        EXPECT_EQ(base, apply([](double x) { return std::atan(x); }));
    }
}

// ---------------------------------------------------------------------------

// Tiny 12-lead records with class-dependent amplitude, linearly separable.
Dataset toy_dataset(size_t per_class, size_t T, uint64_t seed) {
    Dataset ds;
    ds.vocab.add("LOW");
    ds.vocab.add("HIGH");
    Rng rng(seed);
    for (size_t c = 0; c < 2; ++c)
        for (size_t k = 0; k < per_class; ++k) {
            EcgRecord rec;
            rec.sampling_rate = 100;
            rec.labels = ClassVocabulary::bit(c);
            double amp = c == 0 ? 0.3 : 1.0;
            for (Lead l : kEightLeads) {
                std::vector<double> v(T);
                for (size_t t = 0; t < T; ++t)
                    v[t] = amp * std::sin(6.28 * t / 16.0) + 0.05 * rng.normal();
                rec.leads[l] = std::move(v);
            }
            ds.records.push_back(expand_to_twelve(rec));
        }
    return ds;
}

ClassifierConfig toy_classifier_config(uint64_t seed) {
    ClassifierConfig cfg;
    cfg.blocks = {1};
    cfg.width = 4;
    cfg.epochs = 6;
    cfg.batch = 8;
    cfg.lr = 3e-3;
    cfg.seed = seed;
    return cfg;
}

TEST(Classifier, SeparatesLinearlySeparableToyTask) {
    Dataset train = toy_dataset(20, 32, 1);
    Dataset val = toy_dataset(10, 32, 2);
    ClassifierResult res = train_classifier(train, val, toy_classifier_config(7));
    EXPECT_EQ(res.val_trace.size(), 6u);
    EXPECT_GT(res.best_val_auroc, 0.95);
}

TEST(Classifier, ValTraceIsSeedReproducible) {
    Dataset train = toy_dataset(8, 32, 1);
    Dataset val = toy_dataset(4, 32, 2);
    ClassifierConfig cfg = toy_classifier_config(9);
    cfg.epochs = 3;
    ClassifierResult a = train_classifier(train, val, cfg);
    ClassifierResult b = train_classifier(train, val, cfg);
    ASSERT_EQ(a.val_trace.size(), b.val_trace.size());
    for (size_t i = 0; i < a.val_trace.size(); ++i) EXPECT_EQ(a.val_trace[i], b.val_trace[i]);
}

TEST(Classifier, GuardsAgainstDegenerateSplits) {
    Dataset train = toy_dataset(6, 32, 1);
    Dataset val = toy_dataset(3, 32, 2);
    ClassifierConfig cfg = toy_classifier_config(1);

    Dataset empty;
    empty.vocab = train.vocab;
    EXPECT_THROW(train_classifier(empty, val, cfg), ContractError);
    EXPECT_THROW(train_classifier(train, empty, cfg), ContractError);

    Dataset constant = train;  // strip HIGH so only LOW varies
    for (auto& r : constant.records) r.labels &= ClassVocabulary::bit(0);
    try {
        train_classifier(constant, val, cfg);
        FAIL() << "expected single-class guard";
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("HIGH"), std::string::npos);
    }

    Dataset overlapping = val;  // shares records with val
    EXPECT_THROW(train_classifier(overlapping, val, cfg), ContractError);
}

TEST(Classifier, HandlesMultiLabelRecords) {
    Dataset train = toy_dataset(10, 32, 1);
    // tag a few records with both classes; training must still run
    train.records[0].labels = 0b11;
    train.records[10].labels = 0b11;
    Dataset val = toy_dataset(5, 32, 2);
    ClassifierConfig cfg = toy_classifier_config(3);
    cfg.epochs = 2;
    ClassifierResult res = train_classifier(train, val, cfg);
    EXPECT_EQ(res.val_trace.size(), 2u);
    EXPECT_GE(res.best_val_auroc, 0.0);
    EXPECT_LE(res.best_val_auroc, 1.0);
}

// ---------------------------------------------------------------------------

TEST(Hashing, RecordHashSeesContentChanges) {
    EcgRecord a = expand_to_twelve(synth_record(normal_spec(), 100, 2.0, 1, 1));
    EcgRecord b = a;
    EXPECT_EQ(record_hash(a), record_hash(b));
    b.mutable_lead(Lead::V3)[7] += 1e-9;
    EXPECT_NE(record_hash(a), record_hash(b));
    EcgRecord c = a;
    c.labels ^= 1u;
    EXPECT_NE(record_hash(a), record_hash(c));
    EXPECT_NE(split_hash({a, b}), split_hash({b, a}));  // order-dependent
}

// ---------------------------------------------------------------------------

// Content-distinct dummy records for enrichment arithmetic tests.
RecordGenerator stub_generator(size_t T = 8) {
    return [T](uint32_t labels, size_t count, uint64_t seed) {
        std::vector<EcgRecord> out;
        for (size_t k = 0; k < count; ++k) {
            EcgRecord rec;
            rec.sampling_rate = 100;
            rec.labels = labels;
            Rng rng(derive_seed(seed, k));
            for (Lead l : kEightLeads) {
                std::vector<double> v(T);
                for (auto& x : v) x = rng.normal();
                rec.leads[l] = std::move(v);
            }
            out.push_back(expand_to_twelve(rec));
        }
        return out;
    };
}

std::vector<EcgRecord> labeled_stub_records(size_t count, uint32_t labels, uint64_t seed) {
    return stub_generator()(labels, count, seed);
}

TEST(Enrichment, ProportionalAddsPerClassCounts) {
    ClassVocabulary vocab({"A", "B"});
    auto real = labeled_stub_records(50, 0b01, 1);
    auto more = labeled_stub_records(50, 0b10, 2);
    real.insert(real.end(), more.begin(), more.end());
    auto enriched = enrich_binary(real, vocab, stub_generator(),
                                  EnrichMode::both_classes_proportional, 0.5, 9);
    EXPECT_EQ(enriched.size(), 150u);
    size_t gen_a = 0, gen_b = 0;
    for (const auto& r : enriched)
        if (r.generated) (r.labels == 0b01 ? gen_a : gen_b)++;
    EXPECT_EQ(gen_a, 25u);
    EXPECT_EQ(gen_b, 25u);
    // real records lead and are untouched
    for (size_t i = 0; i < 100; ++i) {
        EXPECT_FALSE(enriched[i].generated);
        EXPECT_EQ(record_hash(enriched[i]), record_hash(real[i]));
    }
}

TEST(Enrichment, MinorityOnlyClosesTheGap) {
    ClassVocabulary vocab({"MAJ", "MIN"});
    auto real = labeled_stub_records(900, 0b01, 1);
    auto minority = labeled_stub_records(100, 0b10, 2);
    real.insert(real.end(), minority.begin(), minority.end());

    auto full = enrich_binary(real, vocab, stub_generator(), EnrichMode::minority_only, 1.0, 9);
    EXPECT_EQ(full.size(), 1800u);
    EXPECT_EQ(count_with_class(full, 0), 900u);
    EXPECT_EQ(count_with_class(full, 1), 900u);

    auto half = enrich_binary(real, vocab, stub_generator(), EnrichMode::minority_only, 0.5, 9);
    EXPECT_EQ(half.size(), 1400u);
    EXPECT_EQ(count_with_class(half, 0), 900u);
    EXPECT_EQ(count_with_class(half, 1), 500u);
}

TEST(Enrichment, ValidatesGeneratorBehavior) {
    ClassVocabulary vocab({"A", "B"});
    auto real = labeled_stub_records(4, 0b01, 1);
    auto more = labeled_stub_records(2, 0b10, 2);
    real.insert(real.end(), more.begin(), more.end());

    RecordGenerator wrong_labels = [](uint32_t, size_t count, uint64_t seed) {
        return labeled_stub_records(count, 0b01, seed);  // ignores the request
    };
    EXPECT_THROW(enrich_binary(real, vocab, wrong_labels, EnrichMode::minority_only, 1.0, 9),
                 ContractError);

    RecordGenerator short_count = [](uint32_t labels, size_t count, uint64_t seed) {
        return labeled_stub_records(count / 2, labels, seed);
    };
    EXPECT_THROW(enrich_binary(real, vocab, short_count, EnrichMode::minority_only, 1.0, 9),
                 ContractError);

    EXPECT_THROW(enrich_binary(real, vocab, nullptr, EnrichMode::minority_only, 1.0, 9),
                 ContractError);
    EXPECT_THROW(enrich_binary(real, vocab, stub_generator(), EnrichMode::minority_only, -1.0, 9),
                 ContractError);
    EXPECT_THROW(enrich_binary(real, vocab, stub_generator(), EnrichMode::balanced_pretrain, 1.0, 9),
                 ContractError);
}

TEST(Enrichment, BalancePretrainTopsUpToMajority) {
    ClassVocabulary vocab({"SR", "MI", "AF"});
    auto real = labeled_stub_records(10, 0b001, 1);
    auto mi = labeled_stub_records(4, 0b010, 2);
    auto af = labeled_stub_records(7, 0b100, 3);
    real.insert(real.end(), mi.begin(), mi.end());
    real.insert(real.end(), af.begin(), af.end());

    auto balanced = balance_pretrain(real, vocab, stub_generator(), 9);
    EXPECT_EQ(count_with_class(balanced, 0), 10u);
    EXPECT_EQ(count_with_class(balanced, 1), 10u);
    EXPECT_EQ(count_with_class(balanced, 2), 10u);
    size_t generated = 0;
    for (const auto& r : balanced) generated += r.generated ? 1 : 0;
    EXPECT_EQ(generated, 6u + 3u);

    // already balanced -> nothing added, no generator needed
    auto again = balance_pretrain(balanced, vocab, nullptr, 10);
    EXPECT_EQ(again.size(), balanced.size());

    // designated majority smaller than another class -> warning, no-op there
    std::vector<std::string> warnings;
    auto partial = balance_pretrain(real, vocab, stub_generator(), 11, 2, &warnings);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("SR"), std::string::npos);
    EXPECT_EQ(count_with_class(partial, 0), 10u);  // left alone
    EXPECT_EQ(count_with_class(partial, 1), 7u);   // topped to AF's 7
    EXPECT_EQ(count_with_class(partial, 2), 7u);
}

// ---------------------------------------------------------------------------

TEST(Metrics, CsvRoundTrip) {
    MetricsReport rep;
    rep.rows.push_back({"baseline", "NORM", 0.0, 1, 0.875, 100, 0, 0xabcdef12345ull});
    rep.rows.push_back({"minority_only", "TACH", 0.5, 1, 0.9125, 140, 40, 0xabcdef12345ull});
    std::string csv = rep.to_csv();
    MetricsReport back = parse_metrics_csv(csv);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[0].protocol, "baseline");
    EXPECT_EQ(back.rows[1].class_name, "TACH");
    EXPECT_EQ(back.rows[1].proportion, 0.5);
    EXPECT_EQ(back.rows[1].auroc, 0.9125);
    EXPECT_EQ(back.rows[1].train_size, 140u);
    EXPECT_EQ(back.rows[1].generated_count, 40u);
    EXPECT_EQ(back.rows[1].test_hash, 0xabcdef12345ull);
    EXPECT_EQ(back.to_csv(), csv);
    EXPECT_THROW(parse_metrics_csv("wrong,header\n"), ContractError);
}

SplitDatasets toy_splits(size_t train_per_class, size_t eval_per_class, size_t T) {
    SplitDatasets s;
    s.train = toy_dataset(train_per_class, T, 1);
    s.val = toy_dataset(eval_per_class, T, 2);
    s.test = toy_dataset(eval_per_class, T, 3);
    return s;
}

TEST(Experiment, ZeroGapPlanMatchesBaseline) {
    SplitDatasets data = toy_splits(8, 4, 32);  // balanced classes: gap = 0
    EnrichmentPlan plan;
    plan.mode = EnrichMode::minority_only;
    plan.proportions = {1.0};
    plan.generator = nullptr;  // no records needed when the gap is zero
    ClassifierConfig cfg = toy_classifier_config(5);
    cfg.epochs = 2;
    MetricsReport rep = run_experiment(plan, data, cfg);
    ASSERT_EQ(rep.rows.size(), 4u);  // 2 classes x (baseline + one proportion)
    for (const auto& row : rep.rows) {
        EXPECT_GE(row.auroc, 0.0);
        EXPECT_LE(row.auroc, 1.0);
        EXPECT_EQ(row.test_hash, rep.rows[0].test_hash);
    }
    // same data, same seed: the enriched cell equals the baseline exactly
    EXPECT_EQ(rep.rows[0].auroc, rep.rows[2].auroc);
    EXPECT_EQ(rep.rows[1].auroc, rep.rows[3].auroc);
    EXPECT_EQ(rep.rows[2].generated_count, 0u);
}

TEST(Experiment, ReportIsSeedDeterministic) {
    SplitDatasets data = toy_splits(6, 3, 32);
    EnrichmentPlan plan;
    plan.mode = EnrichMode::both_classes_proportional;
    plan.proportions = {0.5};
    plan.generator = stub_generator(32);
    plan.seed = 4;
    ClassifierConfig cfg = toy_classifier_config(5);
    cfg.epochs = 2;
    MetricsReport a = run_experiment(plan, data, cfg);
    MetricsReport b = run_experiment(plan, data, cfg);
    EXPECT_EQ(a.to_csv(), b.to_csv());
}

TEST(Experiment, DetectsTestLeakage) {
    SplitDatasets data = toy_splits(6, 3, 32);
    EnrichmentPlan plan;
    plan.mode = EnrichMode::both_classes_proportional;
    plan.proportions = {0.5};
    // malicious generator: returns copies of test records
    const Dataset& test = data.test;
    plan.generator = [&test](uint32_t labels, size_t count, uint64_t) {
        std::vector<EcgRecord> out;
        for (size_t k = 0; k < count; ++k) {
            EcgRecord r = test.records[k % test.records.size()];
            r.labels = labels;
            // keep label consistent with a real test record so hashes match
            for (const auto& t : test.records)
                if (t.labels == labels) {
                    r = t;
                    break;
                }
            out.push_back(r);
        }
        return out;
    };
    ClassifierConfig cfg = toy_classifier_config(5);
    cfg.epochs = 1;
    try {
        run_experiment(plan, data, cfg);
        FAIL() << "expected leakage rejection";
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("test split"), std::string::npos);
    }
}

TEST(Experiment, TransferReportsPerFractionAndAverage) {
    SplitDatasets target = toy_splits(8, 4, 32);
    Dataset pretrain = toy_dataset(10, 32, 9);
    // unbalance the pretrain set, then let the protocol re-balance it
    pretrain.records.resize(14);  // 10 LOW + 4 HIGH
    TransferPlan plan;
    plan.balance = true;
    plan.fractions = {0.5, 1.0};
    plan.generator = [](uint32_t labels, size_t count, uint64_t seed) {
        Dataset d = toy_dataset(count, 32, derive_seed(seed, labels));
        std::vector<EcgRecord> out;
        for (auto& r : d.records)
            if (r.labels == labels && out.size() < count) out.push_back(r);
        while (out.size() < count) {
            EcgRecord r = d.records[out.size() % d.records.size()];
            r.labels = labels;
            r.mutable_lead(Lead::I)[0] += 1e-6 * static_cast<double>(out.size());
            out.push_back(r);
        }
        return out;
    };
    ClassifierConfig cfg = toy_classifier_config(5);
    cfg.epochs = 2;
    MetricsReport rep = run_transfer(plan, pretrain, target, cfg);
    size_t frac_rows = 0, avg_rows = 0;
    std::map<std::string, std::pair<double, size_t>> sums;
    for (const auto& row : rep.rows) {
        if (row.protocol == "transfer") {
            ++frac_rows;
            sums[row.class_name].first += row.auroc;
            sums[row.class_name].second += 1;
        } else if (row.protocol == "transfer_avg") {
            ++avg_rows;
        }
    }
    EXPECT_EQ(frac_rows, 4u);  // 2 fractions x 2 classes
    EXPECT_EQ(avg_rows, 2u);
    for (const auto& row : rep.rows)
        if (row.protocol == "transfer_avg") {
            auto& acc = sums[row.class_name];
            EXPECT_NEAR(row.auroc, acc.first / acc.second, 1e-12);
        }
}

}  // namespace
