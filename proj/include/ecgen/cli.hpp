#pragma once

// Batch command-line front end. Subcommands are driven by strict INI run
// configs; every config-driven run writes its fully resolved config next to
// its outputs so any artifact can be reproduced from the directory alone.
// Exit codes: 0 success, 1 contract/usage error, 2 I/O error.

#include <bit>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecgen/checkpoint.hpp"
#include "ecgen/config.hpp"
#include "ecgen/ecg.hpp"
#include "ecgen/ecg_io.hpp"
#include "ecgen/eval.hpp"
#include "ecgen/model.hpp"
#include "ecgen/svg.hpp"
#include "ecgen/synth.hpp"

namespace ecgen::cli {

namespace fs = std::filesystem;

inline std::string read_text_file(const fs::path& path) {
    std::vector<uint8_t> bytes = detail::read_file_bytes(path.string());
    return std::string(bytes.begin(), bytes.end());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    detail::write_file_bytes(path.string(), std::vector<uint8_t>(text.begin(), text.end()));
}

inline fs::path resolve_out_dir(StrictReader& r) {
    std::string configured = r.get_string("output", "dir", "");
    fs::path dir;
    if (!configured.empty()) {
        dir = configured;
    } else if (const char* env = std::getenv("ECGEN_OUT"); env && *env) {
        dir = env;
    } else {
        dir = ".";
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir))
        throw IoError(strf("cannot create output directory '%s'", dir.string().c_str()));
    return dir;
}

inline std::string join_strings(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += ",";
        out += s;
    }
    return out;
}

inline std::string join_sizes(const std::vector<size_t>& items) {
    std::string out;
    for (size_t v : items) {
        if (!out.empty()) out += ",";
        out += strf("%zu", v);
    }
    return out;
}

inline std::string join_doubles(const std::vector<double>& items) {
    std::string out;
    for (double v : items) {
        if (!out.empty()) out += ",";
        out += fmt_double(v);
    }
    return out;
}

inline void set_uint(Ini& ini, const std::string& sec, const std::string& key, uint64_t v) {
    ini.set(sec, key, strf("%llu", static_cast<unsigned long long>(v)));
}

inline void set_double(Ini& ini, const std::string& sec, const std::string& key, double v) {
    ini.set(sec, key, fmt_double(v));
}

inline std::vector<size_t> get_size_list(StrictReader& r, const std::string& sec,
                                         const std::string& key) {
    std::vector<size_t> out;
    for (double v : r.get_double_list(sec, key)) {
        if (v < 0 || v != std::floor(v))
            throw ContractError(strf("config: key '%s' in [%s] must list non-negative integers",
                                     key.c_str(), sec.c_str()));
        out.push_back(static_cast<size_t>(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shared config fragments

inline const std::map<std::string, ClassSpec>& synth_presets() {
    static const std::map<std::string, ClassSpec> presets = {{"NORM", normal_spec()},
                                                             {"TACH", pathological_spec()}};
    return presets;
}

inline ModelConfig read_model_section(StrictReader& r) {
    ModelConfig m;
    m.scales = r.get_uint("model", "scales", m.scales);
    if (r.has("model", "groups")) m.groups = get_size_list(r, "model", "groups");
    m.z_channels = r.get_uint("model", "z_channels", m.z_channels);
    m.width = r.get_uint("model", "width", m.width);
    m.pre_cells = r.get_uint("model", "pre_cells", m.pre_cells);
    m.post_cells = r.get_uint("model", "post_cells", m.post_cells);
    m.cond_cells = r.get_uint("model", "cond_cells", m.cond_cells);
    m.mixture = r.get_uint("model", "mixture", m.mixture);
    m.bits = static_cast<int>(r.get_int("model", "bits", m.bits));
    m.T = r.get_uint("model", "signal_length", m.T);
    m.cond_dim = r.get_uint("model", "cond_dim", m.cond_dim);
    m.sampling_rate = static_cast<uint16_t>(r.get_uint("model", "sampling_rate", m.sampling_rate));
    return m;
}

inline void write_model_section(Ini& ini, const ModelConfig& m) {
    set_uint(ini, "model", "scales", m.scales);
    ini.set("model", "groups", join_sizes(m.groups));
    set_uint(ini, "model", "z_channels", m.z_channels);
    set_uint(ini, "model", "width", m.width);
    set_uint(ini, "model", "pre_cells", m.pre_cells);
    set_uint(ini, "model", "post_cells", m.post_cells);
    set_uint(ini, "model", "cond_cells", m.cond_cells);
    set_uint(ini, "model", "mixture", m.mixture);
    ini.set("model", "bits", strf("%d", m.bits));
    set_uint(ini, "model", "signal_length", m.T);
    set_uint(ini, "model", "cond_dim", m.cond_dim);
    set_uint(ini, "model", "sampling_rate", m.sampling_rate);
}

inline TrainOptions read_training_section(StrictReader& r) {
    TrainOptions o;
    o.epochs = static_cast<int>(r.get_int("training", "epochs", o.epochs));
    o.batch = r.get_uint("training", "batch", o.batch);
    o.lr = r.get_double("training", "lr", o.lr);
    o.weight_decay = r.get_double("training", "weight_decay", o.weight_decay);
    o.lr_warmup = static_cast<int>(r.get_int("training", "lr_warmup", o.lr_warmup));
    o.kl_warmup = static_cast<int>(r.get_int("training", "kl_warmup", o.kl_warmup));
    o.free_bits = r.get_double("training", "free_bits", o.free_bits);
    o.clip = r.get_double("training", "clip", o.clip);
    o.seed = r.get_uint("training", "seed", o.seed);
    return o;
}

inline void write_training_section(Ini& ini, const TrainOptions& o) {
    ini.set("training", "epochs", strf("%d", o.epochs));
    set_uint(ini, "training", "batch", o.batch);
    set_double(ini, "training", "lr", o.lr);
    set_double(ini, "training", "weight_decay", o.weight_decay);
    ini.set("training", "lr_warmup", strf("%d", o.lr_warmup));
    ini.set("training", "kl_warmup", strf("%d", o.kl_warmup));
    set_double(ini, "training", "free_bits", o.free_bits);
    set_double(ini, "training", "clip", o.clip);
    set_uint(ini, "training", "seed", o.seed);
}

inline ClassifierConfig read_classifier_section(StrictReader& r) {
    ClassifierConfig c;
    if (r.has("classifier", "blocks")) c.blocks = get_size_list(r, "classifier", "blocks");
    c.width = r.get_uint("classifier", "width", c.width);
    c.epochs = static_cast<int>(r.get_int("classifier", "epochs", c.epochs));
    c.batch = r.get_uint("classifier", "batch", c.batch);
    c.lr = r.get_double("classifier", "lr", c.lr);
    c.weight_decay = r.get_double("classifier", "weight_decay", c.weight_decay);
    c.seed = r.get_uint("classifier", "seed", c.seed);
    return c;
}

inline void write_classifier_section(Ini& ini, const ClassifierConfig& c) {
    ini.set("classifier", "blocks", join_sizes(c.blocks));
    set_uint(ini, "classifier", "width", c.width);
    ini.set("classifier", "epochs", strf("%d", c.epochs));
    set_uint(ini, "classifier", "batch", c.batch);
    set_double(ini, "classifier", "lr", c.lr);
    set_double(ini, "classifier", "weight_decay", c.weight_decay);
    set_uint(ini, "classifier", "seed", c.seed);
}

// Datasets on disk hold the eight measured leads; the evaluation bench wants
// the full clinical twelve, so splits are expanded at this boundary.
inline Dataset load_split_twelve(const std::string& path) {
    Dataset ds = load_dataset(path);
    for (auto& rec : ds.records)
        if (rec.is_eight()) rec = expand_to_twelve(rec);
    return ds;
}

struct GeneratorBundle {
    RecordGenerator gen;
    std::string id = "none";
};

// `kind` is "none", "oracle" (synthetic PQRST presets matched by class name),
// or a checkpoint path for a trained generative model.
inline GeneratorBundle make_generator(const std::string& kind, double temperature,
                                      const Dataset& reference) {
    if (kind == "none") return {};
    if (reference.records.empty())
        throw ContractError("generator: reference train split is empty");
    const EcgRecord& ref = reference.records.front();
    if (kind == "oracle") {
        ClassVocabulary vocab = reference.vocab;
        uint16_t fs = ref.sampling_rate;
        size_t length = ref.length();
        GeneratorBundle b;
        b.id = "oracle";
        b.gen = [vocab, fs, length](uint32_t labels, size_t count, uint64_t seed) {
            if (labels == 0 || (labels & (labels - 1)) != 0)
                throw ContractError("oracle generator: exactly one class bit per request");
            std::string name = vocab.name(static_cast<size_t>(std::countr_zero(labels)));
            auto it = synth_presets().find(name);
            if (it == synth_presets().end())
                throw ContractError(strf("oracle generator: no synthetic preset for class '%s'",
                                         name.c_str()));
            double duration = static_cast<double>(length) / static_cast<double>(fs);
            std::vector<EcgRecord> out;
            out.reserve(count);
            for (size_t k = 0; k < count; ++k)
                out.push_back(expand_to_twelve(
                    synth_record(it->second, fs, duration, derive_seed(seed, k), labels)));
            return out;
        };
        return b;
    }
    auto model = std::make_shared<CnvaeModel>(load_model(kind));
    if (model->vocabulary().names() != reference.vocab.names())
        throw ContractError(strf("generator checkpoint '%s' has a different class vocabulary "
                                 "than the train split",
                                 kind.c_str()));
    if (model->config().T != ref.length() ||
        model->config().sampling_rate != ref.sampling_rate)
        throw ContractError(strf("generator checkpoint '%s' emits %zu samples at %u Hz but the "
                                 "train split holds %zu samples at %u Hz",
                                 kind.c_str(), model->config().T, model->config().sampling_rate,
                                 ref.length(), ref.sampling_rate));
    GeneratorBundle b;
    b.id = fs::path(kind).filename().string();
    b.gen = [model, temperature](uint32_t labels, size_t count, uint64_t seed) {
        return model->generate(labels, count, temperature, seed);
    };
    return b;
}

inline std::string summary_table(const MetricsReport& rep) {
    std::map<std::tuple<std::string, std::string, double>, std::pair<double, size_t>> cells;
    for (const auto& row : rep.rows) {
        auto& acc = cells[{row.protocol, row.class_name, row.proportion}];
        acc.first += row.auroc;
        acc.second += 1;
    }
    std::string out = strf("%-28s %-12s %12s %10s %6s\n", "protocol", "class", "proportion",
                           "auroc", "runs");
    for (const auto& [key, acc] : cells)
        out += strf("%-28s %-12s %12s %10.4f %6zu\n", std::get<0>(key).c_str(),
                    std::get<1>(key).c_str(), strf("%.4g", std::get<2>(key)).c_str(),
                    acc.first / static_cast<double>(acc.second), acc.second);
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_synth_data(const std::string& config_path) {
    StrictReader r(Ini::parse(read_text_file(config_path)));
    std::vector<std::string> classes = r.has("synth", "classes")
                                           ? r.get_list("synth", "classes")
                                           : std::vector<std::string>{"NORM", "TACH"};
    std::vector<size_t> counts = get_size_list(r, "synth", "counts");
    uint16_t fs = static_cast<uint16_t>(r.get_uint("synth", "sampling_rate", 100));
    double duration = r.get_double("synth", "duration_s", 5.12);
    uint64_t seed = r.get_uint("synth", "seed", 1);
    fs::path out_dir = resolve_out_dir(r);
    std::string file = r.get_string("output", "file", "synth.ecg8");
    r.done();

    std::vector<ClassSpec> specs;
    for (const auto& name : classes) {
        auto it = synth_presets().find(name);
        if (it == synth_presets().end())
            throw ContractError(strf("unknown synthetic class preset '%s' (known: NORM, TACH)",
                                     name.c_str()));
        specs.push_back(it->second);
    }
    Dataset ds = make_synth_dataset(specs, counts, fs, duration, seed);
    save_dataset(ds, (out_dir / file).string());

    Ini resolved;
    resolved.set("synth", "classes", join_strings(classes));
    resolved.set("synth", "counts", join_sizes(counts));
    set_uint(resolved, "synth", "sampling_rate", fs);
    set_double(resolved, "synth", "duration_s", duration);
    set_uint(resolved, "synth", "seed", seed);
    resolved.set("output", "dir", out_dir.string());
    resolved.set("output", "file", file);
    write_text_file(out_dir / "synth-data.resolved.ini", resolved.serialize());

    std::cout << strf("wrote %zu records to %s\n", ds.records.size(),
                      (out_dir / file).string().c_str());
    return 0;
}

inline int cmd_train(const std::string& config_path) {
    StrictReader r(Ini::parse(read_text_file(config_path)));
    std::string train_path = r.get_string("data", "train");
    bool filter = r.get_bool("data", "filter", false);
    double filter_lo = r.get_double("data", "filter_lo", 2.5);
    double filter_hi = r.get_double("data", "filter_hi", 97.5);
    double min_keep = r.get_double("data", "min_keep_fraction", 0.5);
    ModelConfig mcfg = read_model_section(r);
    TrainOptions opts = read_training_section(r);
    fs::path out_dir = resolve_out_dir(r);
    std::string ckpt_name = r.get_string("output", "checkpoint", "model.cnv");
    std::string loss_name = r.get_string("output", "loss_csv", "loss.csv");
    r.done();

    Dataset ds = load_dataset(train_path);
    if (ds.records.empty()) throw ContractError("train: dataset has no records");
    std::vector<EcgRecord> records = ds.records;
    if (filter) {
        FilterReport report = percentile_filter(records, filter_lo, filter_hi, min_keep);
        records = apply_filter(records, report);
        std::cout << strf("percentile filter kept %zu of %zu records\n", records.size(),
                          ds.records.size());
    }
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].is_twelve()) records[i] = reduce_to_eight(records[i]);
        if (records[i].sampling_rate != mcfg.sampling_rate)
            records[i] = resample(records[i], mcfg.sampling_rate);
        if (records[i].length() != mcfg.T)
            throw ContractError(strf("train: record %zu has %zu samples after resampling, the "
                                     "model expects %zu",
                                     i, records[i].length(), mcfg.T));
    }
    LeadNorm norm = compute_lead_norm(records);
    for (auto& rec : records) rec = normalize_record(rec, norm);

    CnvaeModel model(mcfg, ds.vocab, opts.seed);
    model.set_norm(norm);
    std::vector<EpochStats> history = model.train(records, opts);
    save_model(model, (out_dir / ckpt_name).string());

    std::string csv = "epoch,nll,kl,total\n";
    for (size_t e = 0; e < history.size(); ++e)
        csv += strf("%zu,%s,%s,%s\n", e, fmt_double(history[e].nll).c_str(),
                    fmt_double(history[e].kl).c_str(), fmt_double(history[e].total).c_str());
    write_text_file(out_dir / loss_name, csv);

    Ini resolved;
    resolved.set("data", "train", train_path);
    resolved.set("data", "filter", filter ? "true" : "false");
    set_double(resolved, "data", "filter_lo", filter_lo);
    set_double(resolved, "data", "filter_hi", filter_hi);
    set_double(resolved, "data", "min_keep_fraction", min_keep);
    write_model_section(resolved, mcfg);
    write_training_section(resolved, opts);
    resolved.set("output", "dir", out_dir.string());
    resolved.set("output", "checkpoint", ckpt_name);
    resolved.set("output", "loss_csv", loss_name);
    write_text_file(out_dir / "train.resolved.ini", resolved.serialize());

    std::cout << strf("trained %d epochs; final total loss %s; checkpoint %s\n", opts.epochs,
                      fmt_double(history.back().total).c_str(),
                      (out_dir / ckpt_name).string().c_str());
    return 0;
}

inline int cmd_generate(const std::string& config_path) {
    StrictReader r(Ini::parse(read_text_file(config_path)));
    std::string ckpt = r.get_string("generate", "checkpoint");
    std::vector<std::string> label_names = r.get_list("generate", "labels");
    size_t count = r.get_uint("generate", "count");
    double temperature = r.get_double("generate", "temperature", 1.0);
    uint64_t seed = r.get_uint("generate", "seed", 1);
    fs::path out_dir = resolve_out_dir(r);
    std::string file = r.get_string("output", "file", "generated.ecg8");
    bool svg = r.get_bool("output", "svg", false);
    r.done();

    CnvaeModel model = load_model(ckpt);
    uint32_t mask = 0;
    for (const auto& name : label_names)
        mask |= ClassVocabulary::bit(model.vocabulary().index(name));
    if (mask == 0) throw ContractError("generate: at least one class label required");

    Dataset out;
    out.vocab = model.vocabulary();
    out.records = model.generate(mask, count, temperature, seed);
    save_dataset(out, (out_dir / file).string());

    if (svg) {
        std::string stem = fs::path(file).stem().string();
        for (size_t i = 0; i < out.records.size(); ++i)
            write_text_file(out_dir / strf("%s_%04zu.svg", stem.c_str(), i),
                            plot_record(out.records[i]));
    }

    Ini resolved;
    resolved.set("generate", "checkpoint", ckpt);
    resolved.set("generate", "labels", join_strings(label_names));
    set_uint(resolved, "generate", "count", count);
    set_double(resolved, "generate", "temperature", temperature);
    set_uint(resolved, "generate", "seed", seed);
    resolved.set("output", "dir", out_dir.string());
    resolved.set("output", "file", file);
    resolved.set("output", "svg", svg ? "true" : "false");
    write_text_file(out_dir / "generate.resolved.ini", resolved.serialize());

    std::cout << strf("generated %zu records to %s\n", out.records.size(),
                      (out_dir / file).string().c_str());
    return 0;
}

inline int cmd_eval_enrich(const std::string& config_path) {
    StrictReader r(Ini::parse(read_text_file(config_path)));
    std::string train_path = r.get_string("data", "train");
    std::string val_path = r.get_string("data", "val");
    std::string test_path = r.get_string("data", "test");
    std::string mode_name = r.get_string("experiment", "mode");
    std::vector<double> proportions = r.get_double_list("experiment", "proportions");
    std::string gen_kind = r.get_string("experiment", "generator");
    double temperature = r.get_double("experiment", "temperature", 1.0);
    uint64_t seed = r.get_uint("experiment", "seed", 1);
    ClassifierConfig ccfg = read_classifier_section(r);
    fs::path out_dir = resolve_out_dir(r);
    std::string csv_name = r.get_string("output", "csv", "metrics.csv");
    std::string svg_name = r.get_string("output", "svg", "curves.svg");
    r.done();

    EnrichMode mode;
    if (mode_name == "minority_only") mode = EnrichMode::minority_only;
    else if (mode_name == "both_classes_proportional") mode = EnrichMode::both_classes_proportional;
    else
        throw ContractError(strf("experiment: unknown mode '%s' (expected minority_only or "
                                 "both_classes_proportional)",
                                 mode_name.c_str()));

    SplitDatasets data;
    data.train = load_split_twelve(train_path);
    data.val = load_split_twelve(val_path);
    data.test = load_split_twelve(test_path);
    GeneratorBundle gen = make_generator(gen_kind, temperature, data.train);

    EnrichmentPlan plan;
    plan.mode = mode;
    plan.proportions = proportions;
    plan.generator = gen.gen;
    plan.generator_id = gen.id;
    plan.seed = seed;
    MetricsReport rep = run_experiment(plan, data, ccfg);

    write_text_file(out_dir / csv_name, rep.to_csv());
    write_text_file(out_dir / svg_name, plot_curves(rep));

    Ini resolved;
    resolved.set("data", "train", train_path);
    resolved.set("data", "val", val_path);
    resolved.set("data", "test", test_path);
    resolved.set("experiment", "mode", mode_name);
    resolved.set("experiment", "proportions", join_doubles(proportions));
    resolved.set("experiment", "generator", gen_kind);
    set_double(resolved, "experiment", "temperature", temperature);
    set_uint(resolved, "experiment", "seed", seed);
    write_classifier_section(resolved, ccfg);
    resolved.set("output", "dir", out_dir.string());
    resolved.set("output", "csv", csv_name);
    resolved.set("output", "svg", svg_name);
    write_text_file(out_dir / "eval-enrich.resolved.ini", resolved.serialize());

    std::cout << summary_table(rep);
    return 0;
}

inline int cmd_eval_transfer(const std::string& config_path) {
    StrictReader r(Ini::parse(read_text_file(config_path)));
    std::string pretrain_path = r.get_string("data", "pretrain");
    std::string train_path = r.get_string("data", "train");
    std::string val_path = r.get_string("data", "val");
    std::string test_path = r.get_string("data", "test");
    bool balance = r.get_bool("experiment", "balance", true);
    std::vector<double> fractions = r.get_double_list("experiment", "fractions");
    std::string gen_kind = r.get_string("experiment", "generator", "none");
    double temperature = r.get_double("experiment", "temperature", 1.0);
    uint64_t seed = r.get_uint("experiment", "seed", 1);
    ClassifierConfig ccfg = read_classifier_section(r);
    fs::path out_dir = resolve_out_dir(r);
    std::string csv_name = r.get_string("output", "csv", "metrics.csv");
    std::string svg_name = r.get_string("output", "svg", "curves.svg");
    r.done();

    Dataset pretrain = load_split_twelve(pretrain_path);
    SplitDatasets target;
    target.train = load_split_twelve(train_path);
    target.val = load_split_twelve(val_path);
    target.test = load_split_twelve(test_path);
    GeneratorBundle gen = make_generator(gen_kind, temperature, pretrain);

    TransferPlan plan;
    plan.balance = balance;
    plan.fractions = fractions;
    plan.generator = gen.gen;
    plan.generator_id = gen.id;
    plan.seed = seed;
    MetricsReport rep = run_transfer(plan, pretrain, target, ccfg);

    write_text_file(out_dir / csv_name, rep.to_csv());
    write_text_file(out_dir / svg_name, plot_curves(rep));

    Ini resolved;
    resolved.set("data", "pretrain", pretrain_path);
    resolved.set("data", "train", train_path);
    resolved.set("data", "val", val_path);
    resolved.set("data", "test", test_path);
    resolved.set("experiment", "balance", balance ? "true" : "false");
    resolved.set("experiment", "fractions", join_doubles(fractions));
    resolved.set("experiment", "generator", gen_kind);
    set_double(resolved, "experiment", "temperature", temperature);
    set_uint(resolved, "experiment", "seed", seed);
    write_classifier_section(resolved, ccfg);
    resolved.set("output", "dir", out_dir.string());
    resolved.set("output", "csv", csv_name);
    resolved.set("output", "svg", svg_name);
    write_text_file(out_dir / "eval-transfer.resolved.ini", resolved.serialize());

    std::cout << summary_table(rep);
    return 0;
}

inline int cmd_report(const std::string& in_dir, std::string out_path) {
    fs::path dir(in_dir);
    if (!fs::is_directory(dir)) throw IoError(strf("'%s' is not a directory", in_dir.c_str()));
    if (out_path.empty()) out_path = (dir / "summary.csv").string();
    std::string out_name = fs::path(out_path).filename().string();

    std::vector<fs::path> candidates;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
            entry.path().filename().string() != out_name)
            candidates.push_back(entry.path());
    std::sort(candidates.begin(), candidates.end());

    MetricsReport merged;
    size_t files = 0;
    for (const auto& path : candidates) {
        std::string text = read_text_file(path);
        size_t nl = text.find('\n');
        if (text.substr(0, nl) != kMetricsCsvHeader) continue;  // not a metrics file
        MetricsReport rep = parse_metrics_csv(text);
        merged.rows.insert(merged.rows.end(), rep.rows.begin(), rep.rows.end());
        ++files;
    }
    if (files == 0) throw ContractError("no reports found");

    write_text_file(out_path, merged.to_csv());
    std::cout << strf("merged %zu report files, %zu rows -> %s\n", files, merged.rows.size(),
                      out_path.c_str());
    std::cout << summary_table(merged);
    return 0;
}

// ---------------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"conditional hierarchical ECG generator and evaluation bench"};
    app.require_subcommand(1);

    std::string synth_cfg, train_cfg, gen_cfg, enrich_cfg, transfer_cfg;
    std::string report_in, report_out;

    CLI::App* synth = app.add_subcommand("synth-data", "write a synthetic multi-lead dataset");
    synth->add_option("config", synth_cfg, "run config (INI)")->required();
    synth->footer("config sections: [synth] classes counts sampling_rate duration_s seed;"
                  " [output] dir file");
    CLI::App* train = app.add_subcommand("train", "train a generative model on a dataset");
    train->add_option("config", train_cfg, "run config (INI)")->required();
    train->footer(
        "config sections: [data] train filter filter_lo filter_hi min_keep_fraction;"
        " [model] scales groups z_channels width pre_cells post_cells cond_cells mixture bits"
        " signal_length cond_dim sampling_rate;"
        " [training] epochs batch lr weight_decay lr_warmup kl_warmup free_bits clip seed;"
        " [output] dir checkpoint loss_csv");
    CLI::App* gen = app.add_subcommand("generate", "sample records from a checkpoint");
    gen->add_option("config", gen_cfg, "run config (INI)")->required();
    gen->footer("config sections: [generate] checkpoint labels count temperature seed;"
                " [output] dir file svg");
    CLI::App* enrich = app.add_subcommand("eval-enrich", "enrichment experiment grid");
    enrich->add_option("config", enrich_cfg, "run config (INI)")->required();
    enrich->footer(
        "config sections: [data] train val test;"
        " [experiment] mode proportions generator temperature seed;"
        " [classifier] blocks width epochs batch lr weight_decay seed;"
        " [output] dir csv svg");
    CLI::App* transfer = app.add_subcommand("eval-transfer", "transfer-learning experiment");
    transfer->add_option("config", transfer_cfg, "run config (INI)")->required();
    transfer->footer(
        "config sections: [data] pretrain train val test;"
        " [experiment] balance fractions generator temperature seed;"
        " [classifier] blocks width epochs batch lr weight_decay seed;"
        " [output] dir csv svg");
    CLI::App* report = app.add_subcommand("report", "merge metrics CSV files into a summary");
    report->add_option("--in", report_in, "directory holding metrics CSV files")->required();
    report->add_option("--out", report_out, "merged CSV path (default <in>/summary.csv)");

    std::vector<const char*> argv;
    argv.push_back("ecgen");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(synth_cfg);
        if (train->parsed()) return cmd_train(train_cfg);
        if (gen->parsed()) return cmd_generate(gen_cfg);
        if (enrich->parsed()) return cmd_eval_enrich(enrich_cfg);
        if (transfer->parsed()) return cmd_eval_transfer(transfer_cfg);
        if (report->parsed()) return cmd_report(report_in, report_out);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {  // TrainingDiverged, NumericError, ...
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace ecgen::cli
