#pragma once

// Model checkpoint file ("CNV1").
//
// Layout: magic "CNV1" | u64 config text length + canonical INI text
// ([model], [vocab], [normalize], [history]) | u64 parameter count | per
// parameter: u16 name length + name, u8 rank, u64 per dimension, then the
// values as little-endian 64-bit floats. Doubles inside the text use %.17g,
// so the whole file round-trips bit-exactly.

#include <string>
#include <vector>

#include "ecgen/config.hpp"
#include "ecgen/ecg_io.hpp"
#include "ecgen/model.hpp"

namespace ecgen {

namespace detail {

inline std::string join_u64(const std::vector<size_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

}  // namespace detail

inline Ini checkpoint_config_text(const CnvaeModel& model) {
    const ModelConfig& cfg = model.config();
    Ini doc;
    doc.set("model", "scales", std::to_string(cfg.scales));
    doc.set("model", "groups", detail::join_u64(cfg.groups));
    doc.set("model", "z_channels", std::to_string(cfg.z_channels));
    doc.set("model", "width", std::to_string(cfg.width));
    doc.set("model", "pre_cells", std::to_string(cfg.pre_cells));
    doc.set("model", "post_cells", std::to_string(cfg.post_cells));
    doc.set("model", "cond_cells", std::to_string(cfg.cond_cells));
    doc.set("model", "mixture", std::to_string(cfg.mixture));
    doc.set("model", "bits", std::to_string(cfg.bits));
    doc.set("model", "signal_length", std::to_string(cfg.T));
    doc.set("model", "cond_dim", std::to_string(cfg.cond_dim));
    doc.set("model", "sampling_rate", std::to_string(cfg.sampling_rate));
    for (const auto& name : model.vocabulary().names()) {
        if (name.find_first_of(",=\n[]") != std::string::npos)
            throw ContractError(strf("class name '%s' cannot be stored in a checkpoint",
                                     name.c_str()));
    }
    std::string classes;
    for (size_t i = 0; i < model.vocabulary().size(); ++i)
        classes += (i ? "," : "") + model.vocabulary().name(i);
    doc.set("vocab", "classes", classes);
    for (const auto& [lead, range] : model.norm().range)
        doc.set("normalize", lead_name(lead),
                fmt_double(range.first) + "," + fmt_double(range.second));
    doc.set("history", "epochs", std::to_string(model.history().size()));
    for (size_t i = 0; i < model.history().size(); ++i) {
        const EpochStats& e = model.history()[i];
        doc.set("history", strf("e%zu", i),
                fmt_double(e.nll) + "," + fmt_double(e.kl) + "," + fmt_double(e.total));
    }
    return doc;
}

inline std::vector<uint8_t> encode_model(const CnvaeModel& model) {
    detail::ByteWriter w;
    w.raw("CNV1", 4);
    std::string text = checkpoint_config_text(model).serialize();
    w.u64(text.size());
    w.raw(text.data(), text.size());
    const auto& items = model.params().items();
    w.u64(items.size());
    for (const auto& [name, t] : items) {
        if (name.size() > 0xffff) throw ContractError("parameter name too long for file format");
        w.u16(static_cast<uint16_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u8(static_cast<uint8_t>(t.rank()));
        for (size_t d : t.shape()) w.u64(d);
        for (double v : t.data()) w.f64(v);
    }
    return w.bytes;
}

inline CnvaeModel decode_model(const std::vector<uint8_t>& bytes) {
    detail::ByteReader r(bytes.data(), bytes.size());
    if (r.str(4, "magic") != "CNV1") throw IoError("not a model checkpoint (bad magic)");
    uint64_t text_len = r.u64("config length");
    std::string text = r.str(text_len, "config text");

    StrictReader cfg_reader(Ini::parse(text));
    ModelConfig cfg;
    cfg.scales = cfg_reader.get_uint("model", "scales");
    cfg.groups.clear();
    for (const auto& item : cfg_reader.get_list("model", "groups"))
        cfg.groups.push_back(std::strtoull(item.c_str(), nullptr, 10));
    cfg.z_channels = cfg_reader.get_uint("model", "z_channels");
    cfg.width = cfg_reader.get_uint("model", "width");
    cfg.pre_cells = cfg_reader.get_uint("model", "pre_cells");
    cfg.post_cells = cfg_reader.get_uint("model", "post_cells");
    cfg.cond_cells = cfg_reader.get_uint("model", "cond_cells");
    cfg.mixture = cfg_reader.get_uint("model", "mixture");
    cfg.bits = static_cast<int>(cfg_reader.get_int("model", "bits"));
    cfg.T = cfg_reader.get_uint("model", "signal_length");
    cfg.cond_dim = cfg_reader.get_uint("model", "cond_dim");
    cfg.sampling_rate = static_cast<uint16_t>(cfg_reader.get_uint("model", "sampling_rate"));

    ClassVocabulary vocab(cfg_reader.get_list("vocab", "classes"));

    LeadNorm norm;
    for (size_t li = 0; li < kLeadNames.size(); ++li)
        if (cfg_reader.has("normalize", kLeadNames[li])) {
            auto vals = cfg_reader.get_double_list("normalize", kLeadNames[li]);
            if (vals.size() != 2)
                throw IoError(strf("checkpoint: lead %s range needs two values", kLeadNames[li]));
            norm.range[static_cast<Lead>(li)] = {vals[0], vals[1]};
        }

    std::vector<EpochStats> history(cfg_reader.get_uint("history", "epochs"));
    for (size_t i = 0; i < history.size(); ++i) {
        auto vals = cfg_reader.get_double_list("history", strf("e%zu", i));
        if (vals.size() != 3)
            throw IoError(strf("checkpoint: history entry %zu needs three values", i));
        history[i] = {vals[0], vals[1], vals[2]};
    }
    cfg_reader.done();

    CnvaeModel model(cfg, vocab, /*init_seed=*/0);
    model.set_norm(std::move(norm));
    model.set_history(std::move(history));

    uint64_t count = r.u64("parameter count");
    auto& items = model.params().items();
    if (count != items.size())
        throw IoError(strf("checkpoint holds %llu parameters, model needs %zu",
                           static_cast<unsigned long long>(count), items.size()));
    for (auto& [name, t] : items) {
        uint16_t len = r.u16("parameter name length");
        std::string fname = r.str(len, "parameter name");
        if (fname != name)
            throw IoError(strf("checkpoint parameter '%s' does not match model parameter '%s'",
                               fname.c_str(), name.c_str()));
        uint8_t rank = r.u8("parameter rank");
        if (rank != t.rank())
            throw IoError(strf("parameter '%s': rank %u in file, %zu in model", name.c_str(),
                               rank, t.rank()));
        for (size_t d = 0; d < rank; ++d) {
            uint64_t dim = r.u64("parameter dimension");
            if (dim != t.dim(d))
                throw IoError(strf("parameter '%s': dimension %zu is %llu in file, %zu in model",
                                   name.c_str(), d, static_cast<unsigned long long>(dim),
                                   t.dim(d)));
        }
        auto buf = t.mutable_data();
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = r.f64("parameter values");
    }
    if (r.pos != bytes.size()) throw IoError("trailing bytes after last parameter");
    return model;
}

inline void save_model(const CnvaeModel& model, const std::string& path) {
    detail::write_file_bytes(path, encode_model(model));
}

inline CnvaeModel load_model(const std::string& path) {
    return decode_model(detail::read_file_bytes(path));
}

}  // namespace ecgen
