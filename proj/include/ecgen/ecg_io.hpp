#pragma once

// Binary dataset file ("ECG8"): class vocabulary plus records with float32
// samples, explicitly little-endian so files are portable and bit-exact.
//
// Layout: magic "ECG8" | version u16 | vocab count u16, then per name
// (length u16, UTF-8 bytes) | record count u32 | per record: lead count u8,
// length u32, sampling rate u16, label bitmask u32, then per present lead in
// canonical order the samples as float32.

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "ecgen/ecg.hpp"

namespace ecgen {
namespace detail {

struct ByteWriter {
    std::vector<uint8_t> bytes;
    void u8(uint8_t v) { bytes.push_back(v); }
    void u16(uint16_t v) {
        bytes.push_back(v & 0xff);
        bytes.push_back(v >> 8);
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
    }
    void f32(float v) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void raw(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
};

struct ByteReader {
    const uint8_t* p;
    size_t n, pos = 0;
    ByteReader(const uint8_t* data, size_t size) : p(data), n(size) {}
    void need(size_t k, const char* what) {
        if (pos + k > n) throw IoError(strf("file truncated reading %s", what));
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return p[pos++];
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = p[pos] | (uint16_t(p[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char* what) {
        uint32_t u = u32(what);
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64(const char* what) {
        uint64_t u = u64(what);
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str(size_t k, const char* what) {
        need(k, what);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
};

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError(strf("cannot open '%s' for reading", path.c_str()));
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> bytes(size > 0 ? static_cast<size_t>(size) : 0);
    if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
        std::fclose(f);
        throw IoError(strf("failed to read '%s'", path.c_str()));
    }
    std::fclose(f);
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError(strf("cannot open '%s' for writing", path.c_str()));
    if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
        std::fclose(f);
        throw IoError(strf("failed to write '%s'", path.c_str()));
    }
    std::fclose(f);
}

}  // namespace detail

inline constexpr uint16_t kDatasetFormatVersion = 1;

inline std::vector<uint8_t> encode_dataset(const Dataset& ds) {
    detail::ByteWriter w;
    w.raw("ECG8", 4);
    w.u16(kDatasetFormatVersion);
    if (ds.vocab.size() > 0xffff) throw ContractError("vocabulary too large for file format");
    w.u16(static_cast<uint16_t>(ds.vocab.size()));
    for (const auto& name : ds.vocab.names()) {
        if (name.size() > 0xffff) throw ContractError("class name too long for file format");
        w.u16(static_cast<uint16_t>(name.size()));
        w.raw(name.data(), name.size());
    }
    if (ds.records.size() > 0xffffffffu) throw ContractError("too many records for file format");
    w.u32(static_cast<uint32_t>(ds.records.size()));
    for (const auto& rec : ds.records) {
        rec.check_consistent();
        if (!rec.is_eight() && !rec.is_twelve())
            throw ContractError("dataset file holds 8- or 12-lead records only");
        w.u8(static_cast<uint8_t>(rec.leads.size()));
        w.u32(static_cast<uint32_t>(rec.length()));
        w.u16(rec.sampling_rate);
        w.u32(rec.labels);
        for (auto& [l, v] : rec.leads)  // map iterates in canonical lead order
            for (double x : v) w.f32(static_cast<float>(x));
    }
    return w.bytes;
}

inline Dataset decode_dataset(const std::vector<uint8_t>& bytes) {
    detail::ByteReader r(bytes.data(), bytes.size());
    if (r.str(4, "magic") != "ECG8") throw IoError("not a dataset file (bad magic)");
    uint16_t version = r.u16("version");
    if (version != kDatasetFormatVersion)
        throw IoError(strf("unsupported dataset version %u", version));
    Dataset ds;
    uint16_t nclasses = r.u16("class count");
    for (uint16_t i = 0; i < nclasses; ++i) {
        uint16_t len = r.u16("class name length");
        ds.vocab.add(r.str(len, "class name"));
    }
    uint32_t nrec = r.u32("record count");
    ds.records.reserve(nrec);
    for (uint32_t i = 0; i < nrec; ++i) {
        uint8_t nleads = r.u8("lead count");
        if (nleads != 8 && nleads != 12)
            throw IoError(strf("record %u has %u leads; expected 8 or 12", i, nleads));
        uint32_t len = r.u32("record length");
        EcgRecord rec;
        rec.sampling_rate = r.u16("sampling rate");
        rec.labels = r.u32("label bitmask");
        const auto fill = [&](Lead l) {
            std::vector<double> v(len);
            for (uint32_t t = 0; t < len; ++t) v[t] = r.f32("samples");
            rec.leads[l] = std::move(v);
        };
        if (nleads == 8)
            for (Lead l : kEightLeads) fill(l);
        else
            for (size_t li = 0; li < 12; ++li) fill(static_cast<Lead>(li));
        ds.records.push_back(std::move(rec));
    }
    if (r.pos != bytes.size()) throw IoError("trailing bytes after last record");
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    detail::write_file_bytes(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) {
    return decode_dataset(detail::read_file_bytes(path));
}

}  // namespace ecgen
