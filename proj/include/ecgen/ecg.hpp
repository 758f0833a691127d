#pragma once

// ECG domain types, limb-lead algebra, and the preprocessing pipeline
// (percentile filtering, resampling, normalization, quantization).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ecgen/common.hpp"

namespace ecgen {

// Canonical lead order; files and model channels always use this order.
enum class Lead : uint8_t { I = 0, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6 };

inline constexpr std::array<const char*, 12> kLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

// The reduced lead set the model works in: the two independent limb leads
// plus the six chest leads. Everything else is derivable.
inline constexpr std::array<Lead, 8> kEightLeads = {Lead::I,  Lead::III, Lead::V1, Lead::V2,
                                                    Lead::V3, Lead::V4,  Lead::V5, Lead::V6};

inline const char* lead_name(Lead l) { return kLeadNames[static_cast<size_t>(l)]; }

inline Lead lead_from_name(const std::string& name) {
    for (size_t i = 0; i < kLeadNames.size(); ++i)
        if (name == kLeadNames[i]) return static_cast<Lead>(i);
    throw ContractError(strf("unknown lead name '%s'", name.c_str()));
}

struct EcgRecord {
    std::map<Lead, std::vector<double>> leads;  // keyed in canonical order
    uint16_t sampling_rate = 0;
    uint32_t labels = 0;     // bitmask over a ClassVocabulary
    bool generated = false;  // in-memory provenance marker, not serialized

    size_t length() const { return leads.empty() ? 0 : leads.begin()->second.size(); }
    bool has(Lead l) const { return leads.count(l) != 0; }

    const std::vector<double>& lead(Lead l) const {
        auto it = leads.find(l);
        if (it == leads.end()) throw ContractError(strf("record is missing lead %s", lead_name(l)));
        return it->second;
    }

    std::vector<double>& mutable_lead(Lead l) {
        auto it = leads.find(l);
        if (it == leads.end()) throw ContractError(strf("record is missing lead %s", lead_name(l)));
        return it->second;
    }

    void check_consistent() const {
        size_t n = length();
        for (auto& [l, v] : leads)
            if (v.size() != n)
                throw ContractError(strf("lead %s has %zu samples, expected %zu", lead_name(l),
                                         v.size(), n));
    }

    bool is_eight() const {
        if (leads.size() != 8) return false;
        for (Lead l : kEightLeads)
            if (!has(l)) return false;
        return true;
    }

    bool is_twelve() const { return leads.size() == 12; }
};

class ClassVocabulary {
public:
    ClassVocabulary() = default;
    explicit ClassVocabulary(std::vector<std::string> names) {
        for (auto& n : names) add(n);
    }

    size_t add(const std::string& name) {
        if (name.empty()) throw ContractError("class name must be non-empty");
        for (auto& n : names_)
            if (n == name) throw ContractError(strf("duplicate class name '%s'", name.c_str()));
        if (names_.size() >= 32) throw ContractError("class vocabulary limited to 32 (label bitmask)");
        names_.push_back(name);
        return names_.size() - 1;
    }

    size_t index(const std::string& name) const {
        for (size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return i;
        throw ContractError(strf("unknown class '%s'", name.c_str()));
    }

    const std::string& name(size_t i) const {
        if (i >= names_.size()) throw ContractError(strf("class index %zu out of range", i));
        return names_[i];
    }

    size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    static uint32_t bit(size_t idx) { return 1u << idx; }
    static bool has_label(uint32_t mask, size_t idx) { return (mask >> idx) & 1u; }

private:
    std::vector<std::string> names_;
};

struct Dataset {
    ClassVocabulary vocab;
    std::vector<EcgRecord> records;
};

// ---------------------------------------------------------------------------
// Limb-lead algebra
// ---------------------------------------------------------------------------

// Rebuild the four derived limb leads from I and III:
//   II = I + III, aVL = (I - III)/2, aVR = -(I + II)/2, aVF = (II + III)/2.
inline EcgRecord expand_to_twelve(const EcgRecord& rec) {
    if (!rec.is_eight())
        throw ContractError("expand_to_twelve: record must contain exactly leads I, III, V1..V6");
    rec.check_consistent();
    const auto& i = rec.lead(Lead::I);
    const auto& iii = rec.lead(Lead::III);
    size_t n = i.size();
    EcgRecord out;
    out.sampling_rate = rec.sampling_rate;
    out.labels = rec.labels;
    out.generated = rec.generated;
    std::vector<double> ii(n), avr(n), avl(n), avf(n);
    for (size_t t = 0; t < n; ++t) {
        double a = i[t], c = iii[t];
        double b = a + c;
        ii[t] = b;
        avl[t] = (a - c) / 2.0;
        avr[t] = -(a + b) / 2.0;
        avf[t] = (b + c) / 2.0;
    }
    out.leads[Lead::I] = i;
    out.leads[Lead::II] = std::move(ii);
    out.leads[Lead::III] = iii;
    out.leads[Lead::aVR] = std::move(avr);
    out.leads[Lead::aVL] = std::move(avl);
    out.leads[Lead::aVF] = std::move(avf);
    for (Lead l : {Lead::V1, Lead::V2, Lead::V3, Lead::V4, Lead::V5, Lead::V6})
        out.leads[l] = rec.lead(l);
    return out;
}

// Max samplewise violation of II = I + III; zero on records built by
// expand_to_twelve, a data-quality signal on anything else.
inline double einthoven_residual(const EcgRecord& rec) {
    const auto& i = rec.lead(Lead::I);
    const auto& ii = rec.lead(Lead::II);
    const auto& iii = rec.lead(Lead::III);
    double worst = 0;
    for (size_t t = 0; t < i.size(); ++t)
        worst = std::max(worst, std::fabs(i[t] + iii[t] - ii[t]));
    return worst;
}

inline EcgRecord reduce_to_eight(const EcgRecord& rec) {
    if (!rec.is_twelve()) throw ContractError("reduce_to_eight: record must contain all 12 leads");
    rec.check_consistent();
    EcgRecord out;
    out.sampling_rate = rec.sampling_rate;
    out.labels = rec.labels;
    out.generated = rec.generated;
    for (Lead l : kEightLeads) out.leads[l] = rec.lead(l);
    return out;
}

// ---------------------------------------------------------------------------
// Percentile filtering
// ---------------------------------------------------------------------------

struct Exclusion {
    size_t record_index;
    Lead lead;
    double value;  // the offending sample
};

struct FilterReport {
    std::map<Lead, std::pair<double, double>> bounds;  // per-lead [lo, hi]
    std::vector<size_t> kept;                          // surviving record indices
    std::vector<Exclusion> excluded;                   // one entry per dropped record
};

namespace detail {

// Linear-interpolated percentile of a sorted vector (the common numerical
// convention: index p/100 * (n-1)).
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ContractError("percentile of empty set");
    double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Computes per-lead global amplitude percentiles over the whole dataset and
// drops any record with a sample outside [p_lo, p_hi] on any lead. Errors if
// fewer than min_keep_fraction of the records survive.
inline FilterReport percentile_filter(const std::vector<EcgRecord>& records, double lo = 2.5,
                                      double hi = 97.5, double min_keep_fraction = 0.5) {
    if (records.empty()) throw ContractError("percentile_filter: empty dataset");
    if (!(lo >= 0 && lo < hi && hi <= 100))
        throw ContractError(strf("percentile_filter: bad percentile range [%g, %g]", lo, hi));
    FilterReport report;
    std::map<Lead, std::vector<double>> pool;
    for (const auto& r : records)
        for (auto& [l, v] : r.leads) pool[l].insert(pool[l].end(), v.begin(), v.end());
    for (auto& [l, v] : pool) {
        std::sort(v.begin(), v.end());
        report.bounds[l] = {detail::percentile_sorted(v, lo), detail::percentile_sorted(v, hi)};
    }
    for (size_t i = 0; i < records.size(); ++i) {
        bool ok = true;
        for (auto& [l, v] : records[i].leads) {
            auto [blo, bhi] = report.bounds.at(l);
            for (double x : v) {
                if (x < blo || x > bhi) {
                    report.excluded.push_back({i, l, x});
                    ok = false;
                    break;
                }
            }
            if (!ok) break;
        }
        if (ok) report.kept.push_back(i);
    }
    if (report.kept.empty())
        throw ContractError("percentile_filter: all records excluded; tolerance misconfigured");
    double frac = static_cast<double>(report.kept.size()) / static_cast<double>(records.size());
    if (frac < min_keep_fraction)
        throw ContractError(strf("percentile_filter: kept fraction %.3f below minimum %.3f", frac,
                                 min_keep_fraction));
    return report;
}

inline std::vector<EcgRecord> apply_filter(const std::vector<EcgRecord>& records,
                                           const FilterReport& report) {
    std::vector<EcgRecord> out;
    out.reserve(report.kept.size());
    for (size_t i : report.kept) out.push_back(records[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

// Linear-interpolation resampling; output length = round(len * target / fs).
inline EcgRecord resample(const EcgRecord& rec, uint16_t target_fs) {
    if (target_fs == 0) throw ContractError("resample: target rate must be positive");
    if (rec.length() == 0) throw ContractError("resample: zero-length record");
    if (rec.sampling_rate == 0) throw ContractError("resample: record has no sampling rate");
    rec.check_consistent();
    if (target_fs == rec.sampling_rate) {
        EcgRecord out = rec;
        return out;
    }
    size_t n = rec.length();
    size_t m = static_cast<size_t>(
        std::llround(static_cast<double>(n) * target_fs / rec.sampling_rate));
    if (m == 0) throw ContractError("resample: target length rounds to zero");
    double step = static_cast<double>(rec.sampling_rate) / target_fs;
    EcgRecord out;
    out.sampling_rate = target_fs;
    out.labels = rec.labels;
    out.generated = rec.generated;
    for (auto& [l, v] : rec.leads) {
        std::vector<double> w(m);
        for (size_t i = 0; i < m; ++i) {
            double src = static_cast<double>(i) * step;
            if (src >= static_cast<double>(n - 1)) {
                w[i] = v[n - 1];
                continue;
            }
            size_t j = static_cast<size_t>(src);
            double frac = src - static_cast<double>(j);
            w[i] = v[j] * (1.0 - frac) + v[j + 1] * frac;
        }
        out.leads[l] = std::move(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Amplitude normalization
// ---------------------------------------------------------------------------

// Per-lead affine map onto [-1, 1] using dataset-global min/max, kept so
// generated signals can be mapped back to physical units.
struct LeadNorm {
    std::map<Lead, std::pair<double, double>> range;  // lead -> (min, max)

    double to_unit(Lead l, double x) const {
        auto [lo, hi] = range.at(l);
        if (hi <= lo) return 0.0;
        return 2.0 * (x - lo) / (hi - lo) - 1.0;
    }

    double from_unit(Lead l, double u) const {
        auto [lo, hi] = range.at(l);
        if (hi <= lo) return lo;
        return lo + (u + 1.0) / 2.0 * (hi - lo);
    }
};

inline LeadNorm compute_lead_norm(const std::vector<EcgRecord>& records) {
    if (records.empty()) throw ContractError("compute_lead_norm: empty dataset");
    LeadNorm norm;
    for (const auto& r : records)
        for (auto& [l, v] : r.leads)
            for (double x : v) {
                auto it = norm.range.find(l);
                if (it == norm.range.end())
                    norm.range[l] = {x, x};
                else {
                    it->second.first = std::min(it->second.first, x);
                    it->second.second = std::max(it->second.second, x);
                }
            }
    return norm;
}

inline EcgRecord normalize_record(const EcgRecord& rec, const LeadNorm& norm) {
    EcgRecord out = rec;
    for (auto& [l, v] : out.leads)
        for (double& x : v) x = norm.to_unit(l, x);
    return out;
}

inline EcgRecord denormalize_record(const EcgRecord& rec, const LeadNorm& norm) {
    EcgRecord out = rec;
    for (auto& [l, v] : out.leads)
        for (double& x : v) x = norm.from_unit(l, x);
    return out;
}

// ---------------------------------------------------------------------------
// Quantization grid
// ---------------------------------------------------------------------------

// 2^bits uniform bins over [-1, 1]. Out-of-range samples clamp and count.
struct QuantGrid {
    int bits;
    explicit QuantGrid(int b) : bits(b) {
        if (b < 1 || b > 16) throw ContractError(strf("quantize: bits %d outside [1, 16]", b));
    }
    int levels() const { return 1 << bits; }
    double bin_width() const { return 2.0 / levels(); }

    int quantize(double x, size_t* clamp_warnings = nullptr) const {
        if (x < -1.0 || x > 1.0) {
            if (clamp_warnings) ++*clamp_warnings;
            x = std::min(1.0, std::max(-1.0, x));
        }
        int b = static_cast<int>(std::floor((x + 1.0) / bin_width()));
        return std::min(levels() - 1, std::max(0, b));
    }

    // Bin center.
    double dequantize(int bin) const {
        if (bin < 0 || bin >= levels())
            throw ContractError(strf("dequantize: bin %d outside [0, %d]", bin, levels() - 1));
        return -1.0 + (bin + 0.5) * bin_width();
    }
};

inline std::vector<int> quantize_samples(const std::vector<double>& v, int bits,
                                         size_t* clamp_warnings = nullptr) {
    QuantGrid grid(bits);
    std::vector<int> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = grid.quantize(v[i], clamp_warnings);
    return out;
}

inline std::vector<double> dequantize_samples(const std::vector<int>& bins, int bits) {
    QuantGrid grid(bits);
    std::vector<double> out(bins.size());
    for (size_t i = 0; i < bins.size(); ++i) out[i] = grid.dequantize(bins[i]);
    return out;
}

}  // namespace ecgen
