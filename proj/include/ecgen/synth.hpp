#pragma once

// Parametric synthetic ECG source: PQRST morphology built from Gaussian
// bumps, tiled at (optionally jittered) RR intervals and projected onto the
// eight model leads. Everything is seed-deterministic and has closed-form
// structure, so training and evaluation can be verified against known truth.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ecgen/ecg.hpp"
#include "ecgen/rng.hpp"

namespace ecgen {

struct Wave {
    double amp = 0;     // mV
    double center = 0;  // fraction of the beat interval
    double width = 0;   // Gaussian sigma, fraction of the beat interval
};

struct BeatTemplate {
    Wave p, q, r, s, t;
    double heart_rate = 60;  // bpm
    double rr_jitter = 0;    // fraction of RR, uniform in [-j, +j]
    double noise_std = 0;    // additive Gaussian noise, mV

    void validate() const {
        const Wave* waves[5] = {&p, &q, &r, &s, &t};
        const char* names[5] = {"P", "Q", "R", "S", "T"};
        double prev = 0.0;
        for (size_t i = 0; i < 5; ++i) {
            const Wave& w = *waves[i];
            if (!(w.center > prev && w.center < 1.0))
                throw ContractError(strf("beat template: %s center %g not strictly increasing in (0,1)",
                                         names[i], w.center));
            if (!(w.width > 0))
                throw ContractError(strf("beat template: %s width %g must be positive", names[i],
                                         w.width));
            if (!std::isfinite(w.amp))
                throw ContractError(strf("beat template: %s amplitude not finite", names[i]));
            prev = w.center;
        }
        if (!(heart_rate >= 20.0 && heart_rate <= 300.0))
            throw ContractError(strf("beat template: heart rate %g outside [20, 300] bpm",
                                     heart_rate));
        if (!(rr_jitter >= 0.0 && rr_jitter < 1.0))
            throw ContractError(strf("beat template: jitter %g outside [0, 1)", rr_jitter));
        if (!(noise_std >= 0.0))
            throw ContractError(strf("beat template: noise std %g negative", noise_std));
    }

    // Bump sum at beat phase u (fraction of the RR interval).
    double value_at(double u) const {
        const Wave* waves[5] = {&p, &q, &r, &s, &t};
        double acc = 0;
        for (const Wave* w : waves) {
            double d = (u - w->center) / w->width;
            acc += w->amp * std::exp(-0.5 * d * d);
        }
        return acc;
    }
};

struct ClassSpec {
    std::string name;
    BeatTemplate beat;
    std::array<double, 8> projection{};  // weights onto {I, III, V1..V6}

    void validate() const {
        if (name.empty()) throw ContractError("class spec: empty name");
        beat.validate();
        bool any = false;
        for (double w : projection) {
            if (!std::isfinite(w))
                throw ContractError(strf("class spec '%s': non-finite projection weight",
                                         name.c_str()));
            if (w != 0.0) any = true;
        }
        if (!any)
            throw ContractError(strf("class spec '%s': all projection weights zero", name.c_str()));
    }
};

// One labeled 8-lead record: beats tiled at jittered RR intervals, each
// lead = projection weight x waveform + Gaussian noise.
inline EcgRecord synth_record(const ClassSpec& spec, uint16_t fs, double duration_s,
                              uint64_t seed, uint32_t labels = 0) {
    spec.validate();
    if (fs == 0 || !(duration_s > 0)) throw ContractError("synth_record: fs and duration must be positive");
    double rr = 60.0 / spec.beat.heart_rate;
    if (duration_s < rr)
        throw ContractError(strf("synth_record: duration %gs shorter than one %g bpm beat",
                                 duration_s, spec.beat.heart_rate));
    size_t n = static_cast<size_t>(std::llround(duration_s * fs));
    Rng rng(seed);

    // Beat onsets, jittered per interval; bumps from adjacent beats overlap
    // smoothly because each beat contributes over an extended window.
    std::vector<double> waveform(n, 0.0);
    double t0 = 0.0;
    while (t0 < duration_s) {
        double rr_k = rr * (1.0 + spec.beat.rr_jitter * (2.0 * rng.uniform() - 1.0));
        double lo = std::max(0.0, t0 - 0.5 * rr_k);
        double hi = std::min(duration_s, t0 + 1.5 * rr_k);
        size_t i0 = static_cast<size_t>(std::ceil(lo * fs));
        size_t i1 = std::min(n, static_cast<size_t>(std::ceil(hi * fs)));
        for (size_t i = i0; i < i1; ++i) {
            double u = (static_cast<double>(i) / fs - t0) / rr_k;
            waveform[i] += spec.beat.value_at(u);
        }
        t0 += rr_k;
    }

    EcgRecord rec;
    rec.sampling_rate = fs;
    rec.labels = labels;
    for (size_t l = 0; l < kEightLeads.size(); ++l) {
        std::vector<double> v(n);
        for (size_t i = 0; i < n; ++i)
            v[i] = spec.projection[l] * waveform[i] +
                   (spec.beat.noise_std > 0 ? spec.beat.noise_std * rng.normal() : 0.0);
        rec.leads[kEightLeads[l]] = std::move(v);
    }
    return rec;
}

// Count local maxima above half the 99th-percentile amplitude, enforcing a
// 200 ms refractory gap between counted peaks.
inline size_t detect_beats(const std::vector<double>& x, uint16_t fs) {
    if (x.size() < 3 || fs == 0) return 0;
    for (double v : x)
        if (!std::isfinite(v)) throw ContractError("detect_beats: signal must be finite");
    std::vector<double> sorted(x);
    std::sort(sorted.begin(), sorted.end());
    double p99 = detail::percentile_sorted(sorted, 99.0);
    double threshold = 0.5 * p99;
    size_t refractory = static_cast<size_t>(std::llround(0.2 * fs));
    size_t count = 0;
    size_t last = 0;
    bool seen_any = false;
    for (size_t i = 1; i + 1 < x.size(); ++i) {
        if (!(x[i] > threshold)) continue;
        if (!(x[i] > x[i - 1] && x[i] >= x[i + 1])) continue;
        if (seen_any && i - last < refractory) continue;
        ++count;
        last = i;
        seen_any = true;
    }
    return count;
}

// Default two-class setup: rhythm and morphology both differ, so classifiers
// and conditional generators have real structure to find.
inline ClassSpec normal_spec() {
    ClassSpec s;
    s.name = "NORM";
    s.beat.p = {0.15, 0.15, 0.04};
    s.beat.q = {-0.10, 0.33, 0.02};
    s.beat.r = {1.00, 0.38, 0.03};
    s.beat.s = {-0.20, 0.44, 0.02};
    s.beat.t = {0.30, 0.65, 0.08};
    s.beat.heart_rate = 60;
    s.beat.rr_jitter = 0.03;
    s.beat.noise_std = 0.02;
    s.projection = {1.0, 0.5, -0.3, 0.8, 1.2, 1.0, 0.9, 0.7};
    return s;
}

inline ClassSpec pathological_spec() {
    ClassSpec s;
    s.name = "TACH";
    s.beat.p = {0.10, 0.15, 0.04};
    s.beat.q = {-0.12, 0.33, 0.02};
    s.beat.r = {0.90, 0.38, 0.03};
    s.beat.s = {-0.25, 0.44, 0.02};
    s.beat.t = {-0.25, 0.65, 0.08};  // inverted T
    s.beat.heart_rate = 150;
    s.beat.rr_jitter = 0.03;
    s.beat.noise_std = 0.02;
    s.projection = {0.9, 0.6, -0.2, 0.9, 1.1, 1.0, 0.8, 0.6};
    return s;
}

// Labeled multi-class dataset; record k of class c is seeded independently
// from (seed, running index), so any subset is reproducible.
inline Dataset make_synth_dataset(const std::vector<ClassSpec>& specs,
                                  const std::vector<size_t>& counts, uint16_t fs,
                                  double duration_s, uint64_t seed) {
    if (specs.empty() || specs.size() != counts.size())
        throw ContractError("make_synth_dataset: one count per class spec required");
    Dataset ds;
    for (const auto& s : specs) {
        s.validate();
        ds.vocab.add(s.name);
    }
    uint64_t index = 0;
    for (size_t c = 0; c < specs.size(); ++c) {
        uint32_t labels = ClassVocabulary::bit(c);
        for (size_t k = 0; k < counts[c]; ++k, ++index)
            ds.records.push_back(
                synth_record(specs[c], fs, duration_s, derive_seed(seed, index), labels));
    }
    return ds;
}

}  // namespace ecgen
