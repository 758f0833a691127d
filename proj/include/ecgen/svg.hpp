#pragma once

// Deterministic SVG rendering: AUROC-vs-proportion curves for metrics
// reports and stacked multi-lead waveform plots. Same input -> byte-identical
// output; no floating layout state, fixed palette, sorted series order.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ecgen/ecg.hpp"
#include "ecgen/eval.hpp"

namespace ecgen {

namespace detail {

inline std::string svg_num(double v) {
    std::string s = strf("%.2f", v);
    if (s == "-0.00") s = "0.00";
    return s;
}

inline const char* svg_palette(size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return colors[i % 8];
}

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

}  // namespace detail

// One chart: x = proportion, y = AUROC. One series per protocol; each series
// point is the mean AUROC over the (class, seed) rows sharing that
// proportion. Single-point series render as a lone marker.
inline std::string plot_curves(const MetricsReport& report) {
    if (report.rows.empty()) throw ContractError("plot: report has no rows");

    // Every (protocol, proportion) cell must cover the same class set; merged
    // reports from runs with different vocabularies are not plottable.
    std::set<std::string> ref_classes;
    bool have_ref = false;
    std::map<std::pair<std::string, double>, std::set<std::string>> cells;
    for (const auto& row : report.rows) cells[{row.protocol, row.proportion}].insert(row.class_name);
    for (const auto& [key, classes] : cells) {
        if (!have_ref) {
            ref_classes = classes;
            have_ref = true;
        } else if (classes != ref_classes) {
            throw ContractError(strf("plot: rows for protocol '%s' carry a different class set "
                                     "than the rest of the report (mixed vocabularies)",
                                     key.first.c_str()));
        }
    }

    // protocol -> proportion -> (sum, count); maps keep ordering deterministic
    std::map<std::string, std::map<double, std::pair<double, size_t>>> series;
    for (const auto& row : report.rows) {
        auto& acc = series[row.protocol][row.proportion];
        acc.first += row.auroc;
        acc.second += 1;
    }

    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& [name, pts] : series)
        for (const auto& [x, acc] : pts) {
            double y = acc.first / static_cast<double>(acc.second);
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    if (x_hi - x_lo < 1e-12) { x_lo -= 0.5; x_hi += 0.5; }
    if (y_hi - y_lo < 1e-12) { y_lo -= 0.05; y_hi += 0.05; }
    double x_pad = 0.05 * (x_hi - x_lo), y_pad = 0.08 * (y_hi - y_lo);
    x_lo -= x_pad; x_hi += x_pad; y_lo -= y_pad; y_hi += y_pad;

    const double W = 640, H = 420, ml = 70, mr = 160, mt = 20, mb = 50;
    auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb); };

    std::string svg;
    svg += strf("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "viewBox=\"0 0 %g %g\" font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H, W, H);
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // axes
    svg += strf("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"black\"/>\n",
                detail::svg_num(ml).c_str(), detail::svg_num(H - mb).c_str(),
                detail::svg_num(W - mr).c_str(), detail::svg_num(H - mb).c_str());
    svg += strf("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"black\"/>\n",
                detail::svg_num(ml).c_str(), detail::svg_num(mt).c_str(),
                detail::svg_num(ml).c_str(), detail::svg_num(H - mb).c_str());
    // three ticks per axis at lo / mid / hi of the padded range
    for (int k = 0; k < 3; ++k) {
        double fx = x_lo + (x_hi - x_lo) * k / 2.0;
        double fy = y_lo + (y_hi - y_lo) * k / 2.0;
        svg += strf("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"black\"/>\n",
                    detail::svg_num(px(fx)).c_str(), detail::svg_num(H - mb).c_str(),
                    detail::svg_num(px(fx)).c_str(), detail::svg_num(H - mb + 5).c_str());
        svg += strf("<text x=\"%s\" y=\"%s\" text-anchor=\"middle\">%s</text>\n",
                    detail::svg_num(px(fx)).c_str(), detail::svg_num(H - mb + 18).c_str(),
                    strf("%.3g", fx).c_str());
        svg += strf("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"black\"/>\n",
                    detail::svg_num(ml - 5).c_str(), detail::svg_num(py(fy)).c_str(),
                    detail::svg_num(ml).c_str(), detail::svg_num(py(fy)).c_str());
        svg += strf("<text x=\"%s\" y=\"%s\" text-anchor=\"end\">%s</text>\n",
                    detail::svg_num(ml - 8).c_str(), detail::svg_num(py(fy) + 4).c_str(),
                    strf("%.3g", fy).c_str());
    }
    // axis titles
    svg += strf("<text x=\"%s\" y=\"%s\" text-anchor=\"middle\">proportion</text>\n",
                detail::svg_num((ml + W - mr) / 2).c_str(), detail::svg_num(H - 12).c_str());
    svg += strf("<text x=\"16\" y=\"%s\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %s)\">AUROC</text>\n",
                detail::svg_num((mt + H - mb) / 2).c_str(),
                detail::svg_num((mt + H - mb) / 2).c_str());

    size_t idx = 0;
    for (const auto& [name, pts] : series) {
        const char* color = detail::svg_palette(idx);
        if (pts.size() >= 2) {
            std::string coords;
            for (const auto& [x, acc] : pts) {
                double y = acc.first / static_cast<double>(acc.second);
                if (!coords.empty()) coords += " ";
                coords += detail::svg_num(px(x)) + "," + detail::svg_num(py(y));
            }
            svg += strf("<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" "
                        "points=\"%s\"/>\n",
                        color, coords.c_str());
        }
        for (const auto& [x, acc] : pts) {
            double y = acc.first / static_cast<double>(acc.second);
            svg += strf("<circle cx=\"%s\" cy=\"%s\" r=\"3.5\" fill=\"%s\"/>\n",
                        detail::svg_num(px(x)).c_str(), detail::svg_num(py(y)).c_str(), color);
        }
        // legend entry
        double ly = mt + 16 + 18.0 * static_cast<double>(idx);
        svg += strf("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"%s\" "
                    "stroke-width=\"2\"/>\n",
                    detail::svg_num(W - mr + 12).c_str(), detail::svg_num(ly).c_str(),
                    detail::svg_num(W - mr + 36).c_str(), detail::svg_num(ly).c_str(), color);
        svg += strf("<text x=\"%s\" y=\"%s\">%s</text>\n", detail::svg_num(W - mr + 42).c_str(),
                    detail::svg_num(ly + 4).c_str(), detail::svg_escape(name).c_str());
        ++idx;
    }
    svg += "</svg>\n";
    return svg;
}

// Stacked waveform plot: one horizontal band per lead in canonical order,
// shared amplitude scale so relative lead magnitudes stay visible.
inline std::string plot_record(const EcgRecord& record) {
    record.check_consistent();
    if (record.leads.empty()) throw ContractError("plot: record has no leads");
    size_t n = record.leads.begin()->second.size();
    if (n == 0) throw ContractError("plot: record has empty leads");

    double amp = 0;
    for (const auto& [l, v] : record.leads)
        for (double x : v) amp = std::max(amp, std::abs(x));
    if (amp <= 0) amp = 1.0;

    const double band = 60, ml = 56, mr = 16, mt = 12, mb = 24;
    const double W = 960;
    const double H = mt + band * static_cast<double>(record.leads.size()) + mb;
    const double plot_w = W - ml - mr;

    std::string svg;
    svg += strf("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%s\" "
                "viewBox=\"0 0 %g %s\" font-family=\"sans-serif\" font-size=\"12\">\n",
                W, detail::svg_num(H).c_str(), W, detail::svg_num(H).c_str());
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    size_t band_idx = 0;
    for (const auto& [l, v] : record.leads) {
        double mid = mt + band * (static_cast<double>(band_idx) + 0.5);
        svg += strf("<text x=\"8\" y=\"%s\">%s</text>\n", detail::svg_num(mid + 4).c_str(),
                    lead_name(l));
        svg += strf("<line x1=\"%s\" y1=\"%s\" x2=\"%s\" y2=\"%s\" stroke=\"#dddddd\"/>\n",
                    detail::svg_num(ml).c_str(), detail::svg_num(mid).c_str(),
                    detail::svg_num(W - mr).c_str(), detail::svg_num(mid).c_str());
        std::string coords;
        for (size_t t = 0; t < n; ++t) {
            double x = ml + (n == 1 ? 0.0 : plot_w * static_cast<double>(t) /
                                                static_cast<double>(n - 1));
            double y = mid - v[t] / amp * (band * 0.45);
            if (!coords.empty()) coords += " ";
            coords += detail::svg_num(x) + "," + detail::svg_num(y);
        }
        svg += strf("<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" "
                    "points=\"%s\"/>\n",
                    coords.c_str());
        ++band_idx;
    }
    double secs = record.sampling_rate > 0
                      ? static_cast<double>(n) / static_cast<double>(record.sampling_rate)
                      : 0.0;
    svg += strf("<text x=\"%s\" y=\"%s\" text-anchor=\"end\">%s s @ %u Hz</text>\n",
                detail::svg_num(W - mr).c_str(), detail::svg_num(H - 8).c_str(),
                strf("%.3g", secs).c_str(), record.sampling_rate);
    svg += "</svg>\n";
    return svg;
}

}  // namespace ecgen
