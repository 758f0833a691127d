#pragma once

// Strict INI-style configuration documents.
//
// Syntax: `[section]` headers, `key = value` entries, `#` or `;` comments,
// blank lines ignored. Sections and keys keep insertion order; duplicates are
// errors. StrictReader tracks which keys a consumer actually read so unknown
// keys can be rejected with their line number.

#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include "ecgen/common.hpp"

namespace ecgen {

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

class Ini {
public:
    struct Entry {
        std::string key, value;
        size_t line = 0;  // 1-based source line; 0 for generated entries
    };
    struct Section {
        std::string name;
        std::vector<Entry> entries;
    };

    static Ini parse(const std::string& text) {
        Ini doc;
        Section* cur = nullptr;
        size_t line_no = 0;
        size_t pos = 0;
        while (pos <= text.size()) {
            size_t nl = text.find('\n', pos);
            std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
            pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            std::string s = detail::trim(line);
            if (s.empty() || s[0] == '#' || s[0] == ';') continue;
            if (s.front() == '[') {
                if (s.back() != ']' || s.size() < 3)
                    throw ContractError(strf("config line %zu: malformed section header '%s'",
                                             line_no, s.c_str()));
                std::string name = detail::trim(s.substr(1, s.size() - 2));
                for (auto& sec : doc.sections_)
                    if (sec.name == name)
                        throw ContractError(strf("config line %zu: duplicate section '%s'",
                                                 line_no, name.c_str()));
                doc.sections_.push_back({name, {}});
                cur = &doc.sections_.back();
                continue;
            }
            size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw ContractError(strf("config line %zu: expected 'key = value', got '%s'",
                                         line_no, s.c_str()));
            if (cur == nullptr)
                throw ContractError(strf("config line %zu: entry before any [section]", line_no));
            std::string key = detail::trim(s.substr(0, eq));
            std::string value = detail::trim(s.substr(eq + 1));
            if (key.empty())
                throw ContractError(strf("config line %zu: empty key", line_no));
            for (auto& e : cur->entries)
                if (e.key == key)
                    throw ContractError(strf("config line %zu: duplicate key '%s' in [%s]",
                                             line_no, key.c_str(), cur->name.c_str()));
            cur->entries.push_back({std::move(key), std::move(value), line_no});
        }
        return doc;
    }

    // Canonical text: sections and keys in insertion order, one blank line
    // between sections. parse(serialize(x)) == x up to line numbers.
    std::string serialize() const {
        std::string out;
        for (size_t i = 0; i < sections_.size(); ++i) {
            if (i) out += "\n";
            out += "[" + sections_[i].name + "]\n";
            for (const auto& e : sections_[i].entries) out += e.key + " = " + e.value + "\n";
        }
        return out;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        Section* sec = find_section(section);
        if (!sec) {
            sections_.push_back({section, {}});
            sec = &sections_.back();
        }
        for (auto& e : sec->entries)
            if (e.key == key) {
                e.value = value;
                return;
            }
        sec->entries.push_back({key, value, 0});
    }

    bool has(const std::string& section, const std::string& key) const {
        const Section* sec = find_section(section);
        if (!sec) return false;
        for (auto& e : sec->entries)
            if (e.key == key) return true;
        return false;
    }

    bool has_section(const std::string& section) const { return find_section(section) != nullptr; }

    const std::vector<Section>& sections() const { return sections_; }

private:
    Section* find_section(const std::string& name) {
        for (auto& s : sections_)
            if (s.name == name) return &s;
        return nullptr;
    }
    const Section* find_section(const std::string& name) const {
        for (auto& s : sections_)
            if (s.name == name) return &s;
        return nullptr;
    }

    std::vector<Section> sections_;
};

// Typed accessor that records which keys were read; done() rejects anything
// left over, naming the key and its source line.
class StrictReader {
public:
    explicit StrictReader(Ini doc) : doc_(std::move(doc)) {
        for (const auto& s : doc_.sections())
            for (const auto& e : s.entries) unread_.push_back({s.name, e.key, e.line});
    }

    bool has(const std::string& section, const std::string& key) const {
        return doc_.has(section, key);
    }

    std::string get_string(const std::string& section, const std::string& key) {
        const auto* e = find(section, key);
        if (!e)
            throw ContractError(strf("config: missing key '%s' in [%s]", key.c_str(),
                                     section.c_str()));
        mark(section, key);
        return e->value;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) {
        return doc_.has(section, key) ? get_string(section, key) : fallback;
    }

    int64_t get_int(const std::string& section, const std::string& key) {
        return parse_int(section, key, get_string(section, key));
    }
    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) {
        return doc_.has(section, key) ? get_int(section, key) : fallback;
    }

    uint64_t get_uint(const std::string& section, const std::string& key) {
        int64_t v = get_int(section, key);
        if (v < 0)
            throw ContractError(strf("config: key '%s' in [%s] must be non-negative, got %lld",
                                     key.c_str(), section.c_str(), static_cast<long long>(v)));
        return static_cast<uint64_t>(v);
    }
    uint64_t get_uint(const std::string& section, const std::string& key, uint64_t fallback) {
        return doc_.has(section, key) ? get_uint(section, key) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) {
        std::string v = get_string(section, key);
        char* end = nullptr;
        double d = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0')
            throw ContractError(strf("config: key '%s' in [%s] is not a number: '%s'",
                                     key.c_str(), section.c_str(), v.c_str()));
        return d;
    }
    double get_double(const std::string& section, const std::string& key, double fallback) {
        return doc_.has(section, key) ? get_double(section, key) : fallback;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        if (!doc_.has(section, key)) return fallback;
        std::string v = get_string(section, key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ContractError(strf("config: key '%s' in [%s] must be true/false, got '%s'",
                                 key.c_str(), section.c_str(), v.c_str()));
    }

    std::vector<std::string> get_list(const std::string& section, const std::string& key) {
        std::string v = get_string(section, key);
        std::vector<std::string> out;
        size_t pos = 0;
        while (pos <= v.size()) {
            size_t c = v.find(',', pos);
            std::string item =
                detail::trim(v.substr(pos, c == std::string::npos ? c : c - pos));
            if (!item.empty()) out.push_back(item);
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& section, const std::string& key) {
        std::vector<double> out;
        for (const auto& item : get_list(section, key)) {
            char* end = nullptr;
            double d = std::strtod(item.c_str(), &end);
            if (end == item.c_str() || *end != '\0')
                throw ContractError(strf("config: key '%s' in [%s] has non-numeric item '%s'",
                                         key.c_str(), section.c_str(), item.c_str()));
            out.push_back(d);
        }
        return out;
    }

    // Mark a whole section as consumed (for sections read generically).
    void consume_section(const std::string& section) {
        for (auto& u : unread_)
            if (u.section == section) u.section.clear();
    }

    void done() const {
        for (const auto& u : unread_)
            if (!u.section.empty())
                throw ContractError(strf("config line %zu: unknown key '%s' in [%s]", u.line,
                                         u.key.c_str(), u.section.c_str()));
    }

private:
    struct Pending {
        std::string section, key;
        size_t line;
    };

    const Ini::Entry* find(const std::string& section, const std::string& key) const {
        for (const auto& s : doc_.sections())
            if (s.name == section)
                for (const auto& e : s.entries)
                    if (e.key == key) return &e;
        return nullptr;
    }

    int64_t parse_int(const std::string& section, const std::string& key,
                      const std::string& v) const {
        char* end = nullptr;
        long long n = std::strtoll(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0')
            throw ContractError(strf("config: key '%s' in [%s] is not an integer: '%s'",
                                     key.c_str(), section.c_str(), v.c_str()));
        return n;
    }

    void mark(const std::string& section, const std::string& key) {
        for (auto& u : unread_)
            if (u.section == section && u.key == key) {
                u.section.clear();
                return;
            }
    }

    Ini doc_;
    std::vector<Pending> unread_;
};

// %.17g renders doubles so that strtod recovers them bit-exactly.
inline std::string fmt_double(double v) { return strf("%.17g", v); }

}  // namespace ecgen
