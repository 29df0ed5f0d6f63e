#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rocketnet/errors.hpp"

namespace rocket {

// Plain-text key/value config:
//
//   # comment
//   [section]
//   key = value
//
// Lookups go through typed getters that mark keys as consumed; after a
// caller has read everything it understands, reject_unknown() turns any
// leftover key into an error naming it.  Overrides use dotted paths
// ("hint.lambda=0") and are applied before consumption, so a misspelled
// override is caught the same way as a misspelled file key.
class ConfigFile {
  public:
    static ConfigFile load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("config: cannot open '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        return from_text(ss.str(), path);
    }

    static ConfigFile from_text(const std::string& text, const std::string& origin) {
        ConfigFile c;
        c.origin_ = origin;
        std::istringstream is(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3) {
                    throw FormatError(c.where(lineno) + ": malformed section header '" + t + "'");
                }
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos) {
                throw FormatError(c.where(lineno) + ": expected key = value, got '" + t + "'");
            }
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty()) throw FormatError(c.where(lineno) + ": empty key");
            if (section.empty()) {
                throw FormatError(c.where(lineno) + ": key '" + key + "' outside any [section]");
            }
            c.values_[section + "." + key] = value;
        }
        return c;
    }

    // "section.key=value"
    void apply_override(const std::string& assignment) {
        const std::size_t eq = assignment.find('=');
        if (eq == std::string::npos) {
            throw SpecError("override '" + assignment + "': expected section.key=value");
        }
        const std::string path = trim(assignment.substr(0, eq));
        const std::string value = trim(assignment.substr(eq + 1));
        if (path.find('.') == std::string::npos || path.front() == '.' || path.back() == '.') {
            throw SpecError("override '" + assignment + "': key must be section.key");
        }
        values_[path] = value;
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) != 0;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        return it->second;
    }

    std::string require_string(const std::string& section, const std::string& key) {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) {
            throw SpecError("config '" + origin_ + "': missing required key " + section + "." +
                            key);
        }
        consumed_.insert(it->first);
        return it->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        return parse_double(it->second, it->first);
    }

    std::uint64_t get_uint(const std::string& section, const std::string& key,
                           std::uint64_t fallback) {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        return parse_uint(it->second, it->first);
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "on") return true;
        if (v == "false" || v == "0" || v == "off") return false;
        throw SpecError("config key " + it->first + ": bad boolean '" + v + "'");
    }

    // Comma-separated unsigned list; empty value or "-" mean an empty list.
    std::vector<std::size_t> get_uint_list(const std::string& section, const std::string& key,
                                           std::vector<std::size_t> fallback) {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        std::vector<std::size_t> out;
        if (it->second.empty() || it->second == "-") return out;
        std::istringstream is(it->second);
        std::string item;
        while (std::getline(is, item, ',')) {
            out.push_back(static_cast<std::size_t>(parse_uint(trim(item), it->first)));
        }
        return out;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : values_) {
            if (!consumed_.count(key)) {
                throw SpecError("config '" + origin_ + "': unknown key " + key);
            }
        }
    }

    const std::map<std::string, std::string>& entries() const { return values_; }
    const std::string& origin() const { return origin_; }

  private:
    std::string where(std::size_t lineno) const {
        return "config '" + origin_ + "' line " + std::to_string(lineno);
    }

    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    static double parse_double(const std::string& s, const std::string& key) {
        double v = 0.0;
        const char* b = s.data();
        const char* e = b + s.size();
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e) {
            throw SpecError("config key " + key + ": bad number '" + s + "'");
        }
        return v;
    }

    static std::uint64_t parse_uint(const std::string& s, const std::string& key) {
        std::uint64_t v = 0;
        const char* b = s.data();
        const char* e = b + s.size();
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || p != e) {
            throw SpecError("config key " + key + ": bad unsigned integer '" + s + "'");
        }
        return v;
    }

    std::string origin_;
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

}  // namespace rocket
