#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/fsio.hpp"

namespace sedid {

// Flat key=value experiment manifest. '#' starts a comment; blank lines are
// skipped; duplicate and unknown keys are rejected by name.
class KvConfig {
public:
    static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>") {
        KvConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                            ": expected key=value");
            std::string key = trim(trimmed.substr(0, eq));
            std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
            if (!cfg.values_.emplace(key, value).second)
                throw std::invalid_argument(origin + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) {
        return parse_string(read_file_bytes(path), path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    // Flag overrides: callers may inject values on top of the file.
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        touch(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) const {
        touch(key);
        auto it = values_.find(key);
        if (it == values_.end())
            throw std::invalid_argument(origin_ + ": missing required key '" + key + "'");
        return it->second;
    }

    int64_t get_int(const std::string& key, int64_t fallback) const {
        auto it = values_.find(key);
        touch(key);
        if (it == values_.end()) return fallback;
        return parse_int(key, it->second);
    }

    uint64_t get_u64(const std::string& key, uint64_t fallback) const {
        auto it = values_.find(key);
        touch(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not an unsigned integer");
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        touch(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not a number");
        }
    }

    std::vector<int64_t> get_int_list(const std::string& key,
                                      const std::vector<int64_t>& fallback) const {
        auto it = values_.find(key);
        touch(key);
        if (it == values_.end()) return fallback;
        return parse_int_list(key, it->second);
    }

    std::vector<std::string> get_string_list(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
        auto it = values_.find(key);
        touch(key);
        if (it == values_.end()) return fallback;
        std::vector<std::string> out;
        for (const auto& piece : split(it->second, ',')) {
            std::string v = trim(piece);
            if (!v.empty()) out.push_back(v);
        }
        return out;
    }

    // Call after all getters: any unread key is unknown and rejected by name.
    void reject_unknown() const {
        for (const auto& [key, value] : values_)
            if (!touched_.count(key))
                throw std::invalid_argument(origin_ + ": unknown key '" + key + "'");
    }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == sep) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        out.push_back(cur);
        return out;
    }

    int64_t parse_int(const std::string& key, const std::string& value) const {
        try {
            size_t used = 0;
            int64_t v = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument(origin_ + ": key '" + key + "' is not an integer");
        }
    }

    std::vector<int64_t> parse_int_list(const std::string& key, const std::string& value) const {
        std::vector<int64_t> out;
        for (const auto& piece : split(value, ',')) {
            std::string v = trim(piece);
            if (!v.empty()) out.push_back(parse_int(key, v));
        }
        return out;
    }

    void touch(const std::string& key) const { touched_.insert(key); }

    std::string origin_ = "<empty>";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> touched_;
};

}  // namespace sedid
