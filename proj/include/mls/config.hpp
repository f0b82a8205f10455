#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mls/errors.hpp"

namespace mls {

/// One parsed config value. Numbers are kept as doubles; integer-valued
/// fields round-trip exactly within 2^53.
struct ConfigValue {
    std::variant<double, bool, std::string, std::vector<double>, std::vector<std::string>> v;

    double number(const std::string& key) const {
        if (auto* d = std::get_if<double>(&v)) return *d;
        throw ConfigError("config key '" + key + "' must be a number");
    }
    int integer(const std::string& key) const {
        const double d = number(key);
        const int i = static_cast<int>(d);
        if (d != static_cast<double>(i))
            throw ConfigError("config key '" + key + "' must be an integer");
        return i;
    }
    bool boolean(const std::string& key) const {
        if (auto* b = std::get_if<bool>(&v)) return *b;
        throw ConfigError("config key '" + key + "' must be a boolean");
    }
    std::string text(const std::string& key) const {
        if (auto* s = std::get_if<std::string>(&v)) return *s;
        throw ConfigError("config key '" + key + "' must be a string");
    }
    std::vector<double> numbers(const std::string& key) const {
        if (auto* a = std::get_if<std::vector<double>>(&v)) return *a;
        throw ConfigError("config key '" + key + "' must be an array of numbers");
    }
};

using ConfigMap = std::map<std::string, ConfigValue>;

namespace detail {

inline std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline ConfigValue parse_toml_scalar(const std::string& raw, const std::string& key, int line);

inline ConfigValue parse_toml_value(const std::string& raw, const std::string& key, int line) {
    if (!raw.empty() && raw.front() == '[') {
        if (raw.back() != ']')
            throw ConfigError("config line " + std::to_string(line) + ": unterminated array");
        std::vector<double> nums;
        std::vector<std::string> strs;
        std::string inner = raw.substr(1, raw.size() - 2);
        std::string item;
        bool in_string = false;
        std::vector<std::string> items;
        for (char c : inner) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                items.push_back(item);
                item.clear();
            } else {
                item += c;
            }
        }
        if (!strip(item).empty()) items.push_back(item);
        for (auto& it : items) {
            const ConfigValue cv = parse_toml_scalar(strip(it), key, line);
            if (auto* d = std::get_if<double>(&cv.v))
                nums.push_back(*d);
            else if (auto* s = std::get_if<std::string>(&cv.v))
                strs.push_back(*s);
            else
                throw ConfigError("config line " + std::to_string(line) +
                                  ": arrays hold numbers or strings");
        }
        if (!strs.empty() && !nums.empty())
            throw ConfigError("config line " + std::to_string(line) + ": mixed array types");
        ConfigValue out;
        if (!strs.empty())
            out.v = strs;
        else
            out.v = nums;
        return out;
    }
    return parse_toml_scalar(raw, key, line);
}

inline ConfigValue parse_toml_scalar(const std::string& raw, const std::string& key, int line) {
    ConfigValue out;
    if (raw.empty())
        throw ConfigError("config line " + std::to_string(line) + ": empty value for '" + key + "'");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw ConfigError("config line " + std::to_string(line) + ": unterminated string");
        out.v = raw.substr(1, raw.size() - 2);
        return out;
    }
    if (raw == "true") {
        out.v = true;
        return out;
    }
    if (raw == "false") {
        out.v = false;
        return out;
    }
    double d = 0.0;
    const char* begin = raw.data() + (raw.front() == '+' ? 1 : 0);
    const auto res = std::from_chars(begin, raw.data() + raw.size(), d);
    if (res.ec != std::errc{} || res.ptr != raw.data() + raw.size())
        throw ConfigError("config line " + std::to_string(line) + ": cannot parse value '" + raw +
                          "' for key '" + key + "'");
    out.v = d;
    return out;
}

}  // namespace detail

/// Flat TOML subset: `key = value` lines, # comments, strings, booleans,
/// numbers, and one-level arrays. Tables/sections are rejected; study
/// configs are flat by design.
inline ConfigMap parse_toml(std::istream& in) {
    ConfigMap out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = [&] {
            bool in_string = false;
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_string = !in_string;
                if (line[i] == '#' && !in_string) return i;
            }
            return std::string::npos;
        }();
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string s = detail::strip(line);
        if (s.empty()) continue;
        if (s.front() == '[')
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": tables are not supported; use flat keys");
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::strip(s.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (out.count(key))
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");
        out[key] = detail::parse_toml_value(detail::strip(s.substr(eq + 1)), key, lineno);
    }
    return out;
}

inline ConfigMap parse_json_config(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: JSON root must be an object");
    ConfigMap out;
    for (const auto& [key, value] : j.items()) {
        ConfigValue cv;
        if (value.is_number())
            cv.v = value.get<double>();
        else if (value.is_boolean())
            cv.v = value.get<bool>();
        else if (value.is_string())
            cv.v = value.get<std::string>();
        else if (value.is_array()) {
            if (!value.empty() && value.front().is_string())
                cv.v = value.get<std::vector<std::string>>();
            else
                cv.v = value.get<std::vector<double>>();
        } else {
            throw ConfigError("config key '" + key + "': unsupported JSON value type");
        }
        out[key] = cv;
    }
    return out;
}

/// Read a config file, dispatching on the extension (.toml or .json).
inline ConfigMap load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return parse_json_config(in);
    return parse_toml(in);
}

/// Unknown keys are rejected outright: a typo must not silently fall back to
/// a default.
inline void reject_unknown_keys(const ConfigMap& cfg, const std::set<std::string>& allowed,
                                const std::string& command) {
    for (const auto& [key, _] : cfg)
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" + key + "' for command '" + command + "'");
}

}  // namespace mls
