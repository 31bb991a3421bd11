#pragma once

/// \file text_format.hpp
/// Shared helpers for the line-oriented `key = value` text formats
/// (spectrum records and run configs) and lossless number rendering.

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sphlev {

/// Error raised while reading a text config; carries the offending key and line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ", key '" + key + "': " + what),
          key_(key),
          line_(line) {}
    const std::string& key() const { return key_; }
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// One logical line: either a `[section]` header or a `key = value` pair.
struct TextLine {
    int number = 0;
    std::string section;  ///< non-empty for `[section]` lines
    std::string key;
    std::string value;
};

inline std::vector<TextLine> lex_key_value_text(std::string_view text) {
    std::vector<TextLine> out;
    int number = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++number;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const auto line = trim(raw);
        if (line.empty()) continue;
        TextLine tl;
        tl.number = number;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(std::string(line), number, "unterminated section header");
            tl.section = std::string(trim(line.substr(1, line.size() - 2)));
            out.push_back(std::move(tl));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(std::string(line), number, "expected 'key = value'");
        tl.key = std::string(trim(line.substr(0, eq)));
        tl.value = std::string(trim(line.substr(eq + 1)));
        if (tl.key.empty()) throw ConfigError("", number, "empty key");
        out.push_back(std::move(tl));
    }
    return out;
}

inline double parse_double(const TextLine& l) {
    double v = 0.0;
    const char* b = l.value.data();
    const char* e = b + l.value.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError(l.key, l.number, "expected a real number, got '" + l.value + "'");
    return v;
}

inline long long parse_integer(const TextLine& l) {
    long long v = 0;
    const char* b = l.value.data();
    const char* e = b + l.value.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError(l.key, l.number, "expected an integer, got '" + l.value + "'");
    return v;
}

inline std::uint64_t parse_unsigned(const TextLine& l) {
    std::uint64_t v = 0;
    const char* b = l.value.data();
    const char* e = b + l.value.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw ConfigError(l.key, l.number, "expected a non-negative integer, got '" + l.value + "'");
    return v;
}

inline bool parse_bool(const TextLine& l) {
    if (l.value == "true" || l.value == "yes" || l.value == "1") return true;
    if (l.value == "false" || l.value == "no" || l.value == "0") return false;
    throw ConfigError(l.key, l.number, "expected true/false, got '" + l.value + "'");
}

inline std::vector<double> parse_double_list(const TextLine& l) {
    std::vector<double> out;
    std::string_view rest = l.value;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto item = trim(rest.substr(0, comma));
        TextLine sub = l;
        sub.value = std::string(item);
        out.push_back(parse_double(sub));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    if (out.empty()) throw ConfigError(l.key, l.number, "expected a comma-separated list of reals");
    return out;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, p);
}

inline std::string format_double_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_double(v[i]);
    }
    return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace sphlev
