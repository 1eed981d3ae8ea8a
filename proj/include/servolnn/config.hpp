// Copyright (c) 2026 The servolnn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal INI-style reader for run and trial configuration.
//
//   # comment
//   [section]
//   key = value
//
// Sections may repeat (one [trial] block per trial). Keys before the first
// header land in an unnamed section.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "servolnn/error.hpp"

namespace servolnn {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view text, const std::string& what) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(what + ": expected a number, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(std::string_view text, const std::string& what) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view text, const std::string& what) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(what + ": expected a boolean, got '" + s + "'");
}

struct IniSection {
  std::string name;
  std::size_t line = 0;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }

  std::string where(const std::string& key) const {
    return "[" + name + "] (line " + std::to_string(line) + ") " + key;
  }

  double number(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? parse_double(*v, where(key)) : fallback;
  }
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    return v ? parse_uint(*v, where(key)) : fallback;
  }
  bool flag(const std::string& key, bool fallback) const {
    auto v = get(key);
    return v ? parse_bool(*v, where(key)) : fallback;
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }
};

struct IniDocument {
  std::vector<IniSection> sections;

  /// First section with the given name, if any.
  const IniSection* find(const std::string& name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }

  std::vector<const IniSection*> all(const std::string& name) const {
    std::vector<const IniSection*> out;
    for (const auto& s : sections)
      if (s.name == name) out.push_back(&s);
    return out;
  }

  IniSection& section(const std::string& name) {
    for (auto& s : sections)
      if (s.name == name) return s;
    sections.push_back({name, 0, {}});
    return sections.back();
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& s : sections) {
      if (!s.name.empty()) os << '[' << s.name << "]\n";
      for (const auto& [k, v] : s.values) os << k << " = " << v << '\n';
      os << '\n';
    }
    return os.str();
  }
};

inline IniDocument parse_ini(std::string_view text) {
  IniDocument doc;
  doc.sections.push_back({"", 0, {}});
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw =
        text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;

    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed section header");
      }
      doc.sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key");
    auto& values = doc.sections.back().values;
    if (values.count(key)) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    values[key] = trim(std::string_view(line).substr(eq + 1));
  }
  if (doc.sections.front().values.empty()) doc.sections.erase(doc.sections.begin());
  return doc;
}

inline IniDocument load_ini(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_ini(ss.str());
}

}  // namespace servolnn
