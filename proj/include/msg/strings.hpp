#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "msg/errors.hpp"

namespace msg::str {

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto& part : split(s, ',')) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

// Case-folded, whitespace-collapsed form used whenever two labels are
// compared for equality (gold vs distractor, exclusion lookups, ...).
inline std::string normalize_label(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

inline bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

// ---- UTF-8 code point handling -------------------------------------------
// Span offsets throughout the toolkit are Unicode scalar-value indices, so
// slicing must walk code points, never bytes.

inline size_t cp_length(std::string_view s) {
  size_t n = 0;
  for (size_t i = 0; i < s.size();) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) i += 1;
    else if ((c >> 5) == 0x6) i += 2;
    else if ((c >> 4) == 0xe) i += 3;
    else if ((c >> 3) == 0x1e) i += 4;
    else i += 1;  // tolerate stray continuation bytes
    ++n;
  }
  return n;
}

// Byte offset of the code point at index `cp`, or s.size() when past the end.
inline size_t cp_to_byte(std::string_view s, size_t cp) {
  size_t i = 0, n = 0;
  while (i < s.size() && n < cp) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) i += 1;
    else if ((c >> 5) == 0x6) i += 2;
    else if ((c >> 4) == 0xe) i += 3;
    else if ((c >> 3) == 0x1e) i += 4;
    else i += 1;
    ++n;
  }
  return i;
}

inline std::string cp_substr(std::string_view s, size_t cp_start, size_t cp_end) {
  size_t b = cp_to_byte(s, cp_start);
  size_t e = cp_to_byte(s, cp_end);
  return std::string(s.substr(b, e - b));
}

// Replace the code-point range [cp_start, cp_end) with `replacement`.
inline std::string cp_splice(std::string_view s, size_t cp_start, size_t cp_end,
                             std::string_view replacement) {
  size_t b = cp_to_byte(s, cp_start);
  size_t e = cp_to_byte(s, cp_end);
  std::string out;
  out.reserve(s.size() + replacement.size());
  out.append(s.substr(0, b));
  out.append(replacement);
  out.append(s.substr(e));
  return out;
}

// ---- hashing ---------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Fixed-point "percent with 2 decimals, half-up" formatting used by every
// report so 33.335 -> "33.34" regardless of locale.
inline double round2(double x) {
  return static_cast<double>(static_cast<long long>(x * 100.0 + (x >= 0 ? 0.5 : -0.5))) / 100.0;
}

inline std::string format2(double x) {
  double r = round2(x);
  long long cents = static_cast<long long>(r * 100.0 + (r >= 0 ? 0.5 : -0.5));
  bool neg = cents < 0;
  if (neg) cents = -cents;
  std::string out = std::to_string(cents / 100) + "." +
                    (cents % 100 < 10 ? "0" : "") + std::to_string(cents % 100);
  return neg ? "-" + out : out;
}

}  // namespace msg::str
