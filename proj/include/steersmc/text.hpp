#pragma once

/**
 * Normative text definitions used by masks, verifiers, hints and plans.
 *
 *  - Characters are Unicode scalar values (decoded from UTF-8).
 *  - Whitespace is ASCII space, \t, \n, \v, \f, \r.
 *  - A word is a maximal run of non-whitespace characters. For equality tests
 *    the word is compared after stripping leading and trailing ASCII
 *    punctuation ("Noise," matches "Noise"; "museum's" keeps its apostrophe).
 *  - A sentence ends at '.', '!' or '?' when followed by whitespace or the end
 *    of the text. Trailing text without a terminator is also a sentence.
 *    Segments that are empty after trimming are dropped. No abbreviation
 *    handling.
 */

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace steersmc::text {

inline constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

inline constexpr bool is_punct(char c) noexcept {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

inline constexpr bool is_terminator(char c) noexcept {
  return c == '.' || c == '!' || c == '?';
}

/// Number of Unicode scalar values. Continuation bytes are not counted, so
/// well-formed UTF-8 yields the exact count.
inline std::size_t char_count(std::string_view s) noexcept {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0u) != 0x80u;
  }));
}

/// Splits UTF-8 into one string per scalar value.
inline std::vector<std::string> split_chars(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (lead >= 0xF0u) len = 4;
    else if (lead >= 0xE0u) len = 3;
    else if (lead >= 0xC0u) len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) words.push_back(s.substr(start, i - start));
  }
  return words;
}

inline std::string_view strip_punct(std::string_view w) noexcept {
  while (!w.empty() && is_punct(w.front())) w.remove_prefix(1);
  while (!w.empty() && is_punct(w.back())) w.remove_suffix(1);
  return w;
}

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_sentences(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_terminator(s[i]) && (i + 1 == s.size() || is_space(s[i + 1]))) {
      auto seg = trim(s.substr(start, i + 1 - start));
      if (!seg.empty()) out.push_back(seg);
      start = i + 1;
    }
  }
  if (start < s.size()) {
    auto seg = trim(s.substr(start));
    if (!seg.empty()) out.push_back(seg);
  }
  return out;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace steersmc::text
