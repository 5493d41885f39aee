#pragma once

// Tokenizer interface and the default word-level tokenizer.
//
// Splitting rules of WordTokenizer:
//   * numbers: a digit run, optionally with ",ddd" thousands groups and a
//     ".d+" fraction ("1,024", "3.50"); a comma or dot not followed by the
//     right digits is punctuation ("8." is "8" then ".");
//   * words: runs of ASCII letters and non-ASCII bytes;
//   * every other non-space character is a one-character token.
// A token's surface is its exact text with a single leading space when any
// whitespace preceded it, so decode() is plain concatenation and
//   decode(encode(t)) == normalize_whitespace(t)
// where normalize_whitespace trims and collapses whitespace runs to one space.
//
// Ids come from a corpus-built vocabulary keyed by the canonical form: the
// canonical numeral for numeric tokens, the trimmed surface otherwise.

#include <algorithm>
#include <array>
#include <cctype>
#include <concepts>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "thinkspeak/core_types.hpp"

namespace thinkspeak {

template <typename T>
concept Tokenizer = requires(T& tok, std::string_view text, const std::vector<Token>& tokens) {
  { tok.encode(text) } -> std::same_as<std::vector<Token>>;
  { tok.decode(tokens) } -> std::same_as<std::string>;
};

inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalpha(u) || u >= 0x80;
}

// Length of the numeric literal starting at text[i] (text[i] is a digit).
inline std::size_t numeric_extent(std::string_view text, std::size_t i) {
  std::size_t j = i;
  while (j < text.size() && is_digit(text[j])) ++j;
  const std::size_t lead = j - i;
  // Thousands groups only after a 1-3 digit lead.
  if (lead <= 3) {
    while (j + 3 < text.size() && text[j] == ',' && is_digit(text[j + 1]) &&
           is_digit(text[j + 2]) && is_digit(text[j + 3]) &&
           (j + 4 >= text.size() || !is_digit(text[j + 4]))) {
      j += 4;
    }
  }
  if (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1])) {
    j += 1;
    while (j < text.size() && is_digit(text[j])) ++j;
  }
  return j - i;
}

inline constexpr std::array<std::string_view, 21> kSpelledNumbers = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen", "twenty"};

}  // namespace detail

/// Canonical numeral for a token surface, or nullopt if it is not numeric.
///
/// Canonicalization: surrounding whitespace ignored; thousands separators
/// removed; leading zeros of the integer part removed; trailing fraction
/// zeros removed, and the dot with them if nothing remains ("8.0" -> "8",
/// "2.50" -> "2.5"); the spelled-out numbers zero..twenty (any case) map to
/// their digits. Larger spelled-out numbers are not recognized.
inline std::optional<std::string> canonical_numeral(std::string_view surface) {
  const std::string_view s = trim(surface);
  if (s.empty()) return std::nullopt;
  if (detail::is_digit(s.front())) {
    if (detail::numeric_extent(s, 0) != s.size()) return std::nullopt;
    std::string digits;
    for (char c : s) {
      if (c != ',') digits.push_back(c);
    }
    std::string int_part = digits;
    std::string frac;
    if (auto dot = digits.find('.'); dot != std::string::npos) {
      int_part = digits.substr(0, dot);
      frac = digits.substr(dot + 1);
    }
    const auto nz = int_part.find_first_not_of('0');
    int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    return frac.empty() ? int_part : int_part + "." + frac;
  }
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (std::size_t n = 0; n < detail::kSpelledNumbers.size(); ++n) {
    if (lower == detail::kSpelledNumbers[n]) return std::to_string(n);
  }
  return std::nullopt;
}

inline bool is_numeric_token(const Token& t) { return canonical_numeral(t.surface()).has_value(); }

/// Vocabulary key of a surface: canonical numeral or trimmed text.
inline std::string canonical_key(std::string_view surface) {
  if (auto n = canonical_numeral(surface)) return *n;
  return std::string(trim(surface));
}

/// Splits text into raw surfaces (with the leading-space convention above).
inline std::vector<std::string> split_surfaces(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  bool space_before = false;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      space_before = !out.empty();
      ++i;
      continue;
    }
    std::size_t len = 1;
    if (detail::is_digit(c)) {
      len = detail::numeric_extent(text, i);
    } else if (detail::is_word_byte(c)) {
      while (i + len < text.size() && detail::is_word_byte(text[i + len])) ++len;
    }
    std::string surface = space_before ? " " : "";
    surface.append(text.substr(i, len));
    out.push_back(std::move(surface));
    space_before = false;
    i += len;
  }
  return out;
}

class Vocabulary {
 public:
  static constexpr std::string_view kHeader = "#thinkspeak-vocab v1";

  TokenId id_for(const std::string& key) {
    if (auto it = ids_.find(key); it != ids_.end()) return it->second;
    const auto id = static_cast<TokenId>(keys_.size());
    if (is_reserved_id(id)) throw std::length_error("Vocabulary: id space exhausted");
    ids_.emplace(key, id);
    keys_.push_back(key);
    return id;
  }

  std::optional<TokenId> find(const std::string& key) const {
    if (auto it = ids_.find(key); it != ids_.end()) return it->second;
    return std::nullopt;
  }

  const std::string& key(TokenId id) const { return keys_.at(id); }
  std::size_t size() const noexcept { return keys_.size(); }

  // Version line, optional comment lines, then one "<id>\t<json string>"
  // line per entry in id order.
  void write(std::ostream& os, std::string_view comment = {}) const {
    os << kHeader << '\n';
    if (!comment.empty()) os << comment << '\n';
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      os << i << '\t' << nlohmann::json(keys_[i]).dump() << '\n';
    }
  }

  static Vocabulary read(std::istream& is) {
    Vocabulary v;
    std::string line;
    if (!std::getline(is, line) || line != kHeader) {
      throw std::runtime_error("Vocabulary: missing or unsupported header");
    }
    while (std::getline(is, line)) {
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw std::runtime_error("Vocabulary: malformed line");
      const auto id = static_cast<TokenId>(std::stoul(line.substr(0, tab)));
      const auto key = nlohmann::json::parse(line.substr(tab + 1)).get<std::string>();
      if (id != v.keys_.size()) throw std::runtime_error("Vocabulary: ids out of order");
      v.id_for(key);
    }
    return v;
  }

 private:
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string> keys_;
};

/// Whitespace/punctuation/number splitter with a growing vocabulary.
/// Encoded tokens carry the Prompt role; callers restamp as needed.
class WordTokenizer {
 public:
  WordTokenizer() = default;
  explicit WordTokenizer(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  std::vector<Token> encode(std::string_view text) {
    std::vector<Token> out;
    for (auto& surface : split_surfaces(text)) {
      const TokenId id = vocab_.id_for(canonical_key(surface));
      out.push_back(Token::content(id, std::move(surface), TokenRole::Prompt));
    }
    return out;
  }

  std::string decode(const std::vector<Token>& tokens) const { return detokenize(tokens); }

  const Vocabulary& vocabulary() const noexcept { return vocab_; }

 private:
  Vocabulary vocab_;
};

inline std::vector<Token> default_tokenize(std::string_view text, WordTokenizer& tokenizer) {
  return tokenizer.encode(text);
}

inline std::vector<Token> with_role(const std::vector<Token>& tokens, TokenRole role) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.with_role(role));
  return out;
}

}  // namespace thinkspeak
