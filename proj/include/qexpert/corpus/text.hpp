#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qexpert/corpus/dataset.hpp"
#include "qexpert/util.hpp"

namespace qexpert {

enum class TokenizerMode { whitespace, char_bigram };

inline TokenizerMode parse_tokenizer(std::string_view s) {
  if (s == "whitespace") return TokenizerMode::whitespace;
  if (s == "char_bigram" || s == "bigram") return TokenizerMode::char_bigram;
  throw std::invalid_argument("unknown tokenizer '" + std::string(s) + "' (expected whitespace or char_bigram)");
}

inline std::string to_string(TokenizerMode m) {
  return m == TokenizerMode::whitespace ? "whitespace" : "char_bigram";
}

namespace detail {

/// Splits UTF-8 into code points (invalid bytes pass through as single units).
inline std::vector<std::pair<char32_t, std::string_view>> code_points(std::string_view s) {
  std::vector<std::pair<char32_t, std::string_view>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if (c >= 0xF0 && c < 0xF8) {
      len = 4;
      cp = c & 0x07;
    } else if (c >= 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    if (len > 1) {
      if (i + len > s.size()) {
        len = 1;
        cp = c;
      } else {
        for (std::size_t j = 1; j < len; ++j) cp = (cp << 6) | (static_cast<unsigned char>(s[i + j]) & 0x3F);
      }
    }
    out.emplace_back(cp, s.substr(i, len));
    i += len;
  }
  return out;
}

inline bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

inline bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
  return out;
}

/// Runs of non-whitespace code points.
inline std::vector<std::vector<std::string_view>> non_space_runs(std::string_view text) {
  std::vector<std::vector<std::string_view>> runs;
  std::vector<std::string_view> cur;
  for (const auto& [cp, bytes] : code_points(text)) {
    if (is_unicode_space(cp)) {
      if (!cur.empty()) runs.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(bytes);
    }
  }
  if (!cur.empty()) runs.push_back(std::move(cur));
  return runs;
}

}  // namespace detail

/// whitespace: lowercase (ASCII), split on Unicode whitespace, strip leading and
/// trailing ASCII punctuation, drop tokens left empty.
/// char_bigram: overlapping code-point bigrams of each non-space run; a
/// single-character run yields itself.
inline std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode = TokenizerMode::whitespace) {
  std::vector<std::string> tokens;
  for (const auto& run : detail::non_space_runs(text)) {
    if (mode == TokenizerMode::whitespace) {
      std::string word;
      for (auto b : run) word += b;
      std::size_t lo = 0, hi = word.size();
      while (lo < hi && detail::is_ascii_punct(word[lo])) ++lo;
      while (hi > lo && detail::is_ascii_punct(word[hi - 1])) --hi;
      if (lo < hi) tokens.push_back(detail::ascii_lower(std::string_view(word).substr(lo, hi - lo)));
    } else {
      if (run.size() == 1) {
        tokens.push_back(detail::ascii_lower(run[0]));
        continue;
      }
      for (std::size_t i = 0; i + 1 < run.size(); ++i)
        tokens.push_back(detail::ascii_lower(std::string(run[i]) + std::string(run[i + 1])));
    }
  }
  return tokens;
}

/// Token <-> id map with PAD = 0 and UNK = 1 reserved.
class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab() : tokens_{std::string(kPadToken), std::string(kUnkToken)} {}

  /// Builds from the non-reserved tokens in id order (ids 2, 3, ...).
  static Vocab from_tokens(const std::vector<std::string>& tokens, std::size_t min_count = 1) {
    Vocab v;
    v.min_count_ = min_count;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  std::int32_t id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t min_count() const noexcept { return min_count_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// FNV-1a over the newline-joined token list (including the reserved entries).
  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a64("");
    for (const auto& t : tokens_) {
      h = fnv1a64(t, h);
      h = fnv1a64("\n", h);
    }
    return h;
  }

  /// One token per line, starting at id 2.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocab " + path);
    for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocab " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) toks.push_back(line);
    return from_tokens(toks);
  }

 private:
  void add(const std::string& t) {
    if (t == kPadToken || t == kUnkToken) throw std::invalid_argument("token '" + t + "' collides with a reserved id");
    if (!index_.emplace(t, static_cast<std::int32_t>(tokens_.size())).second)
      throw std::invalid_argument("duplicate vocab token '" + t + "'");
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::size_t min_count_ = 1;
};

/// Token frequencies over question texts and any answer texts of a dataset.
inline std::map<std::string, std::size_t> count_tokens(const Dataset& ds, TokenizerMode mode) {
  std::map<std::string, std::size_t> freq;
  for (const auto& r : ds.records) {
    for (auto& t : tokenize(r.text, mode)) ++freq[t];
    for (const auto& a : r.answers)
      if (a.text)
        for (auto& t : tokenize(*a.text, mode)) ++freq[t];
  }
  return freq;
}

/// Ids 2.. in descending frequency, ties broken lexicographically.
inline Vocab build_vocab(const std::map<std::string, std::size_t>& freq, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : freq)
    if (n >= min_count && tok != Vocab::kPadToken && tok != Vocab::kUnkToken) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> order;
  order.reserve(kept.size());
  for (auto& [tok, n] : kept) order.push_back(tok);
  return Vocab::from_tokens(order, min_count);
}

inline Vocab build_vocab(const Dataset& ds, std::size_t min_count, TokenizerMode mode = TokenizerMode::whitespace) {
  return build_vocab(count_tokens(ds, mode), min_count);
}

/// Exactly L ids: unknown tokens -> UNK, truncate to the first L, right-pad with PAD.
inline std::vector<std::int32_t> encode_text(const std::vector<std::string>& tokens, const Vocab& vocab,
                                             std::size_t length = 50) {
  if (length < 1) throw std::invalid_argument("encode length must be >= 1");
  std::vector<std::int32_t> ids(length, Vocab::kPad);
  const std::size_t n = std::min(length, tokens.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(tokens[i]);
  return ids;
}

}  // namespace qexpert
