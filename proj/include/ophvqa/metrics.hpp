#pragma once

// Text metrics for closed and open QA: tokenizer, BLEU, ROUGE-L, token F1
// and multiple-choice answer extraction.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ophvqa/common.hpp"
#include "ophvqa/datamodel.hpp"

namespace ophvqa {

/// Lowercased tokens. Only tokenize() creates these.
class TokenSeq {
 public:
  TokenSeq() = default;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  bool operator==(const TokenSeq&) const = default;

 private:
  friend TokenSeq tokenize(std::string_view text);
  std::vector<std::string> tokens_;
};

inline bool is_ascii_punct(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

/// Splits on ASCII whitespace; every ASCII punctuation mark becomes its own
/// token. Bytes >= 0x80 are word characters, so UTF-8 letters pass through.
inline TokenSeq tokenize(std::string_view text) {
  TokenSeq seq;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      seq.tokens_.push_back(std::move(current));
      current.clear();
    }
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      seq.tokens_.emplace_back(1, c);
    } else {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  flush();
  return seq;
}

struct MetricValue {
  std::string name;
  double value = 0.0;  // [0, 100]
  bool operator==(const MetricValue&) const = default;
};

// ---------------------------------------------------------------------------
// BLEU

/// Clipped n-gram statistics of one candidate/reference pair. Summing stats
/// over a corpus and scoring once gives corpus-level BLEU.
struct BleuStats {
  int max_order = 4;
  std::vector<double> matches;  // clipped, per order
  std::vector<double> totals;   // candidate n-grams, per order
  std::vector<double> unclipped;  // candidate n-grams also seen in reference, unclipped
  double candidate_length = 0;
  double reference_length = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < max_order; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
      unclipped[n] += o.unclipped[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
  }
};

namespace detail {

inline std::map<std::vector<std::string_view>, int> count_ngrams(const TokenSeq& s, int n) {
  std::map<std::vector<std::string_view>, int> counts;
  const auto& t = s.tokens();
  if (t.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    std::vector<std::string_view> key;
    key.reserve(n);
    for (int k = 0; k < n; ++k) key.emplace_back(t[i + k]);
    ++counts[std::move(key)];
  }
  return counts;
}

inline void check_bleu_order(int max_order) {
  if (max_order != 1 && max_order != 4)
    throw Error("BLEU max_order must be 1 or 4, got " + std::to_string(max_order));
}

}  // namespace detail

inline BleuStats bleu_stats(const TokenSeq& candidate, const TokenSeq& reference, int max_order) {
  BleuStats st;
  st.max_order = max_order;
  st.matches.assign(max_order, 0.0);
  st.totals.assign(max_order, 0.0);
  st.unclipped.assign(max_order, 0.0);
  st.candidate_length = static_cast<double>(candidate.size());
  st.reference_length = static_cast<double>(reference.size());
  for (int n = 1; n <= max_order; ++n) {
    auto cand = detail::count_ngrams(candidate, n);
    auto ref = detail::count_ngrams(reference, n);
    for (const auto& [gram, count] : cand) {
      st.totals[n - 1] += count;
      auto it = ref.find(gram);
      if (it != ref.end()) {
        st.unclipped[n - 1] += count;
        st.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  return st;
}

/// Geometric mean of clipped precisions times brevity penalty, x100.
/// No smoothing: any order with zero matches gives 0.
inline double bleu_from_stats(const BleuStats& st) {
  if (st.candidate_length == 0 || st.reference_length == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < st.max_order; ++n) {
    if (st.totals[n] == 0 || st.matches[n] == 0) return 0.0;
    log_sum += std::log(st.matches[n] / st.totals[n]);
  }
  const double bp = st.candidate_length < st.reference_length
                        ? std::exp(1.0 - st.reference_length / st.candidate_length)
                        : 1.0;
  return std::clamp(100.0 * bp * std::exp(log_sum / st.max_order), 0.0, 100.0);
}

inline MetricValue bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_order) {
  detail::check_bleu_order(max_order);
  return {"BLEU-" + std::to_string(max_order),
          bleu_from_stats(bleu_stats(candidate, reference, max_order))};
}

/// Corpus-level BLEU: statistics summed over all pairs, scored once.
inline MetricValue corpus_bleu(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs,
                               int max_order) {
  detail::check_bleu_order(max_order);
  BleuStats total;
  total.max_order = max_order;
  total.matches.assign(max_order, 0.0);
  total.totals.assign(max_order, 0.0);
  total.unclipped.assign(max_order, 0.0);
  for (const auto& [c, r] : pairs) total += bleu_stats(c, r, max_order);
  return {"BLEU-" + std::to_string(max_order), bleu_from_stats(total)};
}

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const auto& x = a.tokens();
  const auto& y = b.tokens();
  std::vector<std::size_t> prev(y.size() + 1, 0), cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j) {
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

inline MetricValue rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() || reference.empty()) return {"ROUGE-L", 0.0};
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0) return {"ROUGE-L", 0.0};
  const double p = l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  return {"ROUGE-L", 100.0 * 2.0 * p * r / (p + r)};
}

// ---------------------------------------------------------------------------
// token F1

inline MetricValue token_f1(const TokenSeq& candidate, const TokenSeq& reference) {
  std::map<std::string_view, int> ref_counts;
  for (const auto& t : reference.tokens()) ++ref_counts[t];
  double overlap = 0;
  for (const auto& t : candidate.tokens()) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return {"token-F1", 0.0};
  // 2PR/(P+R) written as 2*overlap/(|c|+|r|)
  const double lengths = static_cast<double>(candidate.size() + reference.size());
  return {"token-F1", 100.0 * 2.0 * overlap / lengths};
}

/// Pluggable metric, for model-based scorers that live outside the toolkit.
/// Implementations must report under their own name.
class ExternalMetric {
 public:
  virtual ~ExternalMetric() = default;
  virtual std::string name() const = 0;
  virtual MetricValue score(std::string_view candidate, std::string_view reference) const = 0;
};

/// Built-in deterministic stand-in for embedding-based factuality metrics.
class TokenF1Metric final : public ExternalMetric {
 public:
  std::string name() const override { return "token-F1"; }
  MetricValue score(std::string_view candidate, std::string_view reference) const override {
    return token_f1(tokenize(candidate), tokenize(reference));
  }
};

// ---------------------------------------------------------------------------
// Multiple-choice answer extraction

enum class ExtractionTier { None = 0, LetterPattern = 1, OptionText = 2, Substring = 3 };

struct Extraction {
  std::optional<char> letter;
  ExtractionTier tier = ExtractionTier::None;
  bool ambiguous = false;
};

namespace detail {

inline std::vector<std::string> content_tokens(std::string_view text) {
  std::vector<std::string> out;
  const TokenSeq seq = tokenize(text);
  for (const auto& t : seq.tokens())
    if (!(t.size() == 1 && is_ascii_punct(t[0]))) out.push_back(t);
  return out;
}

inline bool starts_with_tokens(const std::vector<std::string>& hay, std::size_t at,
                               const std::vector<std::string>& needle) {
  if (needle.empty() || at + needle.size() > hay.size()) return false;
  return std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<long>(at));
}

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }

// Letters named by an explicit answer pattern: bare "B", "B)", "B.", "(B)",
// "Answer: B", "answer is B", "option B". A lone "a" followed by the text of
// an option ("the answer is a cataract") is read as an article.
inline std::set<char> letter_pattern_hits(std::string_view pred, const VqaRecord& rec) {
  std::set<char> hits;
  auto valid = [&](char c) { return rec.find_option(upper(c)) != nullptr; };
  const std::string lower = to_lower_ascii(pred);
  std::string_view s = trim(lower);
  if (s.empty()) return hits;

  // Whole answer is a letter, optionally wrapped or punctuated.
  {
    std::string_view t = s;
    while (!t.empty() && (t.back() == '.' || t.back() == ')' || t.back() == ':')) t.remove_suffix(1);
    if (!t.empty() && t.front() == '(') t.remove_prefix(1);
    if (t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0])) && valid(t[0]))
      hits.insert(upper(t[0]));
  }
  // Leading "B)", "B.", "B:", "(B)".
  {
    std::string_view t = s;
    bool paren = false;
    if (!t.empty() && t.front() == '(') {
      t.remove_prefix(1);
      paren = true;
    }
    if (t.size() >= 2 && std::isalpha(static_cast<unsigned char>(t[0])) && valid(t[0])) {
      char next = t[1];
      bool ok = paren ? next == ')' : (next == ')' || next == '.' || next == ':');
      if (ok) hits.insert(upper(t[0]));
    }
  }
  // "(B)" anywhere.
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    if (s[i] == '(' && s[i + 2] == ')' && std::isalpha(static_cast<unsigned char>(s[i + 1])) &&
        valid(s[i + 1]))
      hits.insert(upper(s[i + 1]));
  }
  // Cue phrases followed by a letter.
  static constexpr std::string_view cues[] = {"answer is option", "answer is", "answer:",
                                              "option",           "choice",    "answer"};
  std::vector<std::vector<std::string>> option_tokens;
  for (const auto& o : *rec.options) option_tokens.push_back(content_tokens(o.text));
  for (auto cue : cues) {
    std::size_t pos = 0;
    while ((pos = s.find(cue, pos)) != std::string_view::npos) {
      if (pos > 0 && is_alnum(s[pos - 1])) {
        pos += cue.size();
        continue;
      }
      std::size_t i = pos + cue.size();
      while (i < s.size() && (is_space(s[i]) || s[i] == ':' || s[i] == '(')) ++i;
      if (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i])) &&
          (i + 1 == s.size() || !is_alnum(s[i + 1])) && valid(s[i])) {
        bool article = false;
        if (s[i] == 'a' && i + 1 < s.size() && is_space(s[i + 1])) {
          auto rest = content_tokens(s.substr(i + 1));
          for (const auto& ot : option_tokens)
            if (starts_with_tokens(rest, 0, ot)) article = true;
        }
        if (!article) hits.insert(upper(s[i]));
      }
      pos += cue.size();
    }
  }
  return hits;
}

// Options whose full text occurs as a contiguous token run. A match nested
// inside a longer match ("retinopathy" within "diabetic retinopathy") is
// dropped in favour of the longer one.
inline std::set<char> option_text_hits(std::string_view pred, const VqaRecord& rec) {
  struct Span {
    char letter;
    std::size_t begin, end;
  };
  const auto hay = content_tokens(pred);
  std::vector<Span> spans;
  for (const auto& o : *rec.options) {
    auto needle = content_tokens(o.text);
    for (std::size_t i = 0; i < hay.size(); ++i)
      if (starts_with_tokens(hay, i, needle)) spans.push_back({o.letter, i, i + needle.size()});
  }
  std::set<char> hits;
  for (const auto& a : spans) {
    bool nested = false;
    for (const auto& b : spans) {
      if (b.letter != a.letter && b.begin <= a.begin && a.end <= b.end &&
          (b.end - b.begin) > (a.end - a.begin))
        nested = true;
    }
    if (!nested) hits.insert(a.letter);
  }
  return hits;
}

inline std::set<char> substring_hits(std::string_view pred, const VqaRecord& rec) {
  std::set<char> hits;
  const auto p = squash(pred);
  if (p.empty()) return hits;
  for (const auto& o : *rec.options) {
    const auto t = squash(o.text);
    if (t.empty()) continue;
    if (p.find(t) != std::string::npos || (p.size() >= 3 && t.find(p) != std::string::npos))
      hits.insert(o.letter);
  }
  return hits;
}

}  // namespace detail

/// Resolves a free-form answer to an option letter. Tiers are tried in
/// order; the first tier with any hit decides, and more than one distinct
/// letter at that tier makes the answer ambiguous.
inline Extraction extract_choice(std::string_view prediction, const VqaRecord& record) {
  if (!record.options || record.options->empty()) return {};
  using Finder = std::set<char> (*)(std::string_view, const VqaRecord&);
  constexpr std::pair<ExtractionTier, Finder> tiers[] = {
      {ExtractionTier::LetterPattern, &detail::letter_pattern_hits},
      {ExtractionTier::OptionText, &detail::option_text_hits},
      {ExtractionTier::Substring, &detail::substring_hits},
  };
  for (const auto& [tier, find] : tiers) {
    auto hits = find(prediction, record);
    if (hits.empty()) continue;
    Extraction e;
    e.tier = tier;
    if (hits.size() == 1)
      e.letter = *hits.begin();
    else
      e.ambiguous = true;
    return e;
  }
  return {};
}

inline bool closed_accuracy(std::string_view prediction, const VqaRecord& record) {
  if (record.task != TaskKind::ClosedQA)
    throw Error("closed_accuracy called on non-ClosedQA record '" + record.id + "'");
  auto gold = trim(record.reference_answer);
  if (gold.size() != 1) return false;
  auto e = extract_choice(prediction, record);
  return e.letter && *e.letter == detail::upper(gold[0]);
}

}  // namespace ophvqa
