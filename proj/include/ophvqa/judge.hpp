#pragma once

// Report judging: the evaluation prompt, strict response parsing, an
// offline rule-based judge, and a cached, bounded-concurrency runner for
// remote chat-completion judges.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ophvqa/common.hpp"
#include "ophvqa/metrics.hpp"
#include "ophvqa/report.hpp"
#include "ophvqa/reportscore.hpp"

namespace ophvqa {

/// Bumped whenever criterion wording, weights semantics or the output
/// schema change. Part of every prompt and cache key.
inline constexpr std::string_view kCriteriaVersion = "ten-criteria/1";

inline std::string_view criterion_definition(Criterion c) {
  switch (c) {
    case Criterion::A:
      return "The number of abnormal features in candidate report that are not mentioned in the "
             "reference report.";
    case Criterion::B:
      return "The number of times the candidate report describes the disease severity incorrectly.";
    case Criterion::C:
      return "The number of times the candidate report describes the disease location incorrectly.";
    case Criterion::D: return "The number of missing key findings compared to the reference report.";
    case Criterion::E: return "Whether the diagnosis or suspected diagnosis is included.";
    case Criterion::F: return "Whether the description of the examination type exists and is correct.";
    case Criterion::G: return "Whether there is a treatment recommendation.";
    case Criterion::H: return "Whether the report structure is clear.";
    case Criterion::I:
      return "Whether the candidate outcome contains particularly serious clinical errors.";
    case Criterion::J: return "Whether the diagnosis is similar or approximately correct.";
  }
  return "";
}

inline constexpr std::array<Criterion, 10> kAllCriteria = {
    Criterion::A, Criterion::B, Criterion::C, Criterion::D, Criterion::E,
    Criterion::F, Criterion::G, Criterion::H, Criterion::I, Criterion::J};

/// JSON field name carrying each criterion in judge responses.
inline std::string_view finding_field(Criterion c) {
  switch (c) {
    case Criterion::A: return "a_count";
    case Criterion::B: return "b_count";
    case Criterion::C: return "c_count";
    case Criterion::D: return "d_count";
    case Criterion::E: return "e_ok";
    case Criterion::F: return "f_ok";
    case Criterion::G: return "g_ok";
    case Criterion::H: return "h_ok";
    case Criterion::I: return "i_serious_error";
    case Criterion::J: return "j_diagnosis_correct";
  }
  return "";
}

inline bool is_count_criterion(Criterion c) { return c <= Criterion::D; }

// ---------------------------------------------------------------------------
// Prompt

struct JudgePrompt {
  std::string system_text;
  std::string user_text;
  bool operator==(const JudgePrompt&) const = default;
};

inline JudgePrompt build_judge_prompt(std::string_view candidate, std::string_view reference,
                                      const CriterionWeights& w = {}) {
  if (trim(candidate).empty()) throw Error("judge prompt needs a non-empty candidate report");
  if (trim(reference).empty()) throw Error("judge prompt needs a non-empty reference report");
  w.validate();

  JudgePrompt p;
  p.system_text =
      "You are a senior ophthalmologist who audits AI-generated ophthalmic imaging reports "
      "against a reference report written by a clinician. You answer with a single JSON object "
      "and nothing else.";

  std::ostringstream u;
  u << "Criteria version: " << kCriteriaVersion << "\n\n"
    << "Compare the candidate report with the reference report and assess each indicator.\n\n"
    << "Indicators:\n";
  for (auto c : kAllCriteria) {
    u << criterion_letter(c) << ") " << criterion_definition(c);
    if (c == Criterion::J) {
      u << " (not deducted; used for diagnostic accuracy)";
    } else {
      std::ostringstream wv;
      wv << w.of(c);
      u << (is_count_criterion(c) ? " (deduct " + wv.str() + " points per occurrence)"
                                  : " (deduct " + wv.str() + " points if not satisfied)");
    }
    u << "\n";
  }
  u << "\nThe report score starts at 100, is reduced by the deductions above and never goes below "
       "0.\n\n"
    << "Reference report:\n<<<REFERENCE\n" << reference << "\nREFERENCE>>>\n\n"
    << "Candidate report:\n<<<CANDIDATE\n" << candidate << "\nCANDIDATE>>>\n\n"
    << "Return only a JSON object with exactly these ten fields:\n"
    << "{\n"
    << "  \"a_count\": <non-negative integer, indicator A>,\n"
    << "  \"b_count\": <non-negative integer, indicator B>,\n"
    << "  \"c_count\": <non-negative integer, indicator C>,\n"
    << "  \"d_count\": <non-negative integer, indicator D>,\n"
    << "  \"e_ok\": <true if the diagnosis or suspected diagnosis is included>,\n"
    << "  \"f_ok\": <true if the examination type is described and correct>,\n"
    << "  \"g_ok\": <true if a treatment recommendation is given>,\n"
    << "  \"h_ok\": <true if the report structure is clear>,\n"
    << "  \"i_serious_error\": <true if there are particularly serious clinical errors>,\n"
    << "  \"j_diagnosis_correct\": <true if the diagnosis is similar or approximately correct>\n"
    << "}\n"
    << "Use JSON integers and booleans only. Do not add comments or other fields.\n";
  p.user_text = u.str();
  return p;
}

inline constexpr std::string_view kJsonOnlyReminder =
    "\n\nYour previous reply could not be parsed. Return only the JSON object with the ten "
    "fields, with no other text.";

// ---------------------------------------------------------------------------
// Response parsing

enum class JudgeErrorCode {
  NoJsonObject,
  MalformedJson,
  MissingField,
  UnexpectedField,
  WrongType,
  NegativeCount,
};

inline std::string_view to_string(JudgeErrorCode c) {
  switch (c) {
    case JudgeErrorCode::NoJsonObject: return "no JSON object";
    case JudgeErrorCode::MalformedJson: return "malformed JSON";
    case JudgeErrorCode::MissingField: return "missing field";
    case JudgeErrorCode::UnexpectedField: return "unexpected field";
    case JudgeErrorCode::WrongType: return "wrong type";
    case JudgeErrorCode::NegativeCount: return "negative count";
  }
  return "?";
}

class JudgeParseError : public Error {
 public:
  JudgeParseError(JudgeErrorCode code, const std::string& detail)
      : Error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}
  JudgeErrorCode code() const { return code_; }

 private:
  JudgeErrorCode code_;
};

namespace detail {

// End index (exclusive) of the balanced {...} starting at `open`, string
// and escape aware, or npos.
inline std::size_t balanced_object_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Canonical JSON rendering of findings, fields in A..J order.
inline std::string render_findings(const JudgeFindings& f) {
  nlohmann::ordered_json j;
  j["a_count"] = f.a_count;
  j["b_count"] = f.b_count;
  j["c_count"] = f.c_count;
  j["d_count"] = f.d_count;
  j["e_ok"] = f.e_ok;
  j["f_ok"] = f.f_ok;
  j["g_ok"] = f.g_ok;
  j["h_ok"] = f.h_ok;
  j["i_serious_error"] = f.i_serious_error;
  j["j_diagnosis_correct"] = f.j_diagnosis_correct;
  return j.dump();
}

/// Strict parse of a judge reply. Prose around the object is ignored; the
/// first balanced {...} that is valid JSON is used.
inline JudgeFindings parse_judge_response(std::string_view raw) {
  std::optional<nlohmann::json> obj;
  bool saw_balanced = false;
  for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    auto end = detail::balanced_object_end(raw, open);
    if (end == std::string_view::npos) continue;
    saw_balanced = true;
    auto j = nlohmann::json::parse(raw.substr(open, end - open), nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      obj = std::move(j);
      break;
    }
  }
  if (!obj) {
    if (saw_balanced) throw JudgeParseError(JudgeErrorCode::MalformedJson, "");
    throw JudgeParseError(JudgeErrorCode::NoJsonObject, "");
  }

  std::set<std::string> expected;
  for (auto c : kAllCriteria) expected.insert(std::string(finding_field(c)));
  for (const auto& [key, _] : obj->items())
    if (!expected.count(key)) throw JudgeParseError(JudgeErrorCode::UnexpectedField, key);

  JudgeFindings f;
  int* counts[] = {&f.a_count, &f.b_count, &f.c_count, &f.d_count};
  bool* flags[] = {&f.e_ok, &f.f_ok, &f.g_ok, &f.h_ok, &f.i_serious_error, &f.j_diagnosis_correct};
  for (auto c : kAllCriteria) {
    const std::string key(finding_field(c));
    if (!obj->contains(key)) throw JudgeParseError(JudgeErrorCode::MissingField, key);
    const auto& v = (*obj)[key];
    const auto idx = static_cast<std::size_t>(c);
    if (is_count_criterion(c)) {
      if (!v.is_number_integer()) throw JudgeParseError(JudgeErrorCode::WrongType, key);
      if (v.is_number_unsigned()) {
        auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
          throw JudgeParseError(JudgeErrorCode::WrongType, key + " out of range");
        *counts[idx] = static_cast<int>(u);
      } else {
        auto s = v.get<std::int64_t>();
        if (s < 0) throw JudgeParseError(JudgeErrorCode::NegativeCount, key);
        if (s > std::numeric_limits<int>::max())
          throw JudgeParseError(JudgeErrorCode::WrongType, key + " out of range");
        *counts[idx] = static_cast<int>(s);
      }
    } else {
      if (!v.is_boolean()) throw JudgeParseError(JudgeErrorCode::WrongType, key);
      *flags[idx - 4] = v.get<bool>();
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Offline rule judge

namespace detail {

inline const std::set<std::string>& judge_stopwords() {
  static const std::set<std::string> words = {
      "a", "an", "the", "of", "in", "on", "at", "to", "and", "or", "with", "is", "are", "was",
      "were", "be", "been", "by", "for", "as", "this", "that", "these", "those", "there", "its",
      "it", "from", "into", "which", "also", "both", "shows", "show", "shown", "seen", "visible",
      "noted", "image", "images", "eye", "eyes"};
  return words;
}

inline std::vector<std::string> key_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : content_tokens(text))
    if (!judge_stopwords().count(t)) out.push_back(std::move(t));
  return out;
}

// Clauses split at sentence ends, semicolons, commas and line breaks. A
// period only ends a clause when followed by whitespace or the end of text,
// so decimals stay intact.
inline std::vector<std::string> clauses(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    auto t = trim(cur);
    while (!t.empty() && (t.front() == '-' || t.front() == '*' || t.front() == '#')) t = trim(t.substr(1));
    if (!key_tokens(t).empty()) out.emplace_back(t);
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool boundary = c == ';' || c == ',' || c == '\n' ||
                    (c == '.' && (i + 1 == text.size() || is_space(text[i + 1])));
    if (boundary) flush();
    else cur.push_back(c);
  }
  flush();
  return out;
}

inline bool is_normal_statement(std::string_view clause) {
  static const std::set<std::string> cues = {"no", "not", "normal", "unremarkable", "without",
                                             "clear", "healthy", "intact", "absent", "negative"};
  for (const auto& t : content_tokens(clause))
    if (cues.count(t)) return true;
  return false;
}

// Fraction of the clause's key tokens found in `vocab`.
inline double clause_recall(std::string_view clause, const std::set<std::string>& vocab) {
  auto toks = key_tokens(clause);
  if (toks.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& t : toks) hit += vocab.count(t);
  return static_cast<double>(hit) / static_cast<double>(toks.size());
}

inline std::set<std::string> vocab_of(std::string_view text) {
  auto toks = key_tokens(text);
  return {toks.begin(), toks.end()};
}

inline bool has_recommendation(std::string_view text) {
  static const std::vector<std::string_view> cues = {
      "recommend", "suggest", "advise", "follow-up", "follow up", "followup", "treatment",
      "therapy", "surgery", "surgical", "refer", "review in", "monitor", "injection", "laser",
      "observation", "consult", "re-examination", "reexamination", "drops", "medication"};
  const auto lower = to_lower_ascii(text);
  for (auto c : cues)
    if (lower.find(c) != std::string::npos) return true;
  return false;
}

inline std::string_view findings_text(const ParsedReport& r, std::string_view whole) {
  auto body = r.body(ReportSection::ImagingFindings);
  return body.empty() ? whole : body;
}

inline std::string diagnosis_line(const ParsedReport& r) {
  auto body = r.body(ReportSection::DiagnosticSuggestions);
  for (auto& line : split(body, '\n')) {
    auto t = trim(line);
    while (!t.empty() && (t.front() == '-' || t.front() == '*')) t = trim(t.substr(1));
    if (!t.empty()) return std::string(t);
  }
  return {};
}

}  // namespace detail

/// Deterministic lexical stand-in for an LLM judge. B, C and I cannot be
/// inferred lexically and are always reported clean.
inline JudgeFindings rule_judge(std::string_view candidate, std::string_view reference) {
  const auto cand = parse_report(candidate);
  const auto ref = parse_report(reference);
  JudgeFindings f;

  const auto cand_vocab = detail::vocab_of(candidate);
  const auto ref_vocab = detail::vocab_of(reference);

  for (const auto& clause : detail::clauses(detail::findings_text(cand, candidate)))
    if (!detail::is_normal_statement(clause) && detail::clause_recall(clause, ref_vocab) < 0.5)
      ++f.a_count;
  for (const auto& clause : detail::clauses(detail::findings_text(ref, reference)))
    if (detail::clause_recall(clause, cand_vocab) < 0.5) ++f.d_count;

  const auto cand_dx = detail::diagnosis_line(cand);
  const auto ref_dx = detail::diagnosis_line(ref);
  f.e_ok = !cand_dx.empty() || ref_dx.empty();

  auto cand_type = cand.body(ReportSection::ImageType);
  auto ref_type = ref.body(ReportSection::ImageType);
  f.f_ok = !trim(cand_type).empty();
  if (f.f_ok && !trim(ref_type).empty()) {
    const auto ref_type_vocab = detail::vocab_of(ref_type);
    const auto cand_type_toks = detail::key_tokens(cand_type);
    f.f_ok = std::any_of(cand_type_toks.begin(), cand_type_toks.end(),
                         [&](const std::string& t) { return ref_type_vocab.count(t) > 0; });
  }

  auto cand_dx_body = cand.body(ReportSection::DiagnosticSuggestions);
  auto ref_dx_body = ref.body(ReportSection::DiagnosticSuggestions);
  f.g_ok = detail::has_recommendation(cand_dx_body.empty() ? candidate : cand_dx_body) ||
           !detail::has_recommendation(ref_dx_body.empty() ? reference : ref_dx_body);
  f.h_ok = cand.well_structured();
  f.b_count = 0;
  f.c_count = 0;
  f.i_serious_error = false;

  if (ref_dx.empty()) {
    f.j_diagnosis_correct = true;
  } else if (cand_dx.empty()) {
    f.j_diagnosis_correct = false;
  } else {
    // Token F1 over key tokens of the two diagnosis lines.
    auto a = detail::key_tokens(cand_dx), b = detail::key_tokens(ref_dx);
    std::map<std::string, int> bag;
    for (const auto& t : b) ++bag[t];
    std::size_t common = 0;
    for (const auto& t : a)
      if (bag[t]-- > 0) ++common;
    double f1 = (a.empty() || b.empty() || common == 0)
                    ? 0.0
                    : 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
    f.j_diagnosis_correct = f1 >= 0.5;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Cache

/// sha256 over length-prefixed (candidate, reference, criteria version, model).
inline std::string judge_cache_key(std::string_view candidate, std::string_view reference,
                                   std::string_view criteria_version, std::string_view model) {
  std::string buf;
  for (auto part : {candidate, reference, criteria_version, model}) {
    buf += std::to_string(part.size());
    buf.push_back(':');
    buf.append(part);
  }
  return sha256_hex(buf);
}

/// Content-addressed store: one file per key holding the raw judge reply.
/// An empty directory keeps entries in memory only. Safe for concurrent
/// writers; each write lands atomically via rename.
class JudgeCache {
 public:
  explicit JudgeCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  std::optional<std::string> get(const std::string& key) const {
    if (dir_.empty()) {
      std::lock_guard lk(mu_);
      auto it = mem_.find(key);
      if (it == mem_.end()) return std::nullopt;
      return it->second;
    }
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void put(const std::string& key, const std::string& raw) {
    if (dir_.empty()) {
      std::lock_guard lk(mu_);
      mem_[key] = raw;
      return;
    }
    auto tmp = dir_ / (key + ".tmp." + std::to_string(counter_.fetch_add(1)) + "." +
                       to_hex(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write judge cache file " + tmp.string());
      out << raw;
      if (!out.flush()) throw Error("cannot write judge cache file " + tmp.string());
    }
    std::filesystem::rename(tmp, path_for(key));
  }

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> mem_;
  std::atomic<std::uint64_t> counter_{0};
};

// ---------------------------------------------------------------------------
// Transport and runner

struct ChatRequest {
  std::string model;
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

/// A chat-completion backend. Implementations must be safe to call from
/// several threads at once and return the first text segment of the reply.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatRequest& request) const = 0;
};

struct JudgeOptions {
  std::string model = "gpt-4";
  std::string criteria_version = std::string(kCriteriaVersion);
  CriterionWeights weights{};
  std::size_t max_parallel = 4;
  int retry_budget = 2;  // extra attempts after a transport failure
  std::chrono::milliseconds retry_backoff{200};

  void validate() const {
    if (max_parallel < 1) throw Error("judge max_parallel must be >= 1");
    if (retry_budget < 0) throw Error("judge retry_budget must be >= 0");
    if (model.empty()) throw Error("judge model name is empty");
    weights.validate();
  }
};

struct JudgeOutcome {
  std::optional<JudgeFindings> findings;
  std::string raw;
  std::string error;
  std::optional<JudgeErrorCode> parse_error;
  bool cached = false;
  int transport_calls = 0;

  bool ok() const { return findings.has_value(); }
};

struct JudgePair {
  std::string candidate;
  std::string reference;
};

/// Judges report pairs through a transport, consulting the cache first.
/// Concurrent requests for the same key share a single transport call.
class JudgeRunner {
 public:
  JudgeRunner(const ChatTransport& transport, JudgeCache& cache, JudgeOptions opt = {})
      : transport_(transport), cache_(cache), opt_(std::move(opt)) {
    opt_.validate();
  }

  JudgeOutcome judge(std::string_view candidate, std::string_view reference) {
    const auto key = judge_cache_key(candidate, reference, opt_.criteria_version, opt_.model);
    if (auto hit = from_cache(key)) return *hit;

    std::promise<JudgeOutcome> promise;
    std::shared_future<JudgeOutcome> shared;
    {
      std::unique_lock lk(inflight_mu_);
      auto it = inflight_.find(key);
      if (it != inflight_.end()) {
        shared = it->second;
      } else {
        if (auto hit = from_cache(key)) return *hit;
        inflight_.emplace(key, promise.get_future().share());
      }
    }
    if (shared.valid()) {
      auto out = shared.get();
      out.cached = out.ok();
      out.transport_calls = 0;
      return out;
    }

    JudgeOutcome out;
    try {
      out = call(candidate, reference);
      if (out.ok()) cache_.put(key, out.raw);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    promise.set_value(out);
    {
      std::lock_guard lk(inflight_mu_);
      inflight_.erase(key);
    }
    return out;
  }

  /// Judges every pair using `jobs` worker threads; results keep input order.
  std::vector<JudgeOutcome> judge_all(const std::vector<JudgePair>& pairs, std::size_t jobs) {
    std::vector<JudgeOutcome> out(pairs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (auto i = next.fetch_add(1); i < pairs.size(); i = next.fetch_add(1))
        out[i] = judge(pairs[i].candidate, pairs[i].reference);
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, pairs.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    return out;
  }

  const JudgeOptions& options() const { return opt_; }

 private:
  std::optional<JudgeOutcome> from_cache(const std::string& key) const {
    auto raw = cache_.get(key);
    if (!raw) return std::nullopt;
    try {
      JudgeOutcome out;
      out.findings = parse_judge_response(*raw);
      out.raw = std::move(*raw);
      out.cached = true;
      return out;
    } catch (const JudgeParseError&) {
      return std::nullopt;  // unreadable entry, refetch
    }
  }

  std::string send(const ChatRequest& req, int& calls) {
    auto backoff = opt_.retry_backoff;
    for (int attempt = 0;; ++attempt) {
      try {
        Slot slot(*this);
        ++calls;
        return transport_.complete(req);
      } catch (const TransportError&) {
        if (attempt >= opt_.retry_budget) throw;
      }
      if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }

  JudgeOutcome call(std::string_view candidate, std::string_view reference) {
    const auto prompt = build_judge_prompt(candidate, reference, opt_.weights);
    ChatRequest req{opt_.model, prompt.system_text, prompt.user_text, 0.0};
    JudgeOutcome out;
    out.raw = send(req, out.transport_calls);
    try {
      out.findings = parse_judge_response(out.raw);
      return out;
    } catch (const JudgeParseError&) {
    }
    req.user_text += kJsonOnlyReminder;
    out.raw = send(req, out.transport_calls);
    try {
      out.findings = parse_judge_response(out.raw);
    } catch (const JudgeParseError& e) {
      out.error = e.what();
      out.parse_error = e.code();
    }
    return out;
  }

  // Holds one of max_parallel transport slots.
  struct Slot {
    explicit Slot(JudgeRunner& r) : r_(r) {
      std::unique_lock lk(r_.slot_mu_);
      r_.slot_cv_.wait(lk, [&] { return r_.in_flight_ < r_.opt_.max_parallel; });
      ++r_.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard lk(r_.slot_mu_);
        --r_.in_flight_;
      }
      r_.slot_cv_.notify_one();
    }
    JudgeRunner& r_;
  };

  const ChatTransport& transport_;
  JudgeCache& cache_;
  JudgeOptions opt_;

  std::mutex inflight_mu_;
  std::map<std::string, std::shared_future<JudgeOutcome>> inflight_;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
};

}  // namespace ophvqa
