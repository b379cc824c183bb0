#pragma once

// Benchmark item types, JSONL manifest ingestion and record validation.

#include <array>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ophvqa/common.hpp"

namespace ophvqa {

using json = nlohmann::json;

enum class ImagingModality {
  FA,
  ICGA,
  OCT,
  Fundus,
  UBM,
  SlitLamp,
  FluoresceinStaining,
  CT,
};

inline constexpr std::array<ImagingModality, 8> kAllModalities = {
    ImagingModality::FA,       ImagingModality::ICGA,
    ImagingModality::OCT,      ImagingModality::Fundus,
    ImagingModality::UBM,      ImagingModality::SlitLamp,
    ImagingModality::FluoresceinStaining, ImagingModality::CT,
};

enum class TaskKind { ClosedQA, OpenQA, ReportGen };

inline constexpr std::array<TaskKind, 3> kAllTasks = {
    TaskKind::ClosedQA, TaskKind::OpenQA, TaskKind::ReportGen};

inline std::string_view to_string(ImagingModality m) {
  switch (m) {
    case ImagingModality::FA: return "FA";
    case ImagingModality::ICGA: return "ICGA";
    case ImagingModality::OCT: return "OCT";
    case ImagingModality::Fundus: return "Fundus";
    case ImagingModality::UBM: return "UBM";
    case ImagingModality::SlitLamp: return "SlitLamp";
    case ImagingModality::FluoresceinStaining: return "FluoresceinStaining";
    case ImagingModality::CT: return "CT";
  }
  return "?";
}

/// Human-readable name, used in prompts.
inline std::string_view display_name(ImagingModality m) {
  switch (m) {
    case ImagingModality::FA: return "Fluorescein Angiography (FA)";
    case ImagingModality::ICGA: return "Indocyanine Green Angiography (ICGA)";
    case ImagingModality::OCT: return "Optical Coherence Tomography (OCT)";
    case ImagingModality::Fundus: return "Fundus Photography";
    case ImagingModality::UBM: return "Ultrasound Biomicroscopy (UBM)";
    case ImagingModality::SlitLamp: return "Slit-Lamp Photography";
    case ImagingModality::FluoresceinStaining: return "Fluorescein Staining";
    case ImagingModality::CT: return "Computed Tomography (CT)";
  }
  return "?";
}

inline std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::ClosedQA: return "closed_qa";
    case TaskKind::OpenQA: return "open_qa";
    case TaskKind::ReportGen: return "report_gen";
  }
  return "?";
}

namespace detail {

// Lowercase with everything but letters and digits dropped, so that
// "Slit-Lamp", "slit lamp" and "SL." compare by their letters only.
inline std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

inline std::optional<ImagingModality> lookup_modality(std::string_view s) {
  static const std::map<std::string, ImagingModality, std::less<>> table = {
      {"fa", ImagingModality::FA},
      {"fluoresceinangiography", ImagingModality::FA},
      {"ffa", ImagingModality::FA},
      {"icga", ImagingModality::ICGA},
      {"indocyaninegreenangiography", ImagingModality::ICGA},
      {"oct", ImagingModality::OCT},
      {"opticalcoherencetomography", ImagingModality::OCT},
      {"fundus", ImagingModality::Fundus},
      {"fundusphotography", ImagingModality::Fundus},
      {"colorfundus", ImagingModality::Fundus},
      {"cfp", ImagingModality::Fundus},
      {"ubm", ImagingModality::UBM},
      {"ultrasoundbiomicroscopy", ImagingModality::UBM},
      {"slitlamp", ImagingModality::SlitLamp},
      {"slitlampphotography", ImagingModality::SlitLamp},
      {"sl", ImagingModality::SlitLamp},
      {"fluoresceinstaining", ImagingModality::FluoresceinStaining},
      {"fluoresceinstainingimages", ImagingModality::FluoresceinStaining},
      {"fs", ImagingModality::FluoresceinStaining},
      {"ct", ImagingModality::CT},
      {"computedtomography", ImagingModality::CT},
  };
  auto it = table.find(squash(s));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

}  // namespace detail

/// Case-insensitive. Accepts canonical names, common aliases ("FS.", "SL.",
/// "Slit-Lamp") and "Long Name (ABBR)" forms.
inline std::optional<ImagingModality> parse_modality(std::string_view s) {
  s = trim(s);
  if (auto m = detail::lookup_modality(s)) return m;
  auto open = s.rfind('(');
  auto close = s.rfind(')');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    if (auto m = detail::lookup_modality(s.substr(open + 1, close - open - 1))) return m;
    if (auto m = detail::lookup_modality(s.substr(0, open))) return m;
  }
  return std::nullopt;
}

inline std::optional<TaskKind> parse_task(std::string_view s) {
  auto k = detail::squash(s);
  if (k == "closedqa" || k == "closed" || k == "mcq" || k == "multiplechoice")
    return TaskKind::ClosedQA;
  if (k == "openqa" || k == "open") return TaskKind::OpenQA;
  if (k == "reportgen" || k == "report" || k == "reportgeneration") return TaskKind::ReportGen;
  return std::nullopt;
}

struct AnswerOption {
  char letter = 'A';
  std::string text;
  bool operator==(const AnswerOption&) const = default;
};

struct VqaRecord {
  std::string id;
  std::string image_ref;
  ImagingModality modality = ImagingModality::OCT;
  std::optional<std::string> anatomy;
  std::vector<std::string> disease_labels;
  TaskKind task = TaskKind::OpenQA;
  std::string question;
  std::optional<std::vector<AnswerOption>> options;
  std::string reference_answer;
  std::string source;
  /// Unknown fields from the input line, written back unchanged.
  json extra = json::object();

  bool operator==(const VqaRecord&) const = default;

  const AnswerOption* find_option(char letter) const {
    if (!options) return nullptr;
    for (const auto& o : *options)
      if (o.letter == letter) return &o;
    return nullptr;
  }
};

struct PredictionRecord {
  std::string record_id;
  std::string model_id;
  std::string output_text;
  bool operator==(const PredictionRecord&) const = default;
};

enum class ViolationCode {
  EmptyId,
  EmptyQuestion,
  EmptyReference,
  OptionsRequired,
  OptionsForbidden,
  TooManyOptions,
  OptionLetterOutOfOrder,
  EmptyOptionText,
  AnswerNotAmongOptions,
};

struct Violation {
  ViolationCode code;
  std::string message;
  bool operator==(const Violation&) const = default;
};

inline constexpr std::size_t kMaxOptions = 26;

/// Checks every record-level invariant. Never throws; an empty result means
/// the record is valid.
inline std::vector<Violation> validate_record(const VqaRecord& r) {
  std::vector<Violation> out;
  if (trim(r.id).empty()) out.push_back({ViolationCode::EmptyId, "empty id"});
  if (trim(r.question).empty())
    out.push_back({ViolationCode::EmptyQuestion, "empty question"});
  if (trim(r.reference_answer).empty())
    out.push_back({ViolationCode::EmptyReference, "empty reference"});

  if (r.task == TaskKind::ClosedQA) {
    if (!r.options || r.options->empty()) {
      out.push_back({ViolationCode::OptionsRequired, "options required for ClosedQA"});
    } else {
      const auto& opts = *r.options;
      if (opts.size() > kMaxOptions)
        out.push_back({ViolationCode::TooManyOptions, "more than 26 options"});
      for (std::size_t i = 0; i < opts.size() && i < kMaxOptions; ++i) {
        if (opts[i].letter != static_cast<char>('A' + i)) {
          out.push_back({ViolationCode::OptionLetterOutOfOrder,
                         "option letters must run A, B, C, ... in order"});
          break;
        }
      }
      for (const auto& o : opts) {
        if (trim(o.text).empty()) {
          out.push_back({ViolationCode::EmptyOptionText, "empty option text"});
          break;
        }
      }
      auto answer = trim(r.reference_answer);
      if (!answer.empty() && (answer.size() != 1 || r.find_option(answer[0]) == nullptr))
        out.push_back({ViolationCode::AnswerNotAmongOptions, "answer not among options"});
    }
  } else if (r.options) {
    out.push_back({ViolationCode::OptionsForbidden, "options only allowed for ClosedQA"});
  }
  return out;
}

class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, std::string what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line),
        detail_(std::move(what)) {}
  /// 1-based line number, 0 when not tied to a line.
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

namespace detail {

inline std::string get_string(const json& obj, std::string_view key, std::size_t line,
                              bool required_present = false) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required_present) throw ManifestError(line, "missing field '" + std::string(key) + "'");
    return {};
  }
  if (!it->is_string())
    throw ManifestError(line, "field '" + std::string(key) + "' must be a string");
  return it->get<std::string>();
}

inline std::vector<AnswerOption> parse_options(const json& v, std::size_t line) {
  std::vector<AnswerOption> out;
  auto letter_of = [line](const std::string& s) {
    auto t = trim(s);
    if (t.size() != 1 || !std::isalpha(static_cast<unsigned char>(t[0])))
      throw ManifestError(line, "option letter must be a single letter, got '" + s + "'");
    return static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  };
  if (v.is_array()) {
    for (const auto& o : v) {
      if (!o.is_object() || !o.contains("letter") || !o.contains("text") ||
          !o["letter"].is_string() || !o["text"].is_string())
        throw ManifestError(line, "each option must be {\"letter\": str, \"text\": str}");
      out.push_back({letter_of(o["letter"].get<std::string>()), o["text"].get<std::string>()});
    }
  } else if (v.is_object()) {
    // {"A": "...", "B": "..."}; nlohmann keeps object keys sorted
    for (const auto& [k, t] : v.items()) {
      if (!t.is_string()) throw ManifestError(line, "option text must be a string");
      out.push_back({letter_of(k), t.get<std::string>()});
    }
  } else {
    throw ManifestError(line, "options must be an array or object");
  }
  return out;
}

inline const std::unordered_set<std::string>& known_fields() {
  static const std::unordered_set<std::string> f = {
      "id", "image_ref", "modality", "anatomy", "disease_labels", "task",
      "question", "options", "reference_answer", "source"};
  return f;
}

}  // namespace detail

/// Builds a record from one JSON object. Type errors throw; invariant
/// violations are left for validate_record.
inline VqaRecord record_from_json(const json& obj, std::size_t line = 0) {
  if (!obj.is_object()) throw ManifestError(line, "line is not a JSON object");
  VqaRecord r;
  r.id = detail::get_string(obj, "id", line);
  r.image_ref = detail::get_string(obj, "image_ref", line);

  auto mod = detail::get_string(obj, "modality", line, true);
  auto m = parse_modality(mod);
  if (!m) throw ManifestError(line, "unknown modality '" + mod + "'");
  r.modality = *m;

  if (auto it = obj.find("anatomy"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw ManifestError(line, "field 'anatomy' must be a string");
    r.anatomy = it->get<std::string>();
  }
  if (auto it = obj.find("disease_labels"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw ManifestError(line, "field 'disease_labels' must be an array");
    for (const auto& l : *it) {
      if (!l.is_string()) throw ManifestError(line, "disease label must be a string");
      r.disease_labels.push_back(l.get<std::string>());
    }
  }

  auto task = detail::get_string(obj, "task", line, true);
  auto t = parse_task(task);
  if (!t) throw ManifestError(line, "unknown task '" + task + "'");
  r.task = *t;

  r.question = detail::get_string(obj, "question", line);
  if (auto it = obj.find("options"); it != obj.end() && !it->is_null())
    r.options = detail::parse_options(*it, line);
  r.reference_answer = detail::get_string(obj, "reference_answer", line);
  r.source = detail::get_string(obj, "source", line);

  for (const auto& [k, v] : obj.items()) {
    if (!detail::known_fields().contains(k)) r.extra[k] = v;
  }
  return r;
}

inline json to_json(const VqaRecord& r) {
  json j = json::object();
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["modality"] = std::string(to_string(r.modality));
  if (r.anatomy) j["anatomy"] = *r.anatomy;
  j["disease_labels"] = r.disease_labels;
  j["task"] = std::string(to_string(r.task));
  j["question"] = r.question;
  if (r.options) {
    json opts = json::array();
    for (const auto& o : *r.options)
      opts.push_back({{"letter", std::string(1, o.letter)}, {"text", o.text}});
    j["options"] = std::move(opts);
  }
  j["reference_answer"] = r.reference_answer;
  j["source"] = r.source;
  for (const auto& [k, v] : r.extra.items()) j[k] = v;
  return j;
}

struct TaskModality {
  TaskKind task;
  ImagingModality modality;
  auto operator<=>(const TaskModality&) const = default;
};

class DatasetManifest {
 public:
  DatasetManifest() = default;

  /// Throws ManifestError on a duplicate id or an invalid record.
  explicit DatasetManifest(std::vector<VqaRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      auto violations = validate_record(records_[i]);
      if (!violations.empty()) throw ManifestError(0, violations.front().message);
      if (!index_.emplace(records_[i].id, i).second)
        throw ManifestError(0, "duplicate id '" + records_[i].id + "'");
    }
  }

  const std::vector<VqaRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  const VqaRecord* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  /// Count per (task, modality) cell over the full 3 x 8 grid.
  std::map<TaskModality, std::size_t> counts_by() const {
    std::map<TaskModality, std::size_t> out;
    for (auto t : kAllTasks)
      for (auto m : kAllModalities) out[{t, m}] = 0;
    for (const auto& r : records_) ++out[{r.task, r.modality}];
    return out;
  }

 private:
  friend DatasetManifest parse_manifest(std::istream&);
  std::vector<VqaRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads a JSONL manifest. Blank lines are skipped; errors carry the
/// 1-based line number.
inline DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError(lineno, std::string("malformed JSON: ") + e.what());
    }
    VqaRecord r = record_from_json(obj, lineno);
    auto violations = validate_record(r);
    if (!violations.empty()) throw ManifestError(lineno, violations.front().message);
    if (!out.index_.emplace(r.id, out.records_.size()).second)
      throw ManifestError(lineno, "duplicate id '" + r.id + "'");
    out.records_.push_back(std::move(r));
  }
  return out;
}

inline DatasetManifest parse_manifest(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_manifest(in);
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  for (const auto& r : m.records()) out << to_json(r).dump() << '\n';
}

inline std::vector<PredictionRecord> parse_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ManifestError(lineno, "line is not a JSON object");
    PredictionRecord p;
    p.record_id = detail::get_string(obj, "record_id", lineno, true);
    p.model_id = detail::get_string(obj, "model_id", lineno, true);
    p.output_text = detail::get_string(obj, "output_text", lineno, true);
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<PredictionRecord> parse_predictions(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_predictions(in);
}

inline json to_json(const PredictionRecord& p) {
  return {{"record_id", p.record_id}, {"model_id", p.model_id}, {"output_text", p.output_text}};
}

}  // namespace ophvqa
