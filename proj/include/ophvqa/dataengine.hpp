#pragma once

// Instruction-data construction: template-based open QA, rewrite prompts
// for clinical reports, text clean-up transforms and review sampling.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ophvqa/common.hpp"
#include "ophvqa/datamodel.hpp"
#include "ophvqa/report.hpp"

namespace ophvqa {

inline constexpr std::string_view kConditionPlaceholder = "{condition}";

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// ---------------------------------------------------------------------------
// QA templates

/// One question family with the answers that read correctly after it.
struct TemplateSet {
  std::vector<std::string> questions;
  std::vector<std::string> positive_answers;  // each holds "{condition}" once
  std::vector<std::string> negative_answers;  // no placeholder
  bool operator==(const TemplateSet&) const = default;
};

struct QaTemplateLibrary {
  std::map<std::string, TemplateSet> question_sets;

  void validate() const {
    if (question_sets.empty()) throw Error("template library has no question sets");
    for (const auto& [id, set] : question_sets) {
      if (set.questions.empty() || set.positive_answers.empty() || set.negative_answers.empty())
        throw Error("template set '" + id + "' has an empty list");
      for (const auto& a : set.positive_answers)
        if (count_occurrences(a, kConditionPlaceholder) != 1)
          throw Error("positive answer must contain {condition} exactly once: " + a);
      for (const auto& a : set.negative_answers)
        if (count_occurrences(a, kConditionPlaceholder) != 0)
          throw Error("negative answer must not contain {condition}: " + a);
      for (const auto& q : set.questions)
        if (trim(q).empty()) throw Error("empty question in set '" + id + "'");
    }
  }

  bool operator==(const QaTemplateLibrary&) const = default;

  /// JSON layout: {"question_sets": {id: [..]}, "positive_answers": {id: [..]},
  /// "negative_answers": {id: [..]}}. An answer list given as a plain array
  /// is shared by every set.
  static QaTemplateLibrary from_json(const nlohmann::json& j) {
    QaTemplateLibrary lib;
    const auto& qs = j.at("question_sets");
    if (!qs.is_object()) throw Error("question_sets must be an object of lists");
    for (const auto& [id, list] : qs.items())
      lib.question_sets[id].questions = list.get<std::vector<std::string>>();
    auto answers = [&](std::string_view key, auto member) {
      const auto& a = j.at(std::string(key));
      for (auto& [id, set] : lib.question_sets) {
        if (a.is_array()) {
          set.*member = a.get<std::vector<std::string>>();
        } else if (a.contains(id)) {
          set.*member = a.at(id).template get<std::vector<std::string>>();
        }
      }
    };
    answers("positive_answers", &TemplateSet::positive_answers);
    answers("negative_answers", &TemplateSet::negative_answers);
    lib.validate();
    return lib;
  }

  nlohmann::json to_json() const {
    nlohmann::json q = nlohmann::json::object(), p = nlohmann::json::object(),
                   n = nlohmann::json::object();
    for (const auto& [id, set] : question_sets) {
      q[id] = set.questions;
      p[id] = set.positive_answers;
      n[id] = set.negative_answers;
    }
    return {{"question_sets", q}, {"positive_answers", p}, {"negative_answers", n}};
  }
};

/// The built-in disease-presence and disease-identification templates.
inline const QaTemplateLibrary& default_template_library() {
  static const QaTemplateLibrary lib = [] {
    QaTemplateLibrary l;
    l.question_sets["disease_presence"] = TemplateSet{
        {
            "Is the eye in this picture diseased?.",
            "Does the eye shown in the image have any disease?",
            "Is there any sign of illness in the eye in this photo?",
            "Does this eye image show any signs of abnormalities?",
            "Does the eye in the image show signs of disease?",
            "Is there evidence of a disorder in the eye in this picture?",
            "Are there any visible abnormalities in the eye image?",
        },
        {
            "Yes, the eye in the picture has {condition}.",
            "Yes, the image reveals the presence of {condition} in the eye.",
            "Yes, the eye shown in this image is impacted by {condition}.",
            "Yes, this image depicts an eye presenting {condition}.",
            "Yes, the eye in this image shows evidence of {condition}.",
            "Yes, the image illustrates an eye with {condition}.",
        },
        {
            "No, very healthy.",
            "No, the eye appears healthy in the image.",
            "No. This image shows that the retina looks normal, with no hemorrhages, exudates or "
            "other signs of abnormality.",
            "No, the eye image appears normal.",
            "No, the findings from the retinal image suggest a normal and healthy eye.",
            "No, there are no indications of disease in the image.",
            "No, the retinal image indicates a healthy eye, with no signs of hemorrhages, "
            "exudates, or other pathological changes.",
            "No significant abnormalities were detected in the eye image.",
        },
    };
    l.question_sets["disease_identification"] = TemplateSet{
        {
            "What ocular disease is evident in this image?",
            "What eye condition is visible in this picture?",
            "What condition is affecting the eye shown in the image?",
            "What issue is apparent in the eye shown here?",
            "What is wrong with the eye in the image?",
            "Which disease can be seen in the eye from this picture?",
            "What health issue is present in the eye in this image?",
            "What health concern is evident in the eye in this image?",
            "What problem does the eye shown in the image have?",
        },
        {
            "The eye in the image exhibits signs of {condition}.",
            "{condition} is evident in the eye depicted in the image.",
            "The image reveals the presence of {condition} in the eye.",
            "In this picture, the eye appears to be affected by {condition}.",
            "This image shows an eye with {condition}.",
            "The eye in the photograph shows signs of {condition}.",
            "{condition} is visible in the eye from this picture.",
        },
        {
            "The eye in this image is very healthy.",
            "This picture shows a perfectly healthy eye with no signs of disease.",
            "The eye depicted in the image is completely healthy, showing no illness.",
            "There is no indication of disease in the eye shown by this image. It's very healthy.",
            "According to this image, the eye is very healthy and free from any disease.",
            "The photo indicates a very healthy eye with no presence of disease.",
        },
    };
    l.validate();
    return l;
  }();
  return lib;
}

struct LabeledImage {
  std::string image_ref;
  ImagingModality modality = ImagingModality::Fundus;
  std::optional<std::string> condition;  // absent means healthy

  void validate() const {
    if (condition && trim(*condition).empty())
      throw Error("condition for '" + image_ref + "' is blank");
  }
};

/// Which set and list entries a (image_ref, seed) pair selects.
struct TemplateChoice {
  std::string set_id;
  std::size_t question_index = 0;
  std::size_t answer_index = 0;
  bool positive = false;
};

inline TemplateChoice choose_templates(const LabeledImage& item, const QaTemplateLibrary& lib,
                                       std::uint64_t seed) {
  auto pick = [&](std::string_view salt, std::size_t n) {
    return static_cast<std::size_t>(
        StableHash().add(item.image_ref).add(seed).add(salt).value() % n);
  };
  TemplateChoice c;
  auto it = lib.question_sets.begin();
  std::advance(it, static_cast<long>(pick("set", lib.question_sets.size())));
  c.set_id = it->first;
  const auto& set = it->second;
  c.positive = item.condition.has_value();
  c.question_index = pick("question", set.questions.size());
  c.answer_index =
      pick("answer", c.positive ? set.positive_answers.size() : set.negative_answers.size());
  return c;
}

inline std::string splice_condition(std::string_view tmpl, std::string_view condition) {
  std::string out(tmpl);
  auto pos = out.find(kConditionPlaceholder);
  if (pos != std::string::npos) out.replace(pos, kConditionPlaceholder.size(), condition);
  return out;
}

/// Builds an open-QA record from a labelled image. Selection depends only
/// on (image_ref, seed); the condition is spliced in verbatim.
inline VqaRecord instantiate_open_qa(const LabeledImage& item, const QaTemplateLibrary& lib,
                                     std::uint64_t seed, std::optional<std::string> id = {}) {
  item.validate();
  const auto c = choose_templates(item, lib, seed);
  const auto& set = lib.question_sets.at(c.set_id);
  VqaRecord r;
  r.id = id ? *id : "oqa-" + to_hex(StableHash().add(item.image_ref).add(seed).value());
  r.image_ref = item.image_ref;
  r.modality = item.modality;
  r.task = TaskKind::OpenQA;
  r.question = set.questions[c.question_index];
  if (c.positive) {
    const auto condition = std::string(trim(*item.condition));
    r.reference_answer = splice_condition(set.positive_answers[c.answer_index], condition);
    r.disease_labels.push_back(condition);
  } else {
    r.reference_answer = set.negative_answers[c.answer_index];
  }
  r.source = "template:" + c.set_id;
  return r;
}

// ---------------------------------------------------------------------------
// Report rewrite prompts

struct RawReport {
  std::vector<std::string> image_refs;
  ImagingModality modality = ImagingModality::CT;
  std::string extracted_text;

  void validate() const {
    if (trim(extracted_text).empty()) throw Error("raw report text is empty");
  }
};

/// Prompt asking the rewriting model for a three-section Markdown report.
inline std::string build_rewrite_prompt(const RawReport& report) {
  report.validate();
  std::ostringstream p;
  p << "You are an experienced ophthalmologist preparing a structured imaging report.\n"
    << "Rewrite the clinical description below into a standardized report.\n\n"
    << "Imaging modality: " << display_name(report.modality) << "\n";
  if (!report.image_refs.empty()) {
    p << "Images (" << report.image_refs.size() << "):";
    for (const auto& ref : report.image_refs) p << ' ' << ref;
    p << "\n";
  }
  p << "\nOutput requirements:\n"
    << "- Respond in Markdown only, using exactly these three second-level headings in this "
       "order:\n";
  for (auto s : kReportSections) p << "  ## " << heading(s) << "\n";
  p << "- " << heading(ReportSection::ImageType)
    << ": name the examination type and imaging modality.\n"
    << "- " << heading(ReportSection::ImagingFindings)
    << ": describe every abnormal finding and the relevant normal findings in clear, "
       "standardized professional terminology; expand abbreviations.\n"
    << "- " << heading(ReportSection::DiagnosticSuggestions)
    << ": state the diagnosis or suspected diagnosis, then the treatment or follow-up "
       "recommendation.\n"
    << "- Do not include names, dates, record numbers or any other personal information.\n"
    << "- Do not add findings that the description does not support.\n\n"
    << "Clinical description:\n\"\"\"\n"
    << trim(report.extracted_text) << "\n\"\"\"\n";
  return p.str();
}

// ---------------------------------------------------------------------------
// Text transforms

/// A text-to-text clean-up stage (redaction, translation, abbreviation
/// expansion). Remote translators plug in behind the same interface.
class TextTransform {
 public:
  virtual ~TextTransform() = default;
  virtual std::string name() const = 0;
  virtual std::string apply(std::string_view text) const = 0;
};

struct RedactionSpan {
  std::size_t begin = 0;  // byte offsets into the original text
  std::size_t end = 0;
  std::string label;  // e.g. "NAME"
  bool operator==(const RedactionSpan&) const = default;
};

struct SanitizeResult {
  std::string text;
  std::vector<RedactionSpan> spans;
};

struct RedactionRule {
  std::string label;
  std::string pattern;
  /// Capture group to redact; 0 redacts the whole match.
  int group = 0;
};

inline std::vector<RedactionRule> default_redaction_rules() {
  return {
      {"DATE", R"(\b\d{4}[-/.]\d{1,2}[-/.]\d{1,2}\b)", 0},
      {"DATE", R"(\b\d{1,2}[-/.]\d{1,2}[-/.]\d{2,4}\b)", 0},
      {"NAME", R"(\b(?:Patient|Name|Pt)[ \t]*:[ \t]*([A-Z][A-Za-z'\-]+(?:[ \t]+[A-Z][A-Za-z'\-]+)*))", 1},
      {"ID", R"(\b\d{6,}\b)", 0},
      {"AGE", R"(\b\d{1,3}[ \t]*-?[ \t]*(?:years?|yrs?)(?:[ \t-]*old)?\b)", 0},
      {"AGE", R"(\b\d{1,3}[ \t]*y/o\b)", 0},
      {"AGE", R"(\b[Aa]ged?[ \t]*:?[ \t]*\d{1,3}\b)", 0},
  };
}

/// Regex-based redaction. Each match becomes "[LABEL]". Rules earlier in
/// the list win where matches overlap.
class Sanitizer final : public TextTransform {
 public:
  explicit Sanitizer(std::vector<RedactionRule> rules = default_redaction_rules()) {
    for (auto& r : rules) {
      try {
        compiled_.push_back({std::regex(r.pattern, std::regex::ECMAScript), std::move(r)});
      } catch (const std::regex_error& e) {
        throw Error("invalid redaction pattern '" + r.pattern + "': " + e.what());
      }
    }
  }

  std::string name() const override { return "sanitize"; }
  std::string apply(std::string_view text) const override { return sanitize(text).text; }

  SanitizeResult sanitize(std::string_view text) const {
    std::vector<RedactionSpan> spans;
    const std::string owned(text);
    for (const auto& [re, rule] : compiled_) {
      for (auto it = std::sregex_iterator(owned.begin(), owned.end(), re);
           it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        if (rule.group >= static_cast<int>(m.size()) || !m[rule.group].matched) continue;
        RedactionSpan s{static_cast<std::size_t>(m.position(rule.group)),
                        static_cast<std::size_t>(m.position(rule.group) + m.length(rule.group)),
                        rule.label};
        if (s.begin == s.end) continue;
        bool overlaps = std::any_of(spans.begin(), spans.end(), [&](const RedactionSpan& o) {
          return s.begin < o.end && o.begin < s.end;
        });
        if (!overlaps) spans.push_back(std::move(s));
      }
    }
    std::sort(spans.begin(), spans.end(),
              [](const RedactionSpan& a, const RedactionSpan& b) { return a.begin < b.begin; });
    SanitizeResult out;
    std::size_t cursor = 0;
    for (const auto& s : spans) {
      out.text.append(owned, cursor, s.begin - cursor);
      out.text += "[" + s.label + "]";
      cursor = s.end;
    }
    out.text.append(owned, cursor, std::string::npos);
    out.spans = std::move(spans);
    return out;
  }

 private:
  struct Compiled {
    std::regex re;
    RedactionRule rule;
  };
  std::vector<Compiled> compiled_;
};

inline std::map<std::string, std::string> default_abbreviations() {
  return {
      {"OD", "right eye"},
      {"OS", "left eye"},
      {"OU", "both eyes"},
      {"IOP", "intraocular pressure"},
      {"VA", "visual acuity"},
      {"BCVA", "best-corrected visual acuity"},
      {"AMD", "age-related macular degeneration"},
      {"DR", "diabetic retinopathy"},
      {"NPDR", "non-proliferative diabetic retinopathy"},
      {"PDR", "proliferative diabetic retinopathy"},
      {"DME", "diabetic macular edema"},
      {"CME", "cystoid macular edema"},
      {"CNV", "choroidal neovascularization"},
      {"RPE", "retinal pigment epithelium"},
      {"PED", "pigment epithelial detachment"},
      {"ERM", "epiretinal membrane"},
      {"CSC", "central serous chorioretinopathy"},
      {"CRVO", "central retinal vein occlusion"},
      {"BRVO", "branch retinal vein occlusion"},
      {"CRAO", "central retinal artery occlusion"},
      {"RD", "retinal detachment"},
      {"PVD", "posterior vitreous detachment"},
      {"ONH", "optic nerve head"},
      {"C/D", "cup-to-disc ratio"},
  };
}

/// Offline stand-in for the translation stage: expands whole-word
/// abbreviations from a dictionary. Matching is case-sensitive.
class AbbreviationExpander final : public TextTransform {
 public:
  explicit AbbreviationExpander(std::map<std::string, std::string> dict = default_abbreviations())
      : dict_(std::move(dict)) {}

  std::string name() const override { return "expand-abbreviations"; }

  std::string apply(std::string_view text) const override {
    std::string out;
    std::size_t i = 0;
    auto word_char = [](char c) {
      auto u = static_cast<unsigned char>(c);
      return std::isalnum(u) || c == '/' || u >= 0x80;
    };
    while (i < text.size()) {
      if (!word_char(text[i])) {
        out.push_back(text[i++]);
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && word_char(text[j])) ++j;
      auto word = text.substr(i, j - i);
      auto it = dict_.find(std::string(word));
      out += it == dict_.end() ? std::string(word) : it->second;
      i = j;
    }
    return out;
  }

 private:
  std::map<std::string, std::string> dict_;
};

/// Applies transforms in order.
inline std::string apply_transforms(std::string_view text,
                                    const std::vector<const TextTransform*>& chain) {
  std::string cur(text);
  for (const auto* t : chain) cur = t->apply(cur);
  return cur;
}

// ---------------------------------------------------------------------------
// Review sampling

struct ReviewBatch {
  std::string batch_id;
  std::vector<std::string> sampled_ids;
  /// record id -> (round 1 reviewer, round 2 reviewer)
  std::map<std::string, std::pair<std::string, std::string>> assignments;
  std::uint64_t seed = 0;
  int round_count = 2;

  bool assigned(const std::string& item, const std::string& reviewer) const {
    auto it = assignments.find(item);
    return it != assignments.end() && (it->second.first == reviewer || it->second.second == reviewer);
  }

  std::map<std::string, std::size_t> load() const {
    std::map<std::string, std::size_t> out;
    for (const auto& [_, pair] : assignments) {
      ++out[pair.first];
      ++out[pair.second];
    }
    return out;
  }
};

/// ceil(rate * n), robust to rate*n landing a hair above an integer.
inline std::size_t review_sample_size(std::size_t n, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw Error("review rate must be in (0, 1]");
  const double exact = rate * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::min(k, n);
}

struct SampleOptions {
  double rate = 0.10;
  std::uint64_t seed = 0;
  bool stratify_by_modality = false;
  std::string batch_id = "batch";
};

namespace detail {

inline std::vector<std::string> draw_without_replacement(std::vector<std::string> pool,
                                                         std::size_t k, SeededRng& rng) {
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k && i < pool.size(); ++i) {
    auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(std::min(k, pool.size()));
  return pool;
}

}  // namespace detail

/// Draws ceil(rate * N) records uniformly without replacement and gives
/// each two distinct reviewers, keeping reviewer loads within one item.
inline ReviewBatch sample_for_review(const DatasetManifest& manifest,
                                     std::vector<std::string> reviewers,
                                     const SampleOptions& opt = {}) {
  std::sort(reviewers.begin(), reviewers.end());
  reviewers.erase(std::unique(reviewers.begin(), reviewers.end()), reviewers.end());
  reviewers.erase(std::remove_if(reviewers.begin(), reviewers.end(),
                                 [](const std::string& r) { return trim(r).empty(); }),
                  reviewers.end());
  if (reviewers.size() < 2) throw Error("review sampling needs at least 2 distinct reviewers");

  ReviewBatch batch;
  batch.batch_id = opt.batch_id;
  batch.seed = opt.seed;
  const std::size_t k = review_sample_size(manifest.size(), opt.rate);
  SeededRng rng(opt.seed);

  if (!opt.stratify_by_modality) {
    std::vector<std::string> ids;
    for (const auto& r : manifest.records()) ids.push_back(r.id);
    batch.sampled_ids = detail::draw_without_replacement(std::move(ids), k, rng);
  } else {
    // Largest-remainder allocation keeps the total at exactly k.
    std::map<ImagingModality, std::vector<std::string>> strata;
    for (const auto& r : manifest.records()) strata[r.modality].push_back(r.id);
    struct Alloc {
      ImagingModality m;
      std::size_t base;
      double rem;
    };
    std::vector<Alloc> alloc;
    std::size_t given = 0;
    for (const auto& [m, ids] : strata) {
      double share = static_cast<double>(k) * static_cast<double>(ids.size()) /
                     static_cast<double>(manifest.size());
      auto base = static_cast<std::size_t>(std::floor(share));
      alloc.push_back({m, base, share - static_cast<double>(base)});
      given += base;
    }
    std::stable_sort(alloc.begin(), alloc.end(),
                     [](const Alloc& a, const Alloc& b) { return a.rem > b.rem; });
    for (std::size_t i = 0; given < k && i < alloc.size(); ++i, ++given) ++alloc[i].base;
    std::sort(alloc.begin(), alloc.end(), [](const Alloc& a, const Alloc& b) { return a.m < b.m; });
    for (const auto& a : alloc) {
      auto drawn = detail::draw_without_replacement(strata[a.m], a.base, rng);
      batch.sampled_ids.insert(batch.sampled_ids.end(), drawn.begin(), drawn.end());
    }
  }

  // Lowest current load first, ties by reviewer id.
  std::map<std::string, std::size_t> load;
  for (const auto& r : reviewers) load[r] = 0;
  for (const auto& id : batch.sampled_ids) {
    std::vector<std::string> order = reviewers;
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
      return load[a] < load[b];
    });
    batch.assignments[id] = {order[0], order[1]};
    ++load[order[0]];
    ++load[order[1]];
  }
  return batch;
}

/// One JSONL line per (id, reviewer, round).
inline void write_review_batch(std::ostream& out, const ReviewBatch& b) {
  for (const auto& id : b.sampled_ids) {
    const auto& [first, second] = b.assignments.at(id);
    out << nlohmann::json{{"batch_id", b.batch_id}, {"id", id}, {"reviewer_id", first}, {"round", 1}}.dump()
        << '\n';
    out << nlohmann::json{{"batch_id", b.batch_id}, {"id", id}, {"reviewer_id", second}, {"round", 2}}.dump()
        << '\n';
  }
}

inline ReviewBatch read_review_batch(std::istream& in, std::string batch_id = {}) {
  ReviewBatch b;
  b.batch_id = std::move(batch_id);
  std::map<std::string, std::map<int, std::string>> rounds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      auto id = j.at("id").get<std::string>();
      auto reviewer = j.at("reviewer_id").get<std::string>();
      int round = j.at("round").get<int>();
      if (round != 1 && round != 2) throw Error("round must be 1 or 2");
      if (j.contains("batch_id") && b.batch_id.empty()) b.batch_id = j["batch_id"].get<std::string>();
      if (!rounds.count(id)) b.sampled_ids.push_back(id);
      if (!rounds[id].emplace(round, reviewer).second) throw Error("duplicate round for " + id);
    } catch (const std::exception& e) {
      throw ManifestError(lineno, std::string("malformed review batch line: ") + e.what());
    }
  }
  for (const auto& id : b.sampled_ids) {
    const auto& r = rounds[id];
    if (r.size() != 2) throw ManifestError(0, "item '" + id + "' needs exactly two reviewers");
    if (r.at(1) == r.at(2)) throw ManifestError(0, "item '" + id + "' assigned the same reviewer twice");
    b.assignments[id] = {r.at(1), r.at(2)};
  }
  if (b.batch_id.empty()) b.batch_id = "batch";
  return b;
}

}  // namespace ophvqa
