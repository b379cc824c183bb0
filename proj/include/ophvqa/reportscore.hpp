#pragma once

// Ten-criteria weighted report scoring: deductions from 100, grade bands,
// diagnosis accuracy and mean score over a report set.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>

#include "ophvqa/common.hpp"

namespace ophvqa {

/// Criteria A..J. J is tracked for accuracy only and never deducts.
enum class Criterion { A, B, C, D, E, F, G, H, I, J };

inline constexpr std::array<Criterion, 9> kScoredCriteria = {
    Criterion::A, Criterion::B, Criterion::C, Criterion::D, Criterion::E,
    Criterion::F, Criterion::G, Criterion::H, Criterion::I};

inline char criterion_letter(Criterion c) { return static_cast<char>('A' + static_cast<int>(c)); }

/// Points deducted per unit for each scored criterion.
struct CriterionWeights {
  double a = 1, b = 4, c = 4, d = 6, e = 2, f = 2, g = 2, h = 5, i = 15;

  double of(Criterion cr) const {
    switch (cr) {
      case Criterion::A: return a;
      case Criterion::B: return b;
      case Criterion::C: return c;
      case Criterion::D: return d;
      case Criterion::E: return e;
      case Criterion::F: return f;
      case Criterion::G: return g;
      case Criterion::H: return h;
      case Criterion::I: return i;
      case Criterion::J: return 0;
    }
    return 0;
  }
  double& at(Criterion cr) {
    switch (cr) {
      case Criterion::A: return a;
      case Criterion::B: return b;
      case Criterion::C: return c;
      case Criterion::D: return d;
      case Criterion::E: return e;
      case Criterion::F: return f;
      case Criterion::G: return g;
      case Criterion::H: return h;
      case Criterion::I: return i;
      case Criterion::J: break;
    }
    throw Error("criterion J carries no weight");
  }
  void validate() const {
    for (auto cr : kScoredCriteria)
      if (!(of(cr) >= 0)) throw Error(std::string("weight for criterion ") +
                                      criterion_letter(cr) + " must be >= 0");
  }
  bool operator==(const CriterionWeights&) const = default;
};

struct JudgeFindings {
  int a_count = 0;  // abnormal features absent from the reference
  int b_count = 0;  // wrong severity
  int c_count = 0;  // wrong location
  int d_count = 0;  // missed key findings
  bool e_ok = true;  // diagnosis present
  bool f_ok = true;  // examination type present and correct
  bool g_ok = true;  // treatment recommendation present
  bool h_ok = true;  // clear structure
  bool i_serious_error = false;
  bool j_diagnosis_correct = true;
  bool operator==(const JudgeFindings&) const = default;

  bool valid() const { return a_count >= 0 && b_count >= 0 && c_count >= 0 && d_count >= 0; }
};

enum class Grade { Excellent, Usable, UnderReview, Unusable };

inline constexpr std::array<Grade, 4> kAllGrades = {Grade::Excellent, Grade::Usable,
                                                     Grade::UnderReview, Grade::Unusable};

inline std::string_view to_string(Grade g) {
  switch (g) {
    case Grade::Excellent: return "Excellent";
    case Grade::Usable: return "Usable";
    case Grade::UnderReview: return "UnderReview";
    case Grade::Unusable: return "Unusable";
  }
  return "?";
}

inline Grade parse_grade(std::string_view s) {
  for (auto g : kAllGrades)
    if (to_string(g) == s) return g;
  throw Error("unknown grade '" + std::string(s) + "'");
}

/// [90,100] Excellent, [80,90) Usable, [60,80) UnderReview, below 60 Unusable.
/// Shared edges go to the higher band.
inline Grade grade_for(double score) {
  if (score >= 90) return Grade::Excellent;
  if (score >= 80) return Grade::Usable;
  if (score >= 60) return Grade::UnderReview;
  return Grade::Unusable;
}

struct ReportScore {
  double score = 100;
  Grade grade = Grade::Excellent;
  std::map<Criterion, double> deductions;  // scored criteria only, zero entries kept
  bool operator==(const ReportScore&) const = default;

  double deduction(Criterion c) const {
    auto it = deductions.find(c);
    return it == deductions.end() ? 0.0 : it->second;
  }
};

inline ReportScore score_report(const JudgeFindings& f, const CriterionWeights& w = {}) {
  if (!f.valid()) throw Error("findings carry a negative count");
  ReportScore s;
  s.deductions[Criterion::A] = w.a * f.a_count;
  s.deductions[Criterion::B] = w.b * f.b_count;
  s.deductions[Criterion::C] = w.c * f.c_count;
  s.deductions[Criterion::D] = w.d * f.d_count;
  s.deductions[Criterion::E] = f.e_ok ? 0.0 : w.e;
  s.deductions[Criterion::F] = f.f_ok ? 0.0 : w.f;
  s.deductions[Criterion::G] = f.g_ok ? 0.0 : w.g;
  s.deductions[Criterion::H] = f.h_ok ? 0.0 : w.h;
  s.deductions[Criterion::I] = f.i_serious_error ? w.i : 0.0;
  double total = 0;
  for (const auto& [_, d] : s.deductions) total += d;
  s.score = std::clamp(100.0 - total, 0.0, 100.0);
  s.grade = grade_for(s.score);
  return s;
}

/// Percentage of reports whose diagnosis was judged correct.
inline double acc_gpt(std::span<const JudgeFindings> findings) {
  if (findings.empty()) throw Error("acc_gpt needs at least one report");
  auto correct = std::count_if(findings.begin(), findings.end(),
                               [](const JudgeFindings& f) { return f.j_diagnosis_correct; });
  return 100.0 * static_cast<double>(correct) / static_cast<double>(findings.size());
}

inline double score_avg(std::span<const ReportScore> scores) {
  if (scores.empty()) throw Error("score_avg needs at least one report");
  double sum = 0;
  for (const auto& s : scores) sum += s.score;
  return sum / static_cast<double>(scores.size());
}

}  // namespace ophvqa
