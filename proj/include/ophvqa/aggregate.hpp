#pragma once

// Summary artifacts: metric tables with row averages, grade
// distributions, and judge-versus-human agreement statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ophvqa/common.hpp"
#include "ophvqa/datamodel.hpp"
#include "ophvqa/reportscore.hpp"

namespace ophvqa {

inline std::string format_fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << round_half_up(v, digits);
  return os.str();
}

/// Models by columns. Cells hold full-precision values; rounding happens
/// only when rendering.
class MetricTable {
 public:
  MetricTable() = default;
  MetricTable(std::vector<std::string> rows, std::vector<std::string> columns)
      : rows_(std::move(rows)), columns_(std::move(columns)),
        cells_(rows_.size(), std::vector<std::optional<double>>(columns_.size())) {
    check_unique(rows_, "row");
    check_unique(columns_, "column");
    for (std::size_t i = 0; i < columns_.size(); ++i) avg_columns_.push_back(i);
  }

  const std::vector<std::string>& rows() const { return rows_; }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::size_t>& avg_columns() const { return avg_columns_; }

  std::size_t row_index(std::string_view r) const { return index_of(rows_, r, "row"); }
  std::size_t column_index(std::string_view c) const { return index_of(columns_, c, "column"); }

  void set(std::string_view row, std::string_view col, double v) {
    if (!std::isfinite(v)) throw Error("table cell must be finite");
    cells_[row_index(row)][column_index(col)] = v;
  }
  std::optional<double> get(std::string_view row, std::string_view col) const {
    return cells_[row_index(row)][column_index(col)];
  }
  std::optional<double> cell(std::size_t r, std::size_t c) const { return cells_.at(r).at(c); }

  /// Declares which columns feed the Avg column; all columns by default.
  void set_avg_columns(const std::vector<std::string>& cols) {
    avg_columns_.clear();
    for (const auto& c : cols) avg_columns_.push_back(column_index(c));
  }

  /// Unweighted mean of the declared columns; none if any is missing.
  std::optional<double> average(std::string_view row) const { return average(row_index(row)); }
  std::optional<double> average(std::size_t r) const {
    if (avg_columns_.empty()) return std::nullopt;
    double sum = 0;
    for (auto c : avg_columns_) {
      if (!cells_[r][c]) return std::nullopt;
      sum += *cells_[r][c];
    }
    return sum / static_cast<double>(avg_columns_.size());
  }

  void write_csv(std::ostream& out) const {
    out << "model";
    for (const auto& c : columns_) out << ',' << csv_field(c);
    out << ",Avg\n";
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      out << csv_field(rows_[r]);
      for (std::size_t c = 0; c < columns_.size(); ++c)
        out << ',' << (cells_[r][c] ? format_fixed(*cells_[r][c]) : "");
      auto avg = average(r);
      out << ',' << (avg ? format_fixed(*avg) : "") << '\n';
    }
  }

  void write_markdown(std::ostream& out) const {
    out << "| Model |";
    for (const auto& c : columns_) out << ' ' << c << " |";
    out << " Avg. |\n|---|";
    for (std::size_t c = 0; c <= columns_.size(); ++c) out << "---:|";
    out << '\n';
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      out << "| " << rows_[r] << " |";
      for (std::size_t c = 0; c < columns_.size(); ++c)
        out << ' ' << (cells_[r][c] ? format_fixed(*cells_[r][c]) : "-") << " |";
      auto avg = average(r);
      out << ' ' << (avg ? format_fixed(*avg) : "-") << " |\n";
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"columns", columns_}, {"rows", nlohmann::json::array()}};
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      nlohmann::json cells = nlohmann::json::object();
      for (std::size_t c = 0; c < columns_.size(); ++c)
        if (cells_[r][c]) cells[columns_[c]] = *cells_[r][c];
      auto avg = average(r);
      j["rows"].push_back({{"model", rows_[r]}, {"cells", cells},
                           {"avg", avg ? nlohmann::json(*avg) : nlohmann::json()}});
    }
    return j;
  }

 private:
  static std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }
  static void check_unique(const std::vector<std::string>& v, const char* what) {
    std::set<std::string> seen;
    for (const auto& s : v)
      if (!seen.insert(s).second) throw Error(std::string("duplicate table ") + what + " '" + s + "'");
  }
  static std::size_t index_of(const std::vector<std::string>& v, std::string_view s, const char* what) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it == v.end()) throw Error(std::string("unknown table ") + what + " '" + std::string(s) + "'");
    return static_cast<std::size_t>(it - v.begin());
  }

  std::vector<std::string> rows_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::optional<double>>> cells_;
  std::vector<std::size_t> avg_columns_;
};

/// Reads published cells as CSV with header model,source,column,value (or
/// model,column,value). Columns become "source/column" when a source is
/// given. Row and column order follow first appearance.
inline MetricTable table_from_cells_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("cells CSV is empty");
  auto header = split(trim(line), ',');
  for (auto& h : header) h = std::string(trim(h));
  bool with_source;
  if (header == std::vector<std::string>{"model", "source", "column", "value"}) with_source = true;
  else if (header == std::vector<std::string>{"model", "column", "value"}) with_source = false;
  else throw Error("cells CSV header must be model,source,column,value or model,column,value");

  struct Cell {
    std::string row, col;
    double value;
  };
  std::vector<Cell> cells;
  std::vector<std::string> rows, cols;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split(trim(line), ',');
    if (f.size() != header.size()) throw ManifestError(lineno, "wrong number of fields");
    for (auto& x : f) x = std::string(trim(x));
    std::string col = with_source ? (f[1].empty() ? f[2] : f[1] + "/" + f[2]) : f[1];
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(f.back(), &used);
      if (used != f.back().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ManifestError(lineno, "value is not a number: '" + f.back() + "'");
    }
    if (std::find(rows.begin(), rows.end(), f[0]) == rows.end()) rows.push_back(f[0]);
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    cells.push_back({f[0], col, v});
  }
  MetricTable t(rows, cols);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : cells) {
    if (!seen.insert({c.row, c.col}).second)
      throw Error("duplicate cell " + c.row + " / " + c.col);
    t.set(c.row, c.col, c.value);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Per-record aggregation

/// One metric value for one (record, model).
struct RecordResult {
  std::string record_id;
  std::string model_id;
  std::string metric;
  double value = 0;
};

struct AggregateOptions {
  std::string metric;                // only results with this metric name
  std::optional<TaskKind> task;      // restrict to one task
  bool split_by_source = false;      // columns per (source, modality)
};

/// Macro mean per (model, task, modality) cell. Columns follow modality
/// order; rows are sorted by model id, so input order does not matter.
inline MetricTable aggregate(const DatasetManifest& manifest, const std::vector<RecordResult>& results,
                             const AggregateOptions& opt) {
  struct ColKey {
    TaskKind task;
    std::string source;
    ImagingModality modality;
    auto operator<=>(const ColKey&) const = default;
  };
  std::map<std::string, std::map<ColKey, std::pair<double, std::size_t>>> sums;
  std::set<ColKey> col_keys;
  std::set<TaskKind> tasks;
  for (const auto& res : results) {
    const auto* rec = manifest.find(res.record_id);
    if (!rec) throw Error("result references unknown record id '" + res.record_id + "'");
    if (!opt.metric.empty() && res.metric != opt.metric) continue;
    if (opt.task && rec->task != *opt.task) continue;
    ColKey k{rec->task, opt.split_by_source ? rec->source : std::string(), rec->modality};
    auto& [sum, n] = sums[res.model_id][k];
    sum += res.value;
    ++n;
    col_keys.insert(k);
    tasks.insert(rec->task);
  }
  auto label = [&](const ColKey& k) {
    std::string s;
    if (tasks.size() > 1) s += std::string(to_string(k.task)) + ":";
    if (!k.source.empty()) s += k.source + "/";
    return s + std::string(to_string(k.modality));
  };
  std::vector<std::string> rows, cols;
  for (const auto& [m, _] : sums) rows.push_back(m);
  for (const auto& k : col_keys) cols.push_back(label(k));
  MetricTable t(rows, cols);
  for (const auto& [m, by_col] : sums)
    for (const auto& [k, sn] : by_col) t.set(m, label(k), sn.first / static_cast<double>(sn.second));
  return t;
}

// ---------------------------------------------------------------------------
// Report-generation summaries

struct ScoredReport {
  std::string record_id;
  std::string model_id;
  ImagingModality modality = ImagingModality::Fundus;
  JudgeFindings findings;
  ReportScore score;
};

/// Acc^GPT and Score^Avg per (model, modality), plus an overall pair.
inline MetricTable report_summary(const std::vector<ScoredReport>& reports) {
  std::map<std::string, std::map<ImagingModality, std::vector<const ScoredReport*>>> groups;
  std::set<ImagingModality> mods;
  for (const auto& r : reports) {
    groups[r.model_id][r.modality].push_back(&r);
    mods.insert(r.modality);
  }
  std::vector<std::string> rows, cols;
  for (const auto& [m, _] : groups) rows.push_back(m);
  for (auto m : mods) {
    cols.push_back(std::string(to_string(m)) + " AccGPT");
    cols.push_back(std::string(to_string(m)) + " ScoreAvg");
  }
  MetricTable t(rows, cols);
  for (const auto& [model, by_mod] : groups) {
    for (const auto& [mod, items] : by_mod) {
      std::vector<JudgeFindings> f;
      std::vector<ReportScore> s;
      for (const auto* r : items) {
        f.push_back(r->findings);
        s.push_back(r->score);
      }
      t.set(model, std::string(to_string(mod)) + " AccGPT", acc_gpt(f));
      t.set(model, std::string(to_string(mod)) + " ScoreAvg", score_avg(s));
    }
  }
  std::vector<std::string> score_cols;
  for (auto m : mods) score_cols.push_back(std::string(to_string(m)) + " ScoreAvg");
  t.set_avg_columns(score_cols);
  return t;
}

struct GradeDistribution {
  /// (model, modality) -> count per grade, indexed like kAllGrades
  std::map<std::pair<std::string, ImagingModality>, std::array<std::size_t, 4>> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : counts)
      for (auto x : c) n += x;
    return n;
  }
  std::array<std::size_t, 4> totals_by_grade() const {
    std::array<std::size_t, 4> out{};
    for (const auto& [_, c] : counts)
      for (std::size_t g = 0; g < 4; ++g) out[g] += c[g];
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [key, c] : counts) {
      nlohmann::json grades = nlohmann::json::object();
      for (std::size_t g = 0; g < 4; ++g) grades[std::string(to_string(kAllGrades[g]))] = c[g];
      j.push_back({{"model", key.first}, {"modality", to_string(key.second)}, {"grades", grades}});
    }
    return j;
  }
};

inline GradeDistribution grade_distribution(const std::vector<ScoredReport>& reports) {
  GradeDistribution d;
  for (const auto& r : reports) {
    auto& c = d.counts[{r.model_id, r.modality}];
    ++c[static_cast<std::size_t>(grade_for(r.score.score))];
  }
  return d;
}

// ---------------------------------------------------------------------------
// Agreement

/// Named groups of criteria whose deductions are summed per report.
using DimensionMap = std::map<std::string, std::vector<Criterion>>;

inline DimensionMap default_dimensions() {
  return {
      {"accuracy", {Criterion::A, Criterion::B, Criterion::C, Criterion::I}},
      {"completeness", {Criterion::D, Criterion::E}},
      {"structure", {Criterion::F, Criterion::H}},
      {"practicability", {Criterion::G}},
  };
}

/// One blinded ranking of candidate models for an item, best first.
struct ModelRanking {
  std::string item_id;
  std::vector<std::string> ordered_models;
};

struct AgreementStats {
  std::map<std::string, double> judge_mean_deduction;
  std::map<std::string, double> human_mean_deduction;
  std::optional<double> correlation;  // none when either side has zero variance
  std::size_t pairs = 0;
  std::map<std::string, std::size_t> preference_tally;

  nlohmann::json to_json() const {
    return {{"judge_mean_deduction", judge_mean_deduction},
            {"human_mean_deduction", human_mean_deduction},
            {"correlation", correlation ? nlohmann::json(*correlation) : nlohmann::json()},
            {"pairs", pairs},
            {"preference_tally", preference_tally}};
  }
};

/// Pearson correlation; none for zero variance, error below two points.
inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("correlation needs paired samples");
  if (x.size() < 2) throw Error("correlation needs at least 2 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Scores keyed by record id, one list from the judge and one from humans.
inline AgreementStats agreement(const std::map<std::string, ReportScore>& judge,
                                const std::map<std::string, ReportScore>& human,
                                const std::vector<ModelRanking>& rankings,
                                const DimensionMap& dims = default_dimensions()) {
  for (const auto& [id, _] : judge)
    if (!human.count(id)) throw Error("record '" + id + "' has a judge score but no human score");
  for (const auto& [id, _] : human)
    if (!judge.count(id)) throw Error("record '" + id + "' has a human score but no judge score");

  AgreementStats s;
  s.pairs = judge.size();
  auto mean_deductions = [&](const std::map<std::string, ReportScore>& scores) {
    std::map<std::string, double> out;
    for (const auto& [dim, crits] : dims) {
      double total = 0;
      for (const auto& [_, sc] : scores)
        for (auto c : crits) total += sc.deduction(c);
      out[dim] = scores.empty() ? 0.0 : total / static_cast<double>(scores.size());
    }
    return out;
  };
  s.judge_mean_deduction = mean_deductions(judge);
  s.human_mean_deduction = mean_deductions(human);

  if (!judge.empty()) {
    std::vector<double> x, y;
    for (const auto& [id, sc] : judge) {
      x.push_back(sc.score);
      y.push_back(human.at(id).score);
    }
    s.correlation = pearson(x, y);
  }
  for (const auto& r : rankings) {
    if (r.ordered_models.empty()) throw Error("ranking for '" + r.item_id + "' is empty");
    ++s.preference_tally[r.ordered_models.front()];
  }
  return s;
}

}  // namespace ophvqa
