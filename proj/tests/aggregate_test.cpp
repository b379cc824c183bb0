#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "ophvqa/aggregate.hpp"

using namespace ophvqa;

namespace {

MetricTable load_published() {
  std::ifstream in(std::string(OPHVQA_TEST_DATA) + "/published_closed_qa.csv");
  if (!in) throw std::runtime_error("missing published table fixture");
  return table_from_cells_csv(in);
}

std::map<std::string, double> published_avgs() {
  std::ifstream in(std::string(OPHVQA_TEST_DATA) + "/published_closed_qa_avg.csv");
  std::map<std::string, double> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    auto f = split(line, ',');
    out[f[0]] = std::stod(f[1]);
  }
  return out;
}

AggregateOptions by_metric(std::string name) {
  AggregateOptions o;
  o.metric = std::move(name);
  return o;
}

ReportScore score_of(double v) {
  ReportScore s;
  s.score = v;
  s.grade = grade_for(v);
  return s;
}

}  // namespace

TEST(PublishedClosedQa, ThreeRowsReproducePublishedAverages) {
  auto t = load_published();
  EXPECT_EQ(t.columns().size(), 9u);
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"EyecareGPT-3.8B", "84.56"}, {"EyecareGPT-7B", "86.03"}, {"Qwen2.5-VL-7B", "62.95"}};
  for (const auto& [model, expected] : rows) {
    auto avg = t.average(model);
    ASSERT_TRUE(avg) << model;
    EXPECT_NEAR(*avg, std::stod(expected), 0.01) << model;
    EXPECT_EQ(format_fixed(*avg), expected) << model;
  }
}

TEST(PublishedClosedQa, HandSummedRows) {
  // Independent arithmetic on the printed cells.
  const double eyecare_38[] = {60.87, 77.03, 89.76, 75.10, 91.43, 81.66, 85.21, 100.00, 100.00};
  const double qwen[] = {31.74, 75.71, 57.86, 44.90, 75.79, 68.66, 74.65, 68.74, 68.46};
  double a = 0, b = 0;
  for (double v : eyecare_38) a += v;
  for (double v : qwen) b += v;
  EXPECT_NEAR(a, 761.06, 1e-9);
  EXPECT_NEAR(b, 566.51, 1e-9);
  auto t = load_published();
  EXPECT_DOUBLE_EQ(*t.average("EyecareGPT-3.8B"), a / 9);
  EXPECT_DOUBLE_EQ(*t.average("Qwen2.5-VL-7B"), b / 9);
}

TEST(PublishedClosedQa, AllOtherRowsAgreeExceptTwoPrintedOutliers) {
  // Two printed averages disagree with their own cells by 0.11; every other
  // row matches to the printed precision.
  auto t = load_published();
  auto pub = published_avgs();
  ASSERT_EQ(pub.size(), 14u);
  const std::set<std::string> outliers = {"LLaVA-1.5-7B", "LLaVA-Med-7B"};
  for (const auto& [model, printed] : pub) {
    double avg = *t.average(model);
    if (outliers.count(model)) {
      EXPECT_GT(std::abs(avg - printed), 0.1) << model;
    } else {
      EXPECT_NEAR(avg, printed, 0.005 + 1e-9) << model;
    }
  }
}

TEST(MetricTable, AvgRecomputationAndRendering) {
  MetricTable t({"m"}, {"x"});
  t.set("m", "x", 73.125);
  EXPECT_EQ(*t.average("m"), 73.125);
  EXPECT_EQ(format_fixed(73.125), "73.13");
  std::ostringstream csv, md;
  t.write_csv(csv);
  t.write_markdown(md);
  EXPECT_EQ(csv.str(), "model,x,Avg\nm,73.13,73.13\n");
  EXPECT_NE(md.str().find("| m | 73.13 | 73.13 |"), std::string::npos);

  auto table = load_published();
  for (std::size_t r = 0; r < table.rows().size(); ++r) {
    double sum = 0;
    for (auto c : table.avg_columns()) sum += *table.cell(r, c);
    EXPECT_NEAR(*table.average(r), sum / static_cast<double>(table.avg_columns().size()), 0.005);
  }

  MetricTable partial({"m"}, {"a", "b"});
  partial.set("m", "a", 1);
  EXPECT_FALSE(partial.average("m"));
  partial.set_avg_columns({"a"});
  EXPECT_EQ(*partial.average("m"), 1.0);
  EXPECT_THROW(partial.set("m", "zzz", 1), Error);
  EXPECT_THROW(MetricTable({"m", "m"}, {"a"}), Error);
}

TEST(CellsCsv, Errors) {
  std::istringstream bad_header("a,b\n");
  EXPECT_THROW(table_from_cells_csv(bad_header), Error);
  std::istringstream bad_value("model,column,value\nm,c,abc\n");
  EXPECT_THROW(table_from_cells_csv(bad_value), ManifestError);
  std::istringstream dup("model,column,value\nm,c,1\nm,c,2\n");
  EXPECT_THROW(table_from_cells_csv(dup), Error);
  std::istringstream ok("model,column,value\nm,c,1.5\n");
  EXPECT_EQ(*table_from_cells_csv(ok).average("m"), 1.5);
}

namespace {

DatasetManifest closed_manifest() {
  std::vector<VqaRecord> recs;
  int i = 0;
  for (auto m : {ImagingModality::OCT, ImagingModality::Fundus, ImagingModality::CT}) {
    for (int k = 0; k < 4; ++k) {
      VqaRecord r;
      r.id = "r" + std::to_string(i++);
      r.modality = m;
      r.task = TaskKind::ClosedQA;
      r.question = "q";
      r.options = std::vector<AnswerOption>{{'A', "x"}, {'B', "y"}};
      r.reference_answer = "A";
      r.source = k < 2 ? "public" : "hospital";
      recs.push_back(r);
    }
  }
  return DatasetManifest(std::move(recs));
}

}  // namespace

TEST(Aggregate, MacroMeanPerCell) {
  auto m = closed_manifest();
  std::vector<RecordResult> res;
  for (int i = 0; i < 12; ++i)
    res.push_back({"r" + std::to_string(i), "model-a", "accuracy", (i % 2) ? 100.0 : 0.0});
  res.push_back({"r0", "model-b", "accuracy", 100});
  res.push_back({"r0", "model-b", "bleu1", 7});
  auto t = aggregate(m, res, by_metric("accuracy"));
  EXPECT_EQ(t.rows(), (std::vector<std::string>{"model-a", "model-b"}));
  EXPECT_EQ(t.columns(), (std::vector<std::string>{"OCT", "Fundus", "CT"}));
  EXPECT_EQ(*t.get("model-a", "OCT"), 50.0);
  EXPECT_EQ(*t.get("model-b", "OCT"), 100.0);
  EXPECT_FALSE(t.get("model-b", "CT"));
  EXPECT_EQ(*t.average("model-a"), 50.0);

  auto by_source = by_metric("accuracy");
  by_source.split_by_source = true;
  auto s = aggregate(m, res, by_source);
  EXPECT_EQ(s.columns().size(), 6u);
  EXPECT_EQ(*s.get("model-a", "public/OCT"), 50.0);

  res.push_back({"nope", "model-a", "accuracy", 1});
  EXPECT_THROW(aggregate(m, res, by_metric("accuracy")), Error);
}

TEST(Aggregate, SingleCellRowAverageIsTheCell) {
  auto m = closed_manifest();
  auto t = aggregate(m, {{"r5", "solo", "accuracy", 42.5}}, by_metric("accuracy"));
  EXPECT_EQ(*t.average("solo"), 42.5);
}

TEST(Aggregate, PermutationInvariant) {
  auto m = closed_manifest();
  std::mt19937_64 gen(8);
  std::vector<RecordResult> res;
  for (int k = 0; k < 200; ++k)
    res.push_back({"r" + std::to_string(gen() % 12), "m" + std::to_string(gen() % 3), "accuracy",
                   static_cast<double>(gen() % 1000) / 10.0});
  std::ostringstream base;
  aggregate(m, res, by_metric("accuracy")).write_csv(base);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(res.begin(), res.end(), gen);
    std::ostringstream again;
    aggregate(m, res, by_metric("accuracy")).write_csv(again);
    EXPECT_EQ(again.str(), base.str());
  }
}

TEST(GradeDistribution, BandsAndConservation) {
  std::vector<ScoredReport> reps;
  for (double v : {95.0, 85.0, 70.0, 30.0}) reps.push_back({"id", "m", ImagingModality::OCT, {}, score_of(v)});
  auto d = grade_distribution(reps);
  EXPECT_EQ((d.counts[{"m", ImagingModality::OCT}]), (std::array<std::size_t, 4>{1, 1, 1, 1}));
  EXPECT_EQ(grade_distribution({}).total(), 0u);

  std::vector<ScoredReport> ninety(100, {"id", "m", ImagingModality::CT, {}, score_of(90)});
  EXPECT_EQ((grade_distribution(ninety).counts[{"m", ImagingModality::CT}][0]), 100u);

  std::mt19937_64 gen(1);
  std::vector<ScoredReport> many;
  for (int i = 0; i < 1000; ++i)
    many.push_back({"i", "m" + std::to_string(gen() % 4), kAllModalities[gen() % 8], {},
                    score_of(static_cast<double>(gen() % 10001) / 100.0)});
  auto full = grade_distribution(many);
  EXPECT_EQ(full.total(), 1000u);
  // Regrouping by model only preserves the per-grade totals.
  std::vector<ScoredReport> collapsed = many;
  for (auto& r : collapsed) r.modality = ImagingModality::Fundus;
  EXPECT_EQ(grade_distribution(collapsed).totals_by_grade(), full.totals_by_grade());
}

TEST(Agreement, CorrelationCases) {
  std::map<std::string, ReportScore> a = {{"x", score_of(90)}, {"y", score_of(50)}};
  std::map<std::string, ReportScore> b = {{"x", score_of(50)}, {"y", score_of(90)}};
  EXPECT_DOUBLE_EQ(*agreement(a, a, {}).correlation, 1.0);
  EXPECT_DOUBLE_EQ(*agreement(a, b, {}).correlation, -1.0);
  std::map<std::string, ReportScore> flat = {{"x", score_of(70)}, {"y", score_of(70)}};
  EXPECT_FALSE(agreement(flat, a, {}).correlation);
  EXPECT_THROW(agreement({{"x", score_of(1)}}, {{"x", score_of(2)}}, {}), Error);
  EXPECT_THROW(agreement(a, {{"x", score_of(1)}}, {}), Error);
}

TEST(Agreement, PearsonMatchesTwoPassFormula) {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x, y;
    int n = 2 + static_cast<int>(gen() % 30);
    for (int i = 0; i < n; ++i) {
      x.push_back(static_cast<double>(gen() % 101));
      y.push_back(static_cast<double>(gen() % 101));
    }
    // Oracle: textbook n*sum(xy) - sum(x)sum(y) form.
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      sxy += x[i] * y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
    }
    double den = std::sqrt(n * sxx - sx * sx) * std::sqrt(n * syy - sy * sy);
    auto r = pearson(x, y);
    if (den == 0) {
      EXPECT_FALSE(r);
    } else {
      ASSERT_TRUE(r);
      EXPECT_NEAR(*r, (n * sxy - sx * sy) / den, 1e-9);
      EXPECT_LE(std::abs(*r), 1.0);
    }
  }
}

TEST(Agreement, DimensionMeansAndTally) {
  JudgeFindings f;
  f.a_count = 2;        // accuracy 2
  f.d_count = 1;        // completeness 6
  f.h_ok = false;       // structure 5
  f.g_ok = false;       // practicability 2
  std::map<std::string, ReportScore> judge = {{"x", score_report(f)}, {"y", score_report({})}};
  std::map<std::string, ReportScore> human = {{"x", score_report({})}, {"y", score_report({})}};
  auto s = agreement(judge, human, {});
  EXPECT_EQ(s.judge_mean_deduction["accuracy"], 1.0);
  EXPECT_EQ(s.judge_mean_deduction["completeness"], 3.0);
  EXPECT_EQ(s.judge_mean_deduction["structure"], 2.5);
  EXPECT_EQ(s.judge_mean_deduction["practicability"], 1.0);
  EXPECT_EQ(s.human_mean_deduction["accuracy"], 0.0);

  const std::vector<std::string> models = {"m1", "m2", "m3", "m4", "m5", "m6"};
  std::mt19937_64 gen(500);
  std::vector<ModelRanking> rankings;
  for (int i = 0; i < 500; ++i) {
    auto order = models;
    std::shuffle(order.begin(), order.end(), gen);
    rankings.push_back({"item" + std::to_string(i), order});
  }
  auto t = agreement(judge, human, rankings);
  std::size_t total = 0;
  for (const auto& [_, n] : t.preference_tally) total += n;
  EXPECT_EQ(total, 500u);
}

TEST(ReportSummary, AccAndScoreColumns) {
  JudgeFindings wrong;
  wrong.j_diagnosis_correct = false;
  wrong.d_count = 5;
  std::vector<ScoredReport> reps = {
      {"a", "m", ImagingModality::OCT, {}, score_report({})},
      {"b", "m", ImagingModality::OCT, wrong, score_report(wrong)},
  };
  auto t = report_summary(reps);
  EXPECT_EQ(*t.get("m", "OCT AccGPT"), 50.0);
  EXPECT_EQ(*t.get("m", "OCT ScoreAvg"), 85.0);
  EXPECT_EQ(*t.average("m"), 85.0);
}
