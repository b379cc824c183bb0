// Acceptance suite: one PASS/FAIL line per primary criterion.
// Exit status is the number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ophvqa/aggregate.hpp"
#include "ophvqa/dataengine.hpp"
#include "ophvqa/judge.hpp"
#include "ophvqa/metrics.hpp"
#include "ophvqa/reportscore.hpp"
#include "ophvqa/reviewsvc.hpp"
#include "oracles.hpp"

using namespace ophvqa;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

const std::string kData = OPHVQA_TEST_DATA;

// ---------------------------------------------------------------------------

Outcome closed_qa_averages() {
  Outcome o;
  std::ifstream in(kData + "/published_closed_qa.csv");
  auto t = table_from_cells_csv(in);
  const std::pair<const char*, double> rows[] = {
      {"EyecareGPT-3.8B", 84.56}, {"EyecareGPT-7B", 86.03}, {"Qwen2.5-VL-7B", 62.95}};
  std::ostringstream d;
  for (const auto& [model, published] : rows) {
    std::size_t r = 0;
    while (r < t.rows().size() && t.rows()[r] != model) ++r;
    o.require(r < t.rows().size(), std::string("missing row ") + model);
    if (!o.ok) return o;
    auto avg = t.average(r);
    o.require(avg && std::abs(*avg - published) <= 0.01,
              std::string(model) + " avg " + (avg ? format_fixed(*avg) : "none"));
    d << model << '=' << (avg ? format_fixed(*avg) : "-") << ' ';
  }
  if (o.ok) o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------------------

double oracle_score(const JudgeFindings& f) {
  // Deduction weights written out again, independent of CriterionWeights.
  double ded = 1.0 * f.a_count + 4.0 * f.b_count + 4.0 * f.c_count + 6.0 * f.d_count + (f.e_ok ? 0 : 2) +
               (f.f_ok ? 0 : 2) + (f.g_ok ? 0 : 2) + (f.h_ok ? 0 : 5) + (f.i_serious_error ? 15 : 0);
  return ded >= 100 ? 0.0 : 100.0 - ded;
}

JudgeFindings random_findings(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> count(0, 12);
  std::bernoulli_distribution coin(0.5);
  JudgeFindings f;
  f.a_count = count(gen);
  f.b_count = count(gen);
  f.c_count = count(gen);
  f.d_count = count(gen);
  f.e_ok = coin(gen);
  f.f_ok = coin(gen);
  f.g_ok = coin(gen);
  f.h_ok = coin(gen);
  f.i_serious_error = coin(gen);
  f.j_diagnosis_correct = coin(gen);
  return f;
}

Outcome report_scorer() {
  Outcome o;
  CriterionWeights w;
  const double expected[] = {1, 4, 4, 6, 2, 2, 2, 5, 15};
  for (std::size_t k = 0; k < kScoredCriteria.size(); ++k)
    o.require(w.of(kScoredCriteria[k]) == expected[k], std::string("weight ") + criterion_letter(kScoredCriteria[k]));

  JudgeFindings clean;
  o.require(score_report(clean).score == 100 && score_report(clean).grade == Grade::Excellent, "clean != 100");
  JudgeFindings f94;
  f94.a_count = 2;
  f94.b_count = 1;
  o.require(score_report(f94).score == 94 && score_report(f94).grade == Grade::Excellent, "a2 b1 != 94");
  JudgeFindings f50;
  f50.d_count = 5;
  f50.h_ok = false;
  f50.i_serious_error = true;
  o.require(score_report(f50).score == 50 && score_report(f50).grade == Grade::Unusable, "d5 h i != 50");

  o.require(grade_for(90) == Grade::Excellent, "90 band");
  o.require(grade_for(80) == Grade::Usable, "80 band");
  o.require(grade_for(60) == Grade::UnderReview, "60 band");
  o.require(grade_for(59.99) == Grade::Unusable, "59.99 band");

  std::mt19937_64 gen(4242);
  for (int i = 0; i < 10000 && o.ok; ++i) {
    auto f = random_findings(gen);
    double s = score_report(f).score;
    o.require(s >= 0 && s <= 100, "out of bounds");
    o.require(s == oracle_score(f), "arithmetic oracle mismatch at case " + std::to_string(i));
    auto flipped = f;
    flipped.j_diagnosis_correct = !f.j_diagnosis_correct;
    o.require(score_report(flipped).score == s, "J changed the score");
    // each single degradation never raises the score
    std::vector<JudgeFindings> worse(9, f);
    ++worse[0].a_count;
    ++worse[1].b_count;
    ++worse[2].c_count;
    ++worse[3].d_count;
    worse[4].e_ok = false;
    worse[5].f_ok = false;
    worse[6].g_ok = false;
    worse[7].h_ok = false;
    worse[8].i_serious_error = true;
    for (const auto& wf : worse) o.require(score_report(wf).score <= s, "monotonicity violated");
  }
  if (o.ok) o.detail = "weights 1,4,4,6,2,2,2,5,15; 100/94/50; 10000 random findings";
  return o;
}

// ---------------------------------------------------------------------------

TokenSeq seq_of(const std::vector<std::string>& t) { return tokenize(oracle::join(t)); }

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 gen(77);
  for (int i = 0; i < 1000 && o.ok; ++i) {
    auto a = oracle::random_tokens(gen, 0, 8, 5);
    auto b = oracle::random_tokens(gen, 0, 8, 5);
    o.require(lcs_length(seq_of(a), seq_of(b)) == oracle::brute_force_lcs(a, b),
              "LCS mismatch at case " + std::to_string(i));
  }
  auto ident = tokenize("the optic disc shows a large cup with thin rim");
  o.require(bleu(ident, ident, 4).value == 100.0, "BLEU identity");
  auto cand = tokenize("a b c d"), ref = tokenize("a b c e");
  o.require(bleu(cand, ref, 4).value == 0.0, "4-token BLEU-4 != 0");
  o.require(bleu(cand, ref, 1).value == 75.0, "4-token BLEU-1 != 75");
  for (int i = 0; i < 1000 && o.ok; ++i) {
    auto a = oracle::random_tokens(gen, 1, 10, 6);
    auto b = oracle::random_tokens(gen, 1, 10, 6);
    double ab = token_f1(seq_of(a), seq_of(b)).value;
    o.require(ab == token_f1(seq_of(b), seq_of(a)).value, "token_f1 not symmetric");
    auto pa = a, pb = b;
    std::shuffle(pa.begin(), pa.end(), gen);
    std::shuffle(pb.begin(), pb.end(), gen);
    o.require(ab == token_f1(seq_of(pa), seq_of(pb)).value, "token_f1 order dependent");
  }
  if (o.ok) o.detail = "1000 LCS pairs, BLEU 100/0/75, 1000 token-F1 pairs";
  return o;
}

// ---------------------------------------------------------------------------

Outcome closed_extraction() {
  Outcome o;
  auto cases = oracle::load_closed_fixture(kData + "/closed_qa_fixture.json");
  o.require(cases.size() == 20, "fixture must hold 20 cases");
  int correct = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    bool got = closed_accuracy(cases[i].prediction, cases[i].record);
    o.require(got == cases[i].expected, "case " + std::to_string(i) + " '" + cases[i].prediction + "'");
    correct += got;
  }
  o.require(correct == oracle::fixture_expected_correct(cases), "accuracy differs from hand labels");
  if (o.ok) o.detail = std::to_string(correct) + "/20 = " + format_fixed(100.0 * correct / 20) + "%";
  return o;
}

// ---------------------------------------------------------------------------

DatasetManifest numbered_manifest(std::size_t n) {
  std::vector<VqaRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    VqaRecord r;
    r.id = "r" + std::to_string(i);
    r.image_ref = "img";
    r.task = TaskKind::OpenQA;
    r.question = "q";
    r.reference_answer = "a";
    recs.push_back(r);
  }
  return DatasetManifest(std::move(recs));
}

Outcome data_engine() {
  Outcome o;
  const auto& lib = default_template_library();
  for (int i = 0; i < 2000 && o.ok; ++i) {
    LabeledImage img{"img/" + std::to_string(i) + ".png", ImagingModality::Fundus, std::nullopt};
    if (i % 3) img.condition = i % 2 ? "diabetic retinopathy" : "glaucoma";
    auto r = instantiate_open_qa(img, lib, 5);
    bool q_ok = false, a_ok = false;
    for (const auto& [_, set] : lib.question_sets) {
      for (const auto& q : set.questions) q_ok = q_ok || q == r.question;
      const auto& answers = img.condition ? set.positive_answers : set.negative_answers;
      for (std::string a : answers) {
        if (img.condition) {
          auto pos = a.find("{condition}");
          if (pos != std::string::npos) a = a.substr(0, pos) + *img.condition + a.substr(pos + 11);
        }
        a_ok = a_ok || a == r.reference_answer;
      }
    }
    o.require(q_ok && a_ok, "record " + r.id + " matches no template");
  }
  const std::vector<std::string> reviewers = {"a", "b", "c", "d", "e"};
  for (std::size_t n = 1; n <= 400 && o.ok; ++n) {
    auto m = numbered_manifest(n);
    auto b = sample_for_review(m, reviewers, {0.10, n});
    o.require(b.sampled_ids.size() == (n + 9) / 10, "sample size at N=" + std::to_string(n));
    for (const auto& id : b.sampled_ids) {
      const auto& [r1, r2] = b.assignments.at(id);
      o.require(r1 != r2, "same reviewer twice");
    }
    auto again = sample_for_review(m, reviewers, {0.10, n});
    o.require(again.sampled_ids == b.sampled_ids && again.assignments == b.assignments, "seed determinism");
  }
  auto m20 = numbered_manifest(20);
  std::map<std::string, double> hits;
  for (int d = 0; d < 10000; ++d)
    for (const auto& id : sample_for_review(m20, {"a", "b"}, {0.10, static_cast<std::uint64_t>(d) + 1}).sampled_ids)
      hits[id] += 1;
  double chi2 = 0;
  for (const auto& r : m20.records()) chi2 += std::pow(hits[r.id] - 1000.0, 2) / 1000.0;
  o.require(chi2 < 36.191, "chi-square " + format_fixed(chi2) + " rejects uniformity");
  if (o.ok) o.detail = "2000 records verbatim; N=1..400 sizes; chi2=" + format_fixed(chi2) + " < 36.191";
  return o;
}

// ---------------------------------------------------------------------------

class CountingTransport : public ChatTransport {
 public:
  std::string complete(const ChatRequest&) const override {
    ++calls;
    return render_findings(JudgeFindings{});
  }
  mutable std::atomic<int> calls{0};
};

Outcome judge_round_trip() {
  Outcome o;
  std::mt19937_64 gen(99);
  for (int i = 0; i < 1000 && o.ok; ++i) {
    auto f = random_findings(gen);
    o.require(parse_judge_response(render_findings(f)) == f, "round trip " + std::to_string(i));
  }
  const std::string ref =
      "## Image Type\nOptical coherence tomography, left eye.\n"
      "## Imaging Findings\nIntraretinal cysts at the fovea with subretinal fluid.\n"
      "## Diagnostic Suggestions\nDiabetic macular edema. Recommend anti-VEGF therapy.";
  o.require(score_report(rule_judge(ref, ref)).score == 100, "identity pair not 100");

  CountingTransport t;
  JudgeCache cache;
  JudgeRunner runner(t, cache);
  std::vector<JudgePair> pairs;
  for (int i = 0; i < 20; ++i) pairs.push_back({"candidate " + std::to_string(i), ref});
  runner.judge_all(pairs, 4);
  int cold = t.calls;
  t.calls = 0;
  auto warm = runner.judge_all(pairs, 4);
  o.require(cold == 20, "cold run made " + std::to_string(cold) + " calls");
  o.require(t.calls == 0, "warm run made " + std::to_string(t.calls) + " calls");
  for (const auto& w : warm) o.require(w.ok() && w.cached, "warm outcome not cached");
  if (o.ok) o.detail = "1000 round trips; identity 100; warm calls 0";
  return o;
}

// ---------------------------------------------------------------------------

void walk_strings(const nlohmann::json& j, const std::function<void(const std::string&)>& fn) {
  if (j.is_string()) fn(j.get<std::string>());
  if (j.is_object())
    for (const auto& [k, v] : j.items()) {
      fn(k);
      walk_strings(v, fn);
    }
  if (j.is_array())
    for (const auto& v : j) walk_strings(v, fn);
}

Outcome review_service() {
  Outcome o;
  const std::vector<std::string> models = {"EyecareGPT-3.8B", "EyecareGPT-7B", "Qwen2.5-VL-7B",
                                           "InternVL-2.5-8B", "HealthGPT-M3", "LLaVA-Med-7B"};
  std::vector<RankingItem> items;
  ModelOutputs outputs;
  for (int i = 0; i < 500; ++i) {
    auto id = "item-" + std::to_string(i);
    items.push_back({id, "Generate the report.", "img/" + id});
    for (std::size_t m = 0; m < models.size(); ++m)
      outputs[models[m]][id] = "## Imaging Findings\nfinding " + std::to_string(m) + " of " + id;
  }
  auto path = std::filesystem::temp_directory_path() / ("ophvqa-acceptance-" + std::to_string(::getpid()) + ".jsonl");
  std::filesystem::remove(path);
  std::mt19937_64 gen(31);
  ReviewState live;
  std::vector<nlohmann::json> payloads;
  std::size_t rankings = 0;
  {
    EventLog log(path);
    ReviewService svc(log);
    auto session = create_ranking_session("s", items, outputs, 17);
    for (const auto& [_, it] : session.items) o.require(it.candidates.size() == 6, "list size != 6");
    o.require(session.items.size() == 500, "500 lists");
    svc.create_session(session);
    ReviewBatchSpec batch{"b", {}, {}};
    for (int i = 0; i < 50; ++i) {
      auto id = "qa" + std::to_string(i);
      batch.assignments[id] = {"r" + std::to_string(i % 4), "r" + std::to_string((i + 1) % 4)};
      batch.items[id] = {id, "q", "a", "img"};
    }
    svc.create_batch(batch);
    payloads.push_back(svc.session_view("s"));
    std::size_t valid = 2;
    while (valid < 1000) {
      try {
        if (gen() % 3) {
          const auto& id = session.item_ids[gen() % session.item_ids.size()];
          auto reviewer = "doc" + std::to_string(gen() % 4);
          payloads.push_back(svc.item_view("s", id, reviewer));
          std::vector<std::string> order;
          for (const auto& c : session.items.at(id).candidates) order.push_back(c.label);
          std::shuffle(order.begin(), order.end(), gen);
          auto e = svc.submit_ranking("s", id, reviewer, order);
          payloads.push_back({{"event_id", e.event_id}, {"item_id", e.item_id}, {"status", "recorded"}});
          ++rankings;
        } else {
          auto id = "qa" + std::to_string(gen() % 50);
          const auto& [a, b] = batch.assignments.at(id);
          const EventKind kinds[] = {EventKind::Approve, EventKind::Reject, EventKind::Edit};
          svc.submit_decision("b", id, gen() % 2 ? a : b, kinds[gen() % 3], "edited answer");
          payloads.push_back(svc.review_queue("b", a));
        }
        ++valid;
      } catch (const ReviewError& e) {
        payloads.push_back({{"error", e.what()}});
      }
    }
    live = svc.snapshot();
  }
  auto replayed = ReviewState::replay(EventLog::read(path));
  std::filesystem::remove(path);
  o.require(replayed == live, "replay differs from live state");
  o.require(replayed.last_event_id() == 1000, "expected 1000 events");

  std::size_t leaks = 0, strings = 0;
  for (const auto& p : payloads)
    walk_strings(p, [&](const std::string& s) {
      ++strings;
      for (const auto& m : models) leaks += s.find(m) != std::string::npos;
    });
  o.require(leaks == 0, std::to_string(leaks) + " model ids in client payloads");

  std::size_t total = 0;
  for (const auto& [_, n] : live.preference_tally("s")) total += n;
  o.require(total == rankings, "tally " + std::to_string(total) + " != rankings " + std::to_string(rankings));
  if (o.ok)
    o.detail = "1000 events replayed; " + std::to_string(strings) + " strings blind; tally " + std::to_string(total) +
               " = rankings";
  return o;
}

struct Check {
  const char* name;
  double limit_s;  // 0 means no runtime bound
  Outcome (*run)();
};

}  // namespace

int main() {
  const Check criteria[] = {
      {"Closed-QA average reproduction", 1.0, &closed_qa_averages},
      {"Report scorer fixtures", 5.0, &report_scorer},
      {"Metric oracles", 10.0, &metric_oracles},
      {"Closed-QA extraction", 0, &closed_extraction},
      {"Data engine", 0, &data_engine},
      {"Judge round trip", 0, &judge_round_trip},
      {"Review service", 0, &review_service},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      o.ok = false;
      o.detail = "runtime " + format_fixed(secs, 3) + " s exceeds " + format_fixed(c.limit_s, 0) + " s";
    }
    failures += !o.ok;
    std::printf("%s  %-30s %8.3f s  %s\n", o.ok ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures;
}
