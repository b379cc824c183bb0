#pragma once

// Command implementations behind the `ophvqa` tool. Each command returns
// an exit code and writes progress to a log stream, so tests can drive
// them without a subprocess.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ophvqa/aggregate.hpp"
#include "ophvqa/config.hpp"
#include "ophvqa/dataengine.hpp"
#include "ophvqa/datamodel.hpp"
#include "ophvqa/judge.hpp"
#include "ophvqa/judge_http.hpp"
#include "ophvqa/metrics.hpp"
#include "ophvqa/review_http.hpp"
#include "ophvqa/reviewsvc.hpp"

namespace ophvqa::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kPartialResults = 2 };

/// Error tied to an input file, rendered as "path:line: detail".
class InputError : public Error {
 public:
  InputError(const fs::path& path, std::size_t line, const std::string& detail)
      : Error(path.string() + (line ? ":" + std::to_string(line) : std::string()) + ": " + detail) {}
};

// ---------------------------------------------------------------------------
// File helpers

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError(p, 0, "cannot open for reading");
  return in;
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(p, 0, "cannot open for writing");
  return out;
}

/// Calls fn(object, line) for every non-blank line; errors get file/line context.
inline void for_each_jsonl(const fs::path& p, const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  auto in = open_in(p);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw InputError(p, lineno, "not a JSON object");
    try {
      fn(j, lineno);
    } catch (const InputError&) {
      throw;
    } catch (const std::exception& e) {
      throw InputError(p, lineno, e.what());
    }
  }
}

inline DatasetManifest load_manifest(const fs::path& p) {
  auto in = open_in(p);
  try {
    return parse_manifest(in);
  } catch (const ManifestError& e) {
    throw InputError(p, e.line(), e.detail());
  }
}

inline std::vector<PredictionRecord> load_predictions(const std::vector<fs::path>& paths) {
  std::vector<PredictionRecord> out;
  for (const auto& p : paths) {
    auto in = open_in(p);
    try {
      auto part = parse_predictions(in);
      out.insert(out.end(), part.begin(), part.end());
    } catch (const ManifestError& e) {
      throw InputError(p, e.line(), e.detail());
    }
  }
  return out;
}

inline void write_table(const MetricTable& t, const fs::path& stem) {
  auto csv = open_out(fs::path(stem).concat(".csv"));
  t.write_csv(csv);
  auto md = open_out(fs::path(stem).concat(".md"));
  t.write_markdown(md);
}

inline std::string metric_slug(std::string_view name) {
  std::string s = to_lower_ascii(name);
  for (auto& c : s)
    if (c == '-') c = '_';
  return s;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
}

/// Ids of predictions that name no manifest record.
inline std::vector<std::string> unresolved_ids(const DatasetManifest& m, const std::vector<PredictionRecord>& preds) {
  std::set<std::string> missing;
  for (const auto& p : preds)
    if (!m.find(p.record_id)) missing.insert(p.record_id);
  return {missing.begin(), missing.end()};
}

inline bool report_unresolved(const DatasetManifest& m, const std::vector<PredictionRecord>& preds,
                              std::ostream& log) {
  auto missing = unresolved_ids(m, preds);
  for (const auto& id : missing) log << "error: prediction references unknown record id '" << id << "'\n";
  return !missing.empty();
}

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
  fs::path labels;                 // JSONL {image_ref, modality, condition?, id?}
  fs::path reports;                // JSONL {image_refs, modality, text}
  fs::path records;                // existing VQA records merged as-is
  fs::path templates;              // template library JSON; default library if empty
  std::uint64_t seed = kDefaultSeed;
  fs::path out = "out";
};

inline int cmd_build(const BuildArgs& a, std::ostream& log) {
  if (a.labels.empty() && a.reports.empty() && a.records.empty())
    throw Error("build needs --labels, --reports or --records");
  QaTemplateLibrary lib = default_template_library();
  if (!a.templates.empty()) {
    auto in = open_in(a.templates);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InputError(a.templates, 0, "malformed JSON");
    try {
      lib = QaTemplateLibrary::from_json(j);
    } catch (const std::exception& e) {
      throw InputError(a.templates, 0, e.what());
    }
  }

  std::vector<VqaRecord> records;
  if (!a.records.empty()) {
    auto m = load_manifest(a.records);
    records = m.records();
  }
  if (!a.labels.empty()) {
    for_each_jsonl(a.labels, [&](const nlohmann::json& j, std::size_t) {
      LabeledImage item;
      item.image_ref = j.at("image_ref").get<std::string>();
      auto mod = parse_modality(j.at("modality").get<std::string>());
      if (!mod) throw Error("unknown modality '" + j.at("modality").get<std::string>() + "'");
      item.modality = *mod;
      if (j.contains("condition") && !j["condition"].is_null()) item.condition = j["condition"].get<std::string>();
      std::optional<std::string> id;
      if (j.contains("id")) id = j["id"].get<std::string>();
      records.push_back(instantiate_open_qa(item, lib, a.seed, id));
    });
  }
  DatasetManifest manifest;
  try {
    manifest = DatasetManifest(std::move(records));
  } catch (const ManifestError& e) {
    throw Error("generated manifest is invalid: " + e.detail());
  }
  auto mout = open_out(a.out / "manifest.jsonl");
  write_manifest(mout, manifest);

  std::size_t prompts = 0;
  if (!a.reports.empty()) {
    Sanitizer sanitizer;
    AbbreviationExpander expander;
    auto pout = open_out(a.out / "rewrite_prompts.jsonl");
    for_each_jsonl(a.reports, [&](const nlohmann::json& j, std::size_t) {
      RawReport r;
      r.image_refs = j.value("image_refs", std::vector<std::string>{});
      auto mod = parse_modality(j.at("modality").get<std::string>());
      if (!mod) throw Error("unknown modality '" + j.at("modality").get<std::string>() + "'");
      r.modality = *mod;
      r.extracted_text = apply_transforms(j.at("text").get<std::string>(), {&sanitizer, &expander});
      nlohmann::ordered_json line;
      line["image_refs"] = r.image_refs;
      line["modality"] = to_string(r.modality);
      line["prompt"] = build_rewrite_prompt(r);
      pout << line.dump() << '\n';
      ++prompts;
    });
  }

  for (const auto& [tm, n] : manifest.counts_by())
    if (n) log << to_string(tm.task) << '\t' << to_string(tm.modality) << '\t' << n << '\n';
  log << "records: " << manifest.size() << ", rewrite prompts: " << prompts << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  fs::path manifest;
  std::vector<fs::path> predictions;
  std::optional<TaskKind> task;
  fs::path out = "out";
  std::size_t jobs = 4;
};

/// Metric values for one prediction against its record.
inline std::vector<RecordResult> score_prediction(const PredictionRecord& p, const VqaRecord& r) {
  std::vector<RecordResult> out;
  if (r.task == TaskKind::ClosedQA) {
    out.push_back({p.record_id, p.model_id, "accuracy", closed_accuracy(p.output_text, r) ? 100.0 : 0.0});
    return out;
  }
  auto cand = tokenize(p.output_text);
  auto ref = tokenize(r.reference_answer);
  for (const auto& v : {bleu(cand, ref, 1), bleu(cand, ref, 4), rouge_l(cand, ref), token_f1(cand, ref)})
    out.push_back({p.record_id, p.model_id, v.name, v.value});
  return out;
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& log) {
  auto manifest = load_manifest(a.manifest);
  auto preds = load_predictions(a.predictions);
  if (report_unresolved(manifest, preds, log)) return kValidationFailure;

  std::vector<const PredictionRecord*> selected;
  for (const auto& p : preds)
    if (!a.task || manifest.find(p.record_id)->task == *a.task) selected.push_back(&p);

  std::vector<std::vector<RecordResult>> per(selected.size());
  std::vector<std::string> errors(selected.size());
  parallel_for(selected.size(), a.jobs, [&](std::size_t i) {
    try {
      per[i] = score_prediction(*selected[i], *manifest.find(selected[i]->record_id));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<RecordResult> results;
  std::set<std::string> metrics;
  auto rout = open_out(a.out / "results.jsonl");
  auto eout = open_out(a.out / "errors.jsonl");
  std::size_t n_errors = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (!errors[i].empty()) {
      ++n_errors;
      eout << nlohmann::json{{"record_id", selected[i]->record_id}, {"model_id", selected[i]->model_id},
                             {"error", errors[i]}}.dump()
           << '\n';
      continue;
    }
    for (const auto& r : per[i]) {
      nlohmann::ordered_json j;
      j["record_id"] = r.record_id;
      j["model_id"] = r.model_id;
      j["metric"] = r.metric;
      j["value"] = r.value;
      rout << j.dump() << '\n';
      results.push_back(r);
      metrics.insert(r.metric);
    }
  }

  nlohmann::ordered_json tables;
  for (const auto& metric : metrics) {
    AggregateOptions opt;
    opt.metric = metric;
    auto t = aggregate(manifest, results, opt);
    write_table(t, a.out / metric_slug(metric));
    tables[metric] = t.to_json();
    log << "## " << metric << '\n';
    t.write_markdown(log);
  }
  auto tout = open_out(a.out / "tables.json");
  tout << tables.dump(2) << '\n';
  log << "scored " << selected.size() - n_errors << " predictions, " << n_errors << " errors\n";
  return n_errors ? kPartialResults : kOk;
}

// ---------------------------------------------------------------------------
// judge

struct JudgeArgs {
  fs::path manifest;
  std::vector<fs::path> predictions;
  fs::path findings;   // precomputed findings JSONL; skips judging
  bool offline = false;
  fs::path out = "out";
  std::size_t jobs = 4;
  JudgeSettings judge;
  CriterionWeights weights;
  const ChatTransport* transport = nullptr;  // overrides the HTTP transport
};

struct JudgedReport {
  const PredictionRecord* prediction = nullptr;
  const VqaRecord* record = nullptr;
  JudgeOutcome outcome;
};

inline std::map<std::pair<std::string, std::string>, JudgeFindings> load_findings(const fs::path& p) {
  std::map<std::pair<std::string, std::string>, JudgeFindings> out;
  for_each_jsonl(p, [&](const nlohmann::json& j, std::size_t) {
    auto key = std::make_pair(j.at("record_id").get<std::string>(), j.at("model_id").get<std::string>());
    out[key] = parse_judge_response(j.at("findings").dump());
  });
  return out;
}

inline int cmd_judge(const JudgeArgs& a, std::ostream& log) {
  a.weights.validate();
  auto manifest = load_manifest(a.manifest);
  auto preds = load_predictions(a.predictions);
  if (report_unresolved(manifest, preds, log)) return kValidationFailure;

  std::vector<JudgedReport> items;
  for (const auto& p : preds) {
    const auto* r = manifest.find(p.record_id);
    if (r->task == TaskKind::ReportGen) items.push_back({&p, r, {}});
  }
  if (items.empty()) {
    log << "error: no report-generation predictions to judge\n";
    return kValidationFailure;
  }

  int transport_calls = 0;
  if (!a.findings.empty()) {
    auto given = load_findings(a.findings);
    for (auto& it : items) {
      auto f = given.find({it.prediction->record_id, it.prediction->model_id});
      if (f == given.end())
        it.outcome.error = "no findings for this record/model";
      else
        it.outcome.findings = f->second;
    }
  } else if (a.offline) {
    for (auto& it : items) it.outcome.findings = rule_judge(it.prediction->output_text, it.record->reference_answer);
  } else {
    std::optional<HttpChatTransport> http;
    const ChatTransport* transport = a.transport;
    if (!transport) {
      http.emplace(HttpChatTransport::from_env(a.judge.endpoint, std::chrono::seconds(a.judge.timeout_s)));
      transport = &*http;
    }
    JudgeCache cache(a.judge.cache_dir.empty() ? a.out / "judge_cache" : fs::path(a.judge.cache_dir));
    JudgeOptions opt;
    opt.model = a.judge.model;
    opt.weights = a.weights;
    opt.max_parallel = a.judge.max_parallel;
    opt.retry_budget = a.judge.retry_budget;
    JudgeRunner runner(*transport, cache, opt);
    std::vector<JudgePair> pairs;
    for (const auto& it : items) pairs.push_back({it.prediction->output_text, it.record->reference_answer});
    auto outcomes = runner.judge_all(pairs, a.jobs);
    for (std::size_t i = 0; i < items.size(); ++i) {
      transport_calls += outcomes[i].transport_calls;
      items[i].outcome = std::move(outcomes[i]);
    }
  }

  std::vector<ScoredReport> scored;
  auto fout = open_out(a.out / "findings.jsonl");
  auto eout = open_out(a.out / "judge_errors.jsonl");
  std::size_t failures = 0;
  for (const auto& it : items) {
    if (!it.outcome.ok()) {
      ++failures;
      eout << nlohmann::json{{"record_id", it.prediction->record_id}, {"model_id", it.prediction->model_id},
                             {"error", it.outcome.error}}.dump()
           << '\n';
      continue;
    }
    ScoredReport s{it.prediction->record_id, it.prediction->model_id, it.record->modality, *it.outcome.findings,
                   score_report(*it.outcome.findings, a.weights)};
    nlohmann::ordered_json j;
    j["record_id"] = s.record_id;
    j["model_id"] = s.model_id;
    j["modality"] = to_string(s.modality);
    j["findings"] = nlohmann::ordered_json::parse(render_findings(s.findings));
    j["score"] = s.score.score;
    j["grade"] = to_string(s.score.grade);
    fout << j.dump() << '\n';
    scored.push_back(std::move(s));
  }

  if (!scored.empty()) {
    auto t = report_summary(scored);
    write_table(t, a.out / "report_scores");
    auto gout = open_out(a.out / "grades.json");
    gout << grade_distribution(scored).to_json().dump(2) << '\n';
    t.write_markdown(log);
  }
  log << "judged " << scored.size() << " reports, " << failures << " failures, " << transport_calls
      << " transport calls\n";
  return failures ? kPartialResults : kOk;
}

// ---------------------------------------------------------------------------
// aggregate (published cells)

struct AggregateCellsArgs {
  fs::path cells;  // CSV: model,source,column,value (or model,column,value)
  fs::path out;    // writes <out>/cells_table.{csv,md,json}; empty prints only
};

inline int cmd_aggregate_cells(const AggregateCellsArgs& a, std::ostream& log) {
  auto in = open_in(a.cells);
  MetricTable t = [&] {
    try {
      return table_from_cells_csv(in);
    } catch (const std::exception& e) {
      throw InputError(a.cells, 0, e.what());
    }
  }();
  if (!a.out.empty()) {
    write_table(t, a.out / "cells_table");
    auto j = open_out(a.out / "cells_table.json");
    j << t.to_json().dump(2) << '\n';
  }
  t.write_markdown(log);
  return kOk;
}

// ---------------------------------------------------------------------------
// validate

inline int cmd_validate(const fs::path& manifest_path, const std::vector<fs::path>& predictions, std::ostream& log) {
  DatasetManifest m;
  try {
    m = load_manifest(manifest_path);
  } catch (const InputError& e) {
    log << "invalid: " << e.what() << '\n';
    return kValidationFailure;
  }
  if (!predictions.empty()) {
    try {
      if (report_unresolved(m, load_predictions(predictions), log)) return kValidationFailure;
    } catch (const InputError& e) {
      log << "invalid: " << e.what() << '\n';
      return kValidationFailure;
    }
  }
  for (const auto& [tm, n] : m.counts_by())
    if (n) log << to_string(tm.task) << '\t' << to_string(tm.modality) << '\t' << n << '\n';
  log << "ok: " << m.size() << " records\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// review

struct ReviewSampleArgs {
  fs::path manifest;
  std::vector<std::string> reviewers;
  double rate = 0.10;
  std::uint64_t seed = kDefaultSeed;
  bool stratify = false;
  std::string batch_id = "batch";
  fs::path out;  // batch JSONL
  fs::path log_path;  // also registers the batch in this event log when set
};

inline int cmd_review_sample(const ReviewSampleArgs& a, std::ostream& log) {
  auto manifest = load_manifest(a.manifest);
  SampleOptions opt;
  opt.rate = a.rate;
  opt.seed = a.seed;
  opt.stratify_by_modality = a.stratify;
  opt.batch_id = a.batch_id;
  auto batch = sample_for_review(manifest, a.reviewers, opt);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_review_batch(out, batch);
  }
  if (!a.log_path.empty()) {
    EventLog events(a.log_path);
    ReviewService svc(events);
    svc.create_batch(make_batch_spec(batch, manifest));
  }
  for (const auto& [reviewer, n] : batch.load()) log << reviewer << '\t' << n << '\n';
  log << "sampled " << batch.sampled_ids.size() << " of " << manifest.size() << " records\n";
  return kOk;
}

struct ReviewSessionArgs {
  fs::path manifest;
  std::vector<fs::path> predictions;
  std::string session_id = "session";
  std::uint64_t seed = kDefaultSeed;
  fs::path log_path;
};

/// Registers a blinded ranking session over every record that has an
/// output from each model in the prediction files.
inline int cmd_review_session(const ReviewSessionArgs& a, std::ostream& log) {
  auto manifest = load_manifest(a.manifest);
  auto preds = load_predictions(a.predictions);
  if (report_unresolved(manifest, preds, log)) return kValidationFailure;
  ModelOutputs outputs;
  for (const auto& p : preds) outputs[p.model_id][p.record_id] = p.output_text;
  std::vector<RankingItem> items;
  std::size_t skipped = 0;
  for (const auto& r : manifest.records()) {
    bool complete = true, any = false;
    for (const auto& [_, by_id] : outputs) {
      bool has = by_id.count(r.id) > 0;
      complete = complete && has;
      any = any || has;
    }
    if (complete && any)
      items.push_back({r.id, r.question, r.image_ref});
    else if (any)
      ++skipped;
  }
  if (items.empty()) {
    log << "error: no record has an output from every model\n";
    return kValidationFailure;
  }
  EventLog events(a.log_path);
  ReviewService svc(events);
  svc.create_session(create_ranking_session(a.session_id, items, outputs, a.seed));
  log << "session " << a.session_id << ": " << items.size() << " items x " << outputs.size() << " models";
  if (skipped) log << " (" << skipped << " items skipped, outputs missing)";
  log << '\n';
  return kOk;
}

struct ReviewServeArgs {
  fs::path log_path;
  std::string addr = "127.0.0.1:8080";
  fs::path images;
  ReviewAuth auth;
};

inline std::pair<std::string, int> split_host_port(std::string_view addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) throw Error("serve address must be host:port, got '" + std::string(addr) + "'");
  std::string port(addr.substr(colon + 1));
  std::size_t used = 0;
  int p = -1;
  try {
    p = std::stoi(port, &used);
  } catch (const std::exception&) {
  }
  if (used != port.size() || p < 0 || p > 65535) throw Error("bad port in '" + std::string(addr) + "'");
  return {std::string(addr.substr(0, colon)), p};
}

/// Serves until stopped. `on_ready` runs on a helper thread once the
/// socket is listening and receives the bound port; port 0 picks one.
inline int cmd_review_serve(const ReviewServeArgs& a, std::ostream& log,
                            const std::function<void(ReviewHttpServer&, int)>& on_ready = {}) {
  if (a.auth.token_to_reviewer.empty()) throw Error("no reviewer tokens configured");
  EventLog events(a.log_path);
  ReviewService svc(events);
  ReviewHttpServer http(svc, a.auth);
  if (!a.images.empty() && !http.mount_images(a.images.string()))
    throw Error("cannot serve images from " + a.images.string());
  auto [host, port] = split_host_port(a.addr);
  if (port == 0) {
    port = http.bind_any_port(host);
    if (port < 0) throw Error("cannot bind " + host);
  } else if (!http.bind(host, port)) {
    throw Error("cannot bind " + a.addr + " (port in use?)");
  }
  log << "serving on " << host << ':' << port << " with " << events.events().size() << " logged events\n";
  std::thread helper;
  if (on_ready)
    helper = std::thread([&http, &on_ready, port = port] {
      http.wait_until_ready();
      on_ready(http, port);
    });
  http.listen_after_bind();
  if (helper.joinable()) helper.join();
  return kOk;
}

/// Preference tallies per session and item status per batch, as JSON.
inline nlohmann::json review_tally(const ReviewState& st) {
  nlohmann::json out{{"sessions", nlohmann::json::object()}, {"batches", nlohmann::json::object()}};
  for (const auto& [id, _] : st.sessions()) out["sessions"][id] = st.preference_tally(id);
  for (const auto& [id, b] : st.batches()) {
    nlohmann::json items = nlohmann::json::object();
    std::map<std::string, std::size_t> counts;
    for (const auto& [item, _] : b.spec.assignments) {
      auto status = std::string(to_string(st.item_status(id, item)));
      items[item] = status;
      ++counts[status];
    }
    out["batches"][id] = {{"items", items}, {"counts", counts}};
  }
  return out;
}

inline int cmd_review_tally(const fs::path& log_path, std::ostream& out) {
  auto state = ReviewState::replay(EventLog::read(log_path));
  out << review_tally(state).dump(2) << '\n';
  return kOk;
}

}  // namespace ophvqa::cli
