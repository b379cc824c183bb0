// ophvqa: build, evaluate, judge, aggregate and review ophthalmic VQA data.
//
//   ophvqa build     --labels labels.jsonl [--reports raw.jsonl] [--records closed.jsonl] --out dir
//   ophvqa validate  --manifest m.jsonl [--predictions p.jsonl]
//   ophvqa evaluate  --manifest m.jsonl --predictions p.jsonl [--task closed_qa] --out dir
//   ophvqa judge     --manifest m.jsonl --predictions p.jsonl (--offline-judge | --endpoint URL) --out dir
//   ophvqa aggregate --cells table.csv [--out dir]
//   ophvqa review sample|session|serve|tally ...
//
// Exit codes: 0 success, 1 validation failure, 2 partial results.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ophvqa/cli.hpp"
#include "ophvqa/config.hpp"

namespace {

using namespace ophvqa;
using namespace ophvqa::cli;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string out;
  std::string weights;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "INI config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.weights.empty()) apply_weight_overrides(cfg.weights, c.weights);
  return cfg;
}

std::vector<fs::path> paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::optional<TaskKind> task_filter(const std::string& s) {
  if (s.empty()) return std::nullopt;
  auto t = parse_task(s);
  if (!t) throw Error("unknown task '" + s + "'");
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ophthalmic VQA benchmark toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string manifest, task, labels, reports, records, templates, findings, cells, endpoint, serve_addr,
      log_path, session_id = "session", batch_id = "batch", batch_out, images;
  std::vector<std::string> predictions, reviewers;
  bool offline = false, stratify = false;
  double rate = 0.10;

  auto* build = app.add_subcommand("build", "generate a manifest from labelled images and reports");
  add_common(build, common);
  build->add_option("--labels", labels, "labelled images JSONL")->check(CLI::ExistingFile);
  build->add_option("--reports", reports, "raw reports JSONL")->check(CLI::ExistingFile);
  build->add_option("--records", records, "existing records to merge")->check(CLI::ExistingFile);
  build->add_option("--templates", templates, "template library JSON")->check(CLI::ExistingFile);

  auto* validate = app.add_subcommand("validate", "check a manifest and optional predictions");
  validate->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
  validate->add_option("--predictions", predictions, "prediction JSONL files")->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "score predictions and aggregate tables");
  add_common(evaluate, common);
  evaluate->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--predictions", predictions, "prediction JSONL files")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--task", task, "closed_qa, open_qa or report_gen");

  auto* judge = app.add_subcommand("judge", "score generated reports with the ten-criteria judge");
  add_common(judge, common);
  judge->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
  judge->add_option("--predictions", predictions, "prediction JSONL files")->required()->check(CLI::ExistingFile);
  judge->add_flag("--offline-judge", offline, "use the deterministic rule judge");
  judge->add_option("--endpoint", endpoint, "chat-completions URL");
  judge->add_option("--findings", findings, "precomputed findings JSONL")->check(CLI::ExistingFile);
  judge->add_option("--weights", common.weights, "criterion weight overrides, e.g. d=8,i=20");

  auto* agg = app.add_subcommand("aggregate", "average a table of published cells");
  agg->add_option("--cells", cells, "cells CSV")->required()->check(CLI::ExistingFile);
  agg->add_option("--out", common.out, "output directory");

  auto* review = app.add_subcommand("review", "expert review workflows");
  review->require_subcommand(1);
  auto* sample = review->add_subcommand("sample", "draw a review batch");
  add_common(sample, common);
  sample->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
  sample->add_option("--reviewers", reviewers, "reviewer ids")->required()->delimiter(',');
  sample->add_option("--rate", rate, "sampling rate in (0, 1]");
  sample->add_flag("--stratify", stratify, "allocate the sample per modality");
  sample->add_option("--batch-id", batch_id, "batch id");
  sample->add_option("--batch-out", batch_out, "batch JSONL to write");
  sample->add_option("--log", log_path, "event log to register the batch in");

  auto* session = review->add_subcommand("session", "create a blinded ranking session");
  add_common(session, common);
  session->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
  session->add_option("--predictions", predictions, "prediction JSONL files")->required()->check(CLI::ExistingFile);
  session->add_option("--session-id", session_id, "session id");
  session->add_option("--log", log_path, "event log");

  auto* serve = review->add_subcommand("serve", "serve the review API");
  add_common(serve, common);
  serve->add_option("--serve-addr", serve_addr, "host:port");
  serve->add_option("--log", log_path, "event log");
  serve->add_option("--images", images, "directory served at /images")->check(CLI::ExistingDirectory);

  auto* tally = review->add_subcommand("tally", "print preference tallies and item states");
  add_common(tally, common);
  tally->add_option("--log", log_path, "event log");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) {
      auto cfg = resolve(common);
      return cmd_build({labels, reports, records, templates, cfg.seed, cfg.out}, std::cout);
    }
    if (validate->parsed()) return cmd_validate(manifest, paths(predictions), std::cout);
    if (evaluate->parsed()) {
      auto cfg = resolve(common);
      return cmd_evaluate({manifest, paths(predictions), task_filter(task), cfg.out, cfg.jobs}, std::cout);
    }
    if (judge->parsed()) {
      auto cfg = resolve(common);
      if (!endpoint.empty()) cfg.judge.endpoint = endpoint;
      JudgeArgs a;
      a.manifest = manifest;
      a.predictions = paths(predictions);
      a.findings = findings;
      a.offline = offline;
      a.out = cfg.out;
      a.jobs = cfg.jobs;
      a.judge = cfg.judge;
      a.weights = cfg.weights;
      return cmd_judge(a, std::cout);
    }
    if (agg->parsed()) return cmd_aggregate_cells({cells, common.out}, std::cout);
    if (sample->parsed()) {
      auto cfg = resolve(common);
      ReviewSampleArgs a;
      a.manifest = manifest;
      a.reviewers = reviewers;
      a.rate = rate;
      a.seed = cfg.seed;
      a.stratify = stratify;
      a.batch_id = batch_id;
      a.out = batch_out.empty() ? fs::path(cfg.out) / (batch_id + ".jsonl") : fs::path(batch_out);
      a.log_path = log_path;
      return cmd_review_sample(a, std::cout);
    }
    if (session->parsed()) {
      auto cfg = resolve(common);
      return cmd_review_session(
          {manifest, paths(predictions), session_id, cfg.seed, log_path.empty() ? cfg.review_log : log_path},
          std::cout);
    }
    if (serve->parsed()) {
      auto cfg = resolve(common);
      ReviewServeArgs a;
      a.log_path = log_path.empty() ? cfg.review_log : log_path;
      a.addr = serve_addr.empty() ? cfg.review_addr : serve_addr;
      a.images = images.empty() ? cfg.review_images : images;
      a.auth = cfg.auth;
      return cmd_review_serve(a, std::cout);
    }
    if (tally->parsed()) {
      auto cfg = resolve(common);
      return cmd_review_tally(log_path.empty() ? cfg.review_log : log_path, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
  return kOk;
}
