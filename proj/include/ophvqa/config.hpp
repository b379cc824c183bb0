#pragma once

// Run configuration: an INI file plus environment overrides for secrets.
//
//   [run]        seed, jobs, out
//   [judge]      endpoint, model, max_parallel, retry_budget, cache_dir, timeout_s
//   [weights]    a..i
//   [review]     addr, log, images
//   [tokens]     <bearer token> = <reviewer id>
//   [privileged] <reviewer id> = true
//
// OPHVQA_JUDGE_ENDPOINT and OPHVQA_JUDGE_API_KEY override the judge
// section; OPHVQA_REVIEW_TOKENS ("tok=rev,tok2=rev2") adds tokens.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ophvqa/common.hpp"
#include "ophvqa/judge.hpp"
#include "ophvqa/review_http.hpp"

namespace ophvqa {

inline constexpr std::uint64_t kDefaultSeed = 20250101;

struct JudgeSettings {
  std::string endpoint;
  std::string api_key;
  std::string model = "gpt-4";
  std::size_t max_parallel = 4;
  int retry_budget = 2;
  std::string cache_dir;
  int timeout_s = 60;
};

struct RunConfig {
  std::uint64_t seed = kDefaultSeed;
  std::size_t jobs = 4;
  std::string out = "out";
  JudgeSettings judge;
  CriterionWeights weights;
  std::string review_addr = "127.0.0.1:8080";
  std::string review_log = "review_events.jsonl";
  std::string review_images;
  ReviewAuth auth;
};

/// Applies "a=1,d=8" style overrides to `w`.
inline void apply_weight_overrides(CriterionWeights& w, std::string_view spec) {
  for (const auto& part : split(spec, ',')) {
    auto item = trim(part);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos || eq != 1)
      throw Error("weight override '" + std::string(item) + "' must look like d=6");
    char letter = static_cast<char>(std::tolower(static_cast<unsigned char>(item[0])));
    if (letter < 'a' || letter > 'i') throw Error("weight override '" + std::string(item) + "' names no criterion A..I");
    auto value = std::string(trim(item.substr(eq + 1)));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw Error("weight override '" + std::string(item) + "' is not a number");
    w.at(static_cast<Criterion>(letter - 'a')) = v;
  }
  w.validate();
}

namespace detail {

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

inline void add_tokens(ReviewAuth& auth, std::string_view spec) {
  for (const auto& part : split(spec, ',')) {
    auto item = trim(part);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw Error("token entry '" + std::string(item) + "' must be token=reviewer");
    auth.token_to_reviewer[std::string(trim(item.substr(0, eq)))] = std::string(trim(item.substr(eq + 1)));
  }
}

}  // namespace detail

inline RunConfig load_config(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  RunConfig c;
  if (!path.empty()) {
    pt::ptree tree;
    try {
      pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error("config " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    try {
      c.seed = tree.get("run.seed", c.seed);
      c.jobs = tree.get("run.jobs", c.jobs);
      c.out = tree.get("run.out", c.out);
      c.judge.endpoint = tree.get("judge.endpoint", c.judge.endpoint);
      c.judge.model = tree.get("judge.model", c.judge.model);
      c.judge.max_parallel = tree.get("judge.max_parallel", c.judge.max_parallel);
      c.judge.retry_budget = tree.get("judge.retry_budget", c.judge.retry_budget);
      c.judge.cache_dir = tree.get("judge.cache_dir", c.judge.cache_dir);
      c.judge.timeout_s = tree.get("judge.timeout_s", c.judge.timeout_s);
      c.review_addr = tree.get("review.addr", c.review_addr);
      c.review_log = tree.get("review.log", c.review_log);
      c.review_images = tree.get("review.images", c.review_images);
    } catch (const pt::ptree_bad_data& e) {
      throw Error("config " + path.string() + ": " + e.what());
    }
    if (auto w = tree.get_child_optional("weights")) {
      std::string spec;
      for (const auto& [k, v] : *w) spec += k + "=" + v.data() + ",";
      apply_weight_overrides(c.weights, spec);
    }
    if (auto t = tree.get_child_optional("tokens"))
      for (const auto& [token, reviewer] : *t) c.auth.token_to_reviewer[token] = reviewer.data();
    if (auto p = tree.get_child_optional("privileged"))
      for (const auto& [reviewer, flag] : *p)
        if (flag.get_value<bool>(false)) c.auth.privileged_reviewers.insert(reviewer);
  }
  if (auto v = detail::env("OPHVQA_JUDGE_ENDPOINT")) c.judge.endpoint = *v;
  if (auto v = detail::env("OPHVQA_JUDGE_API_KEY")) c.judge.api_key = *v;
  if (auto v = detail::env("OPHVQA_REVIEW_TOKENS")) detail::add_tokens(c.auth, *v);
  if (c.jobs < 1) throw Error("jobs must be >= 1");
  return c;
}

}  // namespace ophvqa
