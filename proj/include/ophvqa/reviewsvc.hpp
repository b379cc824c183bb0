#pragma once

// Blinded ranking sessions and two-reviewer data review, backed by an
// append-only JSONL event log. Service state is a pure fold over the log.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ophvqa/common.hpp"
#include "ophvqa/dataengine.hpp"

namespace ophvqa {

enum class ReviewErrorCode {
  UnknownSession,
  UnknownBatch,
  UnknownItem,
  NotPermutation,
  AlreadySubmitted,
  NotAssigned,
  AlreadyExists,
  BadRequest,
};

class ReviewError : public Error {
 public:
  ReviewError(ReviewErrorCode code, const std::string& what) : Error(what), code_(code) {}
  ReviewErrorCode code() const { return code_; }

 private:
  ReviewErrorCode code_;
};

// ---------------------------------------------------------------------------
// Sessions

inline std::string blind_label(std::size_t index) { return "Candidate " + std::to_string(index + 1); }

struct BlindCandidate {
  std::string label;
  std::string report;
  bool operator==(const BlindCandidate&) const = default;
};

struct SessionItem {
  std::string item_id;
  std::string question;
  std::string image_ref;
  std::vector<BlindCandidate> candidates;  // in label order
  std::map<std::string, std::string> label_to_model;  // server side only
  bool operator==(const SessionItem&) const = default;

  bool has_label(const std::string& l) const { return label_to_model.count(l) > 0; }
};

struct RankingSession {
  std::string session_id;
  std::uint64_t seed = 0;
  std::vector<std::string> item_ids;
  std::map<std::string, SessionItem> items;
  bool operator==(const RankingSession&) const = default;
};

/// Context shown with an item; the report itself comes from each model.
struct RankingItem {
  std::string item_id;
  std::string question;
  std::string image_ref;
};

/// model_id -> item_id -> report text
using ModelOutputs = std::map<std::string, std::map<std::string, std::string>>;

/// Assigns "Candidate 1..K" per item through a permutation seeded by
/// (seed, item_id). Models are ordered by id before shuffling, so the
/// result depends only on the inputs.
inline RankingSession create_ranking_session(std::string session_id, const std::vector<RankingItem>& items,
                                             const ModelOutputs& outputs, std::uint64_t seed) {
  if (session_id.empty()) throw ReviewError(ReviewErrorCode::BadRequest, "session id is empty");
  if (outputs.empty()) throw ReviewError(ReviewErrorCode::BadRequest, "no model outputs");
  RankingSession s;
  s.session_id = std::move(session_id);
  s.seed = seed;
  for (const auto& it : items) {
    if (s.items.count(it.item_id))
      throw ReviewError(ReviewErrorCode::BadRequest, "duplicate item '" + it.item_id + "'");
    std::vector<std::string> models;
    for (const auto& [model, by_item] : outputs) {
      if (!by_item.count(it.item_id))
        throw ReviewError(ReviewErrorCode::BadRequest,
                          "missing output of model '" + model + "' for item '" + it.item_id + "'");
      models.push_back(model);
    }
    SeededRng rng(StableHash().add(seed).add(it.item_id).value());
    rng.shuffle(std::span<std::string>(models));
    SessionItem si{it.item_id, it.question, it.image_ref, {}, {}};
    for (std::size_t i = 0; i < models.size(); ++i) {
      si.candidates.push_back({blind_label(i), outputs.at(models[i]).at(it.item_id)});
      si.label_to_model[blind_label(i)] = models[i];
    }
    s.item_ids.push_back(it.item_id);
    s.items.emplace(it.item_id, std::move(si));
  }
  return s;
}

inline nlohmann::json session_to_json(const RankingSession& s) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& id : s.item_ids) {
    const auto& it = s.items.at(id);
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : it.candidates)
      cands.push_back({{"label", c.label}, {"report", c.report}, {"model_id", it.label_to_model.at(c.label)}});
    items.push_back({{"item_id", it.item_id}, {"question", it.question}, {"image_ref", it.image_ref},
                     {"candidates", cands}});
  }
  return {{"session_id", s.session_id}, {"seed", s.seed}, {"items", items}};
}

inline RankingSession session_from_json(const nlohmann::json& j) {
  RankingSession s;
  s.session_id = j.at("session_id").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& ij : j.at("items")) {
    SessionItem it;
    it.item_id = ij.at("item_id").get<std::string>();
    it.question = ij.value("question", "");
    it.image_ref = ij.value("image_ref", "");
    for (const auto& c : ij.at("candidates")) {
      it.candidates.push_back({c.at("label").get<std::string>(), c.at("report").get<std::string>()});
      it.label_to_model[c.at("label").get<std::string>()] = c.at("model_id").get<std::string>();
    }
    s.item_ids.push_back(it.item_id);
    s.items.emplace(it.item_id, std::move(it));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Review batches

/// What a reviewer checks for one sampled record.
struct BatchItem {
  std::string item_id;
  std::string question;
  std::string answer;
  std::string image_ref;
  bool operator==(const BatchItem&) const = default;
};

struct ReviewBatchSpec {
  std::string batch_id;
  std::map<std::string, std::pair<std::string, std::string>> assignments;
  std::map<std::string, BatchItem> items;
  bool operator==(const ReviewBatchSpec&) const = default;
};

inline ReviewBatchSpec make_batch_spec(const ReviewBatch& batch, const DatasetManifest& manifest) {
  ReviewBatchSpec spec{batch.batch_id, batch.assignments, {}};
  for (const auto& id : batch.sampled_ids) {
    const auto* r = manifest.find(id);
    if (!r) throw ReviewError(ReviewErrorCode::UnknownItem, "batch item '" + id + "' not in manifest");
    spec.items[id] = {id, r->question, r->reference_answer, r->image_ref};
  }
  return spec;
}

inline nlohmann::json batch_spec_to_json(const ReviewBatchSpec& b) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& [id, it] : b.items) {
    const auto& [r1, r2] = b.assignments.at(id);
    items.push_back({{"item_id", id}, {"question", it.question}, {"answer", it.answer},
                     {"image_ref", it.image_ref}, {"reviewers", {r1, r2}}});
  }
  return {{"batch_id", b.batch_id}, {"items", items}};
}

inline ReviewBatchSpec batch_spec_from_json(const nlohmann::json& j) {
  ReviewBatchSpec b;
  b.batch_id = j.at("batch_id").get<std::string>();
  for (const auto& ij : j.at("items")) {
    auto id = ij.at("item_id").get<std::string>();
    auto rv = ij.at("reviewers").get<std::vector<std::string>>();
    if (rv.size() != 2 || rv[0] == rv[1])
      throw ReviewError(ReviewErrorCode::BadRequest, "item '" + id + "' needs two distinct reviewers");
    b.assignments[id] = {rv[0], rv[1]};
    b.items[id] = {id, ij.value("question", ""), ij.value("answer", ""), ij.value("image_ref", "")};
  }
  return b;
}

// ---------------------------------------------------------------------------
// Events

enum class EventKind { SessionCreated, BatchCreated, Approve, Reject, Edit, Ranking };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::SessionCreated: return "session_created";
    case EventKind::BatchCreated: return "batch_created";
    case EventKind::Approve: return "approve";
    case EventKind::Reject: return "reject";
    case EventKind::Edit: return "edit";
    case EventKind::Ranking: return "ranking";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::SessionCreated, EventKind::BatchCreated, EventKind::Approve, EventKind::Reject,
                 EventKind::Edit, EventKind::Ranking})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct ReviewEvent {
  std::uint64_t event_id = 0;
  EventKind kind = EventKind::Approve;
  std::string scope_id;  // session id or batch id
  std::string item_id;
  std::string reviewer_id;
  nlohmann::json payload;  // edit text, label order, or the created session/batch
  std::int64_t timestamp_ms = 0;
  bool operator==(const ReviewEvent&) const = default;
};

inline nlohmann::json to_json(const ReviewEvent& e) {
  nlohmann::ordered_json j;
  j["event_id"] = e.event_id;
  j["kind"] = to_string(e.kind);
  j["scope_id"] = e.scope_id;
  j["item_id"] = e.item_id;
  j["reviewer_id"] = e.reviewer_id;
  j["payload"] = e.payload;
  j["timestamp_ms"] = e.timestamp_ms;
  return nlohmann::json(j);
}

inline ReviewEvent event_from_json(const nlohmann::json& j) {
  ReviewEvent e;
  e.event_id = j.at("event_id").get<std::uint64_t>();
  auto k = parse_event_kind(j.at("kind").get<std::string>());
  if (!k) throw Error("unknown event kind '" + j.at("kind").get<std::string>() + "'");
  e.kind = *k;
  e.scope_id = j.at("scope_id").get<std::string>();
  e.item_id = j.value("item_id", "");
  e.reviewer_id = j.value("reviewer_id", "");
  e.payload = j.value("payload", nlohmann::json());
  e.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  return e;
}

// ---------------------------------------------------------------------------
// State

enum class ItemStatus { Pending, Accepted, Rejected };

inline std::string_view to_string(ItemStatus s) {
  switch (s) {
    case ItemStatus::Pending: return "pending";
    case ItemStatus::Accepted: return "accepted";
    case ItemStatus::Rejected: return "rejected";
  }
  return "?";
}

struct Decision {
  EventKind kind = EventKind::Approve;
  std::string edited_text;
  std::uint64_t event_id = 0;
  bool operator==(const Decision&) const = default;
};

struct BatchState {
  ReviewBatchSpec spec;
  std::map<std::string, std::map<std::string, Decision>> decisions;  // item -> reviewer -> decision
  bool operator==(const BatchState&) const = default;
};

struct SessionState {
  RankingSession session;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> rankings;  // item -> reviewer -> order
  bool operator==(const SessionState&) const = default;
};

/// Everything the service knows, rebuilt purely from events.
class ReviewState {
 public:
  bool operator==(const ReviewState&) const = default;

  std::uint64_t last_event_id() const { return last_event_id_; }
  const std::map<std::string, SessionState>& sessions() const { return sessions_; }
  const std::map<std::string, BatchState>& batches() const { return batches_; }

  const SessionState& session(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ReviewError(ReviewErrorCode::UnknownSession, "unknown session '" + id + "'");
    return it->second;
  }
  const BatchState& batch(const std::string& id) const {
    auto it = batches_.find(id);
    if (it == batches_.end()) throw ReviewError(ReviewErrorCode::UnknownBatch, "unknown batch '" + id + "'");
    return it->second;
  }

  /// Throws the error the event would cause, without changing state.
  void check(const ReviewEvent& e) const {
    if (e.event_id <= last_event_id_)
      throw ReviewError(ReviewErrorCode::BadRequest, "event ids must increase");
    if (e.kind != EventKind::SessionCreated && e.kind != EventKind::BatchCreated && e.reviewer_id.empty())
      throw ReviewError(ReviewErrorCode::BadRequest, "reviewer id is empty");
    switch (e.kind) {
      case EventKind::SessionCreated:
        if (sessions_.count(e.scope_id))
          throw ReviewError(ReviewErrorCode::AlreadyExists, "session '" + e.scope_id + "' exists");
        if (session_from_json(e.payload).session_id != e.scope_id)
          throw ReviewError(ReviewErrorCode::BadRequest, "session payload id mismatch");
        return;
      case EventKind::BatchCreated:
        if (batches_.count(e.scope_id))
          throw ReviewError(ReviewErrorCode::AlreadyExists, "batch '" + e.scope_id + "' exists");
        if (batch_spec_from_json(e.payload).batch_id != e.scope_id)
          throw ReviewError(ReviewErrorCode::BadRequest, "batch payload id mismatch");
        return;
      case EventKind::Ranking: {
        const auto& s = session(e.scope_id);
        auto it = s.session.items.find(e.item_id);
        if (it == s.session.items.end())
          throw ReviewError(ReviewErrorCode::UnknownItem, "unknown item '" + e.item_id + "'");
        check_permutation(it->second, e.payload);
        auto r = s.rankings.find(e.item_id);
        if (r != s.rankings.end() && r->second.count(e.reviewer_id))
          throw ReviewError(ReviewErrorCode::AlreadySubmitted, "already submitted");
        return;
      }
      case EventKind::Approve:
      case EventKind::Reject:
      case EventKind::Edit: {
        const auto& b = batch(e.scope_id);
        auto a = b.spec.assignments.find(e.item_id);
        if (a == b.spec.assignments.end())
          throw ReviewError(ReviewErrorCode::UnknownItem, "unknown item '" + e.item_id + "'");
        if (a->second.first != e.reviewer_id && a->second.second != e.reviewer_id)
          throw ReviewError(ReviewErrorCode::NotAssigned, "reviewer not assigned to item");
        if (e.kind == EventKind::Edit && (!e.payload.is_string() || trim(e.payload.get<std::string>()).empty()))
          throw ReviewError(ReviewErrorCode::BadRequest, "edit needs the replacement text");
        auto d = b.decisions.find(e.item_id);
        if (d != b.decisions.end() && d->second.count(e.reviewer_id))
          throw ReviewError(ReviewErrorCode::AlreadySubmitted, "already submitted");
        return;
      }
    }
  }

  void apply(const ReviewEvent& e) {
    check(e);
    switch (e.kind) {
      case EventKind::SessionCreated: {
        auto s = session_from_json(e.payload);
        auto id = s.session_id;
        sessions_[id] = SessionState{std::move(s), {}};
        break;
      }
      case EventKind::BatchCreated: {
        auto b = batch_spec_from_json(e.payload);
        auto id = b.batch_id;
        batches_[id] = BatchState{std::move(b), {}};
        break;
      }
      case EventKind::Ranking:
        sessions_[e.scope_id].rankings[e.item_id][e.reviewer_id] = e.payload.get<std::vector<std::string>>();
        break;
      case EventKind::Approve:
      case EventKind::Reject:
      case EventKind::Edit:
        batches_[e.scope_id].decisions[e.item_id][e.reviewer_id] =
            Decision{e.kind, e.kind == EventKind::Edit ? e.payload.get<std::string>() : "", e.event_id};
        break;
    }
    last_event_id_ = e.event_id;
  }

  static ReviewState replay(const std::vector<ReviewEvent>& events) {
    ReviewState s;
    for (const auto& e : events) s.apply(e);
    return s;
  }

  /// Any reject rejects; both assigned reviewers approving or editing
  /// accepts; otherwise pending.
  ItemStatus item_status(const std::string& batch_id, const std::string& item_id) const {
    const auto& b = batch(batch_id);
    if (!b.spec.assignments.count(item_id))
      throw ReviewError(ReviewErrorCode::UnknownItem, "unknown item '" + item_id + "'");
    auto d = b.decisions.find(item_id);
    if (d == b.decisions.end()) return ItemStatus::Pending;
    for (const auto& [_, dec] : d->second)
      if (dec.kind == EventKind::Reject) return ItemStatus::Rejected;
    return d->second.size() == 2 ? ItemStatus::Accepted : ItemStatus::Pending;
  }

  /// Final answer of an accepted item: the latest edit, else the original.
  std::optional<std::string> accepted_answer(const std::string& batch_id, const std::string& item_id) const {
    if (item_status(batch_id, item_id) != ItemStatus::Accepted) return std::nullopt;
    const auto& b = batch(batch_id);
    const Decision* latest_edit = nullptr;
    for (const auto& [_, dec] : b.decisions.at(item_id))
      if (dec.kind == EventKind::Edit && (!latest_edit || dec.event_id > latest_edit->event_id)) latest_edit = &dec;
    return latest_edit ? latest_edit->edited_text : b.spec.items.at(item_id).answer;
  }

  /// De-blinded count of first places per model across all rankings.
  std::map<std::string, std::size_t> preference_tally(const std::string& session_id) const {
    const auto& s = session(session_id);
    std::map<std::string, std::size_t> tally;
    for (const auto& [item, by_reviewer] : s.rankings)
      for (const auto& [_, order] : by_reviewer)
        ++tally[s.session.items.at(item).label_to_model.at(order.front())];
    return tally;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"last_event_id", last_event_id_}, {"sessions", nlohmann::json::object()},
                        {"batches", nlohmann::json::object()}};
    for (const auto& [id, s] : sessions_) j["sessions"][id] = {{"session", session_to_json(s.session)},
                                                               {"rankings", s.rankings}};
    for (const auto& [id, b] : batches_) {
      nlohmann::json dec = nlohmann::json::object();
      for (const auto& [item, by_rev] : b.decisions)
        for (const auto& [rev, d] : by_rev)
          dec[item][rev] = {{"kind", to_string(d.kind)}, {"edited_text", d.edited_text}, {"event_id", d.event_id}};
      j["batches"][id] = {{"spec", batch_spec_to_json(b.spec)}, {"decisions", dec}};
    }
    return j;
  }

 private:
  static void check_permutation(const SessionItem& item, const nlohmann::json& payload) {
    if (!payload.is_array()) throw ReviewError(ReviewErrorCode::NotPermutation, "not a permutation");
    std::set<std::string> seen;
    for (const auto& l : payload) {
      if (!l.is_string() || !item.has_label(l.get<std::string>()) || !seen.insert(l.get<std::string>()).second)
        throw ReviewError(ReviewErrorCode::NotPermutation, "not a permutation");
    }
    if (seen.size() != item.candidates.size())
      throw ReviewError(ReviewErrorCode::NotPermutation, "not a permutation");
  }

  std::uint64_t last_event_id_ = 0;
  std::map<std::string, SessionState> sessions_;
  std::map<std::string, BatchState> batches_;
};

// ---------------------------------------------------------------------------
// Event log

/// Append-only JSONL store. An empty path keeps events in memory.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path = {}) : path_(std::move(path)) {
    if (path_.empty()) return;
    if (std::filesystem::exists(path_)) events_ = read(path_);
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw Error("cannot open event log " + path_.string());
  }

  static std::vector<ReviewEvent> read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read event log " + path.string());
    std::vector<ReviewEvent> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        out.push_back(event_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw ManifestError(lineno, std::string("bad event: ") + e.what());
      }
      if (out.size() > 1 && out.back().event_id <= out[out.size() - 2].event_id)
        throw ManifestError(lineno, "event ids must strictly increase");
    }
    return out;
  }

  std::uint64_t last_id() const {
    std::lock_guard lk(mu_);
    return events_.empty() ? 0 : events_.back().event_id;
  }

  /// Writes the event; its id must exceed every earlier id.
  void append(const ReviewEvent& e) {
    std::lock_guard lk(mu_);
    if (!events_.empty() && e.event_id <= events_.back().event_id)
      throw Error("event ids must strictly increase");
    if (out_.is_open()) {
      out_ << to_json(e).dump() << '\n';
      out_.flush();
      if (!out_) throw Error("event log write failed");
    }
    events_.push_back(e);
  }

  std::vector<ReviewEvent> events() const {
    std::lock_guard lk(mu_);
    return events_;
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::vector<ReviewEvent> events_;
};

// ---------------------------------------------------------------------------
// Service

/// Serialises writes (validate, append, apply) and lets reads run in
/// parallel with each other.
class ReviewService {
 public:
  using Clock = std::function<std::int64_t()>;

  explicit ReviewService(EventLog& log, Clock clock = system_clock_ms)
      : log_(log), clock_(std::move(clock)), state_(ReviewState::replay(log.events())) {}

  static std::int64_t system_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  ReviewEvent create_session(const RankingSession& s) {
    return write(EventKind::SessionCreated, s.session_id, "", "", session_to_json(s));
  }
  ReviewEvent create_batch(const ReviewBatchSpec& b) {
    return write(EventKind::BatchCreated, b.batch_id, "", "", batch_spec_to_json(b));
  }
  ReviewEvent submit_ranking(const std::string& session_id, const std::string& item_id,
                             const std::string& reviewer_id, const std::vector<std::string>& order) {
    return write(EventKind::Ranking, session_id, item_id, reviewer_id, order);
  }
  ReviewEvent submit_decision(const std::string& batch_id, const std::string& item_id,
                              const std::string& reviewer_id, EventKind kind, const std::string& payload = {}) {
    if (kind != EventKind::Approve && kind != EventKind::Reject && kind != EventKind::Edit)
      throw ReviewError(ReviewErrorCode::BadRequest, "decision must be approve, reject or edit");
    return write(kind, batch_id, item_id, reviewer_id,
                 kind == EventKind::Edit ? nlohmann::json(payload) : nlohmann::json());
  }

  /// Runs `fn` against a consistent snapshot under a shared lock.
  template <typename Fn>
  auto read(Fn&& fn) const {
    std::shared_lock lk(mu_);
    return fn(state_);
  }

  ReviewState snapshot() const {
    std::shared_lock lk(mu_);
    return state_;
  }

  // Client-facing views. None of them carries model ids.

  nlohmann::json session_view(const std::string& session_id) const {
    return read([&](const ReviewState& st) {
      const auto& s = st.session(session_id);
      nlohmann::json items = nlohmann::json::array();
      for (const auto& id : s.session.item_ids)
        items.push_back({{"item_id", id}, {"candidate_count", s.session.items.at(id).candidates.size()}});
      return nlohmann::json{{"session_id", session_id}, {"items", items}};
    });
  }

  nlohmann::json item_view(const std::string& session_id, const std::string& item_id,
                           const std::string& reviewer_id = {}) const {
    return read([&](const ReviewState& st) {
      const auto& s = st.session(session_id);
      auto it = s.session.items.find(item_id);
      if (it == s.session.items.end())
        throw ReviewError(ReviewErrorCode::UnknownItem, "unknown item '" + item_id + "'");
      nlohmann::json cands = nlohmann::json::array();
      for (const auto& c : it->second.candidates) cands.push_back({{"label", c.label}, {"report", c.report}});
      bool submitted = false;
      if (auto r = s.rankings.find(item_id); r != s.rankings.end()) submitted = r->second.count(reviewer_id) > 0;
      return nlohmann::json{{"session_id", session_id},
                            {"item_id", item_id},
                            {"question", it->second.question},
                            {"image_ref", it->second.image_ref},
                            {"candidates", cands},
                            {"submitted", submitted}};
    });
  }

  nlohmann::json review_queue(const std::string& batch_id, const std::string& reviewer_id) const {
    return read([&](const ReviewState& st) {
      const auto& b = st.batch(batch_id);
      nlohmann::json items = nlohmann::json::array();
      for (const auto& [id, pair] : b.spec.assignments) {
        if (pair.first != reviewer_id && pair.second != reviewer_id) continue;
        const auto& it = b.spec.items.at(id);
        bool decided = false;
        if (auto d = b.decisions.find(id); d != b.decisions.end()) decided = d->second.count(reviewer_id) > 0;
        items.push_back({{"item_id", id}, {"question", it.question}, {"answer", it.answer},
                         {"image_ref", it.image_ref}, {"round", pair.first == reviewer_id ? 1 : 2},
                         {"decided", decided}});
      }
      return nlohmann::json{{"batch_id", batch_id}, {"reviewer_id", reviewer_id}, {"items", items}};
    });
  }

  std::map<std::string, std::size_t> preference_tally(const std::string& session_id) const {
    return read([&](const ReviewState& st) { return st.preference_tally(session_id); });
  }

  ItemStatus item_status(const std::string& batch_id, const std::string& item_id) const {
    return read([&](const ReviewState& st) { return st.item_status(batch_id, item_id); });
  }

 private:
  ReviewEvent write(EventKind kind, const std::string& scope, const std::string& item,
                    const std::string& reviewer, nlohmann::json payload) {
    std::unique_lock lk(mu_);
    ReviewEvent e{state_.last_event_id() + 1, kind, scope, item, reviewer, std::move(payload), clock_()};
    state_.check(e);
    log_.append(e);
    state_.apply(e);
    return e;
  }

  EventLog& log_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  ReviewState state_;
};

}  // namespace ophvqa
