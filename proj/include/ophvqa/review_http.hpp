#pragma once

// HTTP JSON front end for ReviewService.
//
//   GET  /sessions/{id}                       blinded session overview
//   GET  /sessions/{id}/items/{iid}           blinded candidates for one item
//   POST /sessions/{id}/items/{iid}/ranking   {"order": ["Candidate 2", ...]}
//   GET  /batches/{id}/queue                  the caller's assigned items
//   POST /batches/{id}/items/{iid}/decision   {"kind": "approve|reject|edit", "payload": "..."}
//   GET  /sessions/{id}/tally                 de-blinded tally, privileged tokens only
//
// Every request carries "Authorization: Bearer <token>"; the reviewer id
// comes from the token, never from the body.

#include <map>
#include <set>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ophvqa/reviewsvc.hpp"

namespace ophvqa {

struct ReviewAuth {
  std::map<std::string, std::string> token_to_reviewer;
  std::set<std::string> privileged_reviewers;
};

inline int http_status(ReviewErrorCode c) {
  switch (c) {
    case ReviewErrorCode::UnknownSession:
    case ReviewErrorCode::UnknownBatch:
    case ReviewErrorCode::UnknownItem: return 404;
    case ReviewErrorCode::NotPermutation:
    case ReviewErrorCode::BadRequest: return 400;
    case ReviewErrorCode::AlreadySubmitted:
    case ReviewErrorCode::AlreadyExists: return 409;
    case ReviewErrorCode::NotAssigned: return 403;
  }
  return 500;
}

class ReviewHttpServer {
 public:
  ReviewHttpServer(ReviewService& service, ReviewAuth auth) : svc_(service), auth_(std::move(auth)) {
    // SO_REUSEADDR only: the library default SO_REUSEPORT would let a second
    // server share a busy port instead of failing to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
  }

  /// Serves files under `dir` at /images/.
  bool mount_images(const std::string& dir) { return server_.set_mount_point("/images", dir); }

  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

 private:
  using Handler = std::function<nlohmann::json(const httplib::Request&, const std::string& reviewer)>;

  static void send(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  std::optional<std::string> reviewer_for(const httplib::Request& req) const {
    auto h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
    auto it = auth_.token_to_reviewer.find(h.substr(prefix.size()));
    if (it == auth_.token_to_reviewer.end()) return std::nullopt;
    return it->second;
  }

  httplib::Server::Handler wrap(Handler h, bool privileged = false) {
    return [this, h = std::move(h), privileged](const httplib::Request& req, httplib::Response& res) {
      auto reviewer = reviewer_for(req);
      if (!reviewer) return send(res, 401, {{"error", "missing or unknown bearer token"}});
      if (privileged && !auth_.privileged_reviewers.count(*reviewer))
        return send(res, 403, {{"error", "privileged endpoint"}});
      try {
        send(res, 200, h(req, *reviewer));
      } catch (const ReviewError& e) {
        send(res, http_status(e.code()), {{"error", e.what()}});
      } catch (const nlohmann::json::exception&) {
        send(res, 400, {{"error", "malformed request body"}});
      }
    };
  }

  static nlohmann::json body_of(const httplib::Request& req) {
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ReviewError(ReviewErrorCode::BadRequest, "body must be a JSON object");
    return j;
  }

  void routes() {
    server_.Get(R"(/sessions/([^/]+))", wrap([this](const httplib::Request& req, const std::string&) {
      return svc_.session_view(req.matches[1]);
    }));
    server_.Get(R"(/sessions/([^/]+)/items/([^/]+))",
                wrap([this](const httplib::Request& req, const std::string& reviewer) {
                  return svc_.item_view(req.matches[1], req.matches[2], reviewer);
                }));
    server_.Post(R"(/sessions/([^/]+)/items/([^/]+)/ranking)",
                 wrap([this](const httplib::Request& req, const std::string& reviewer) {
                   auto body = body_of(req);
                   if (!body.contains("order") || !body["order"].is_array())
                     throw ReviewError(ReviewErrorCode::NotPermutation, "not a permutation");
                   std::vector<std::string> order;
                   for (const auto& l : body["order"]) {
                     if (!l.is_string()) throw ReviewError(ReviewErrorCode::NotPermutation, "not a permutation");
                     order.push_back(l.get<std::string>());
                   }
                   auto e = svc_.submit_ranking(req.matches[1], req.matches[2], reviewer, order);
                   return nlohmann::json{{"event_id", e.event_id}, {"item_id", e.item_id}, {"status", "recorded"}};
                 }));
    server_.Get(R"(/batches/([^/]+)/queue)", wrap([this](const httplib::Request& req, const std::string& reviewer) {
      return svc_.review_queue(req.matches[1], reviewer);
    }));
    server_.Post(R"(/batches/([^/]+)/items/([^/]+)/decision)",
                 wrap([this](const httplib::Request& req, const std::string& reviewer) {
                   auto body = body_of(req);
                   auto kind = parse_event_kind(body.value("kind", ""));
                   if (!kind || (*kind != EventKind::Approve && *kind != EventKind::Reject && *kind != EventKind::Edit))
                     throw ReviewError(ReviewErrorCode::BadRequest, "kind must be approve, reject or edit");
                   std::string payload = body.contains("payload") && body["payload"].is_string()
                                             ? body["payload"].get<std::string>()
                                             : std::string();
                   auto e = svc_.submit_decision(req.matches[1], req.matches[2], reviewer, *kind, payload);
                   return nlohmann::json{{"event_id", e.event_id},
                                         {"item_id", e.item_id},
                                         {"item_status", to_string(svc_.item_status(req.matches[1], req.matches[2]))}};
                 }));
    server_.Get(R"(/sessions/([^/]+)/tally)", wrap(
                                                  [this](const httplib::Request& req, const std::string&) {
                                                    nlohmann::json t = svc_.preference_tally(req.matches[1]);
                                                    return nlohmann::json{{"session_id", req.matches[1]}, {"tally", t}};
                                                  },
                                                  true));
  }

  ReviewService& svc_;
  ReviewAuth auth_;
  httplib::Server server_;
};

}  // namespace ophvqa
