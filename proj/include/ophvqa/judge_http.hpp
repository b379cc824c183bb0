#pragma once

// Chat-completion transport over HTTP(S).

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ophvqa/judge.hpp"

namespace ophvqa {

struct HttpEndpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // request path, defaults to /v1/chat/completions

  static HttpEndpoint parse(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw Error("endpoint must include a scheme: " + std::string(url));
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw Error("unsupported endpoint scheme: " + std::string(scheme));
    auto slash = url.find('/', scheme_end + 3);
    HttpEndpoint e;
    e.base = std::string(url.substr(0, slash));
    e.path = slash == std::string_view::npos ? "/v1/chat/completions" : std::string(url.substr(slash));
    if (e.base.size() <= scheme_end + 3) throw Error("endpoint has no host: " + std::string(url));
    return e;
  }
};

/// First text segment of an OpenAI-style or content-block chat reply.
inline std::string extract_reply_text(const nlohmann::json& body) {
  auto first_text = [](const nlohmann::json& content) -> std::optional<std::string> {
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array())
      for (const auto& part : content)
        if (part.is_object() && part.contains("text") && part["text"].is_string())
          return part["text"].get<std::string>();
    return std::nullopt;
  };
  if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
    const auto& c = body["choices"][0];
    if (c.contains("message") && c["message"].contains("content"))
      if (auto t = first_text(c["message"]["content"])) return *t;
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
  }
  if (body.contains("content"))
    if (auto t = first_text(body["content"])) return *t;
  throw TransportError("judge reply has no text segment");
}

class HttpChatTransport final : public ChatTransport {
 public:
  HttpChatTransport(std::string endpoint_url, std::string api_key,
                    std::chrono::seconds timeout = std::chrono::seconds(120))
      : endpoint_(HttpEndpoint::parse(endpoint_url)), api_key_(std::move(api_key)), timeout_(timeout) {
    if (timeout_.count() <= 0) throw Error("judge timeout must be positive");
  }

  /// Reads OPHVQA_JUDGE_ENDPOINT and OPHVQA_JUDGE_API_KEY, with an optional
  /// endpoint override.
  static HttpChatTransport from_env(std::string endpoint_override = {},
                                    std::chrono::seconds timeout = std::chrono::seconds(120)) {
    std::string endpoint = std::move(endpoint_override);
    if (endpoint.empty())
      if (const char* e = std::getenv("OPHVQA_JUDGE_ENDPOINT")) endpoint = e;
    if (endpoint.empty()) throw Error("no judge endpoint: set OPHVQA_JUDGE_ENDPOINT or pass --endpoint");
    std::string key;
    if (const char* k = std::getenv("OPHVQA_JUDGE_API_KEY")) key = k;
    return HttpChatTransport(endpoint, key, timeout);
  }

  std::string complete(const ChatRequest& request) const override {
    httplib::Client client(endpoint_.base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    nlohmann::json body = {
        {"model", request.model},
        {"temperature", request.temperature},
        {"messages",
         {{{"role", "system"}, {"content", request.system_text}},
          {{"role", "user"}, {"content", request.user_text}}}},
    };
    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("judge request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("judge endpoint returned HTTP " + std::to_string(res->status));
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw TransportError("judge endpoint returned non-JSON body");
    return extract_reply_text(reply);
  }

 private:
  HttpEndpoint endpoint_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

}  // namespace ophvqa
