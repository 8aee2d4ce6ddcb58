#pragma once

// HTTP-backed collaborators: the chat-completions respondent, the embedding
// scorer transport, the rewrite (paraphrase) client, and the extraction
// fallback. Everything here talks JSON over cpp-httplib and serializes its
// calls with bounded retries.

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "msg/distractor.hpp"
#include "msg/harness.hpp"
#include "msg/png.hpp"
#include "msg/types.hpp"

namespace msg::remote {

struct EndpointConfig {
  std::string url;           // e.g. http://host:port/v1/chat/completions
  std::string model;         // model name passed through
  std::string api_key;       // empty = no Authorization header
  int timeout_s = 120;
  int max_attempts = 3;
  int backoff_ms = 1000;     // doubles per attempt
  bool attach_image = true;  // base64 data URL in the message content
};

namespace detail {

inline std::string base64(const std::vector<uint8_t>& data) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  for (size_t i = 0; i < data.size(); i += 3) {
    uint32_t v = static_cast<uint32_t>(data[i]) << 16;
    if (i + 1 < data.size()) v |= static_cast<uint32_t>(data[i + 1]) << 8;
    if (i + 2 < data.size()) v |= data[i + 2];
    out.push_back(alphabet[(v >> 18) & 63]);
    out.push_back(alphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < data.size() ? alphabet[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < data.size() ? alphabet[v & 63] : '=');
  }
  return out;
}

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw EndpointUnreachable("bad endpoint url: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// POST JSON with bounded retries; serializes calls per client instance.
class JsonPoster {
public:
  explicit JsonPoster(const EndpointConfig& config)
      : config_(config), parsed_(parse_url(config.url)) {}

  Json post(const Json& payload) {
    std::lock_guard<std::mutex> lock(mutex_);
    int delay_ms = config_.backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms *= 2;
      }
      httplib::Client client(parsed_.base);
      client.set_connection_timeout(config_.timeout_s, 0);
      client.set_read_timeout(config_.timeout_s, 0);
      httplib::Headers headers;
      if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);
      auto res = client.Post(parsed_.path, headers, payload.dump(), "application/json");
      if (!res) {
        last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status == 401 || res->status == 403)
        throw AuthFailure("endpoint " + config_.url + " returned HTTP " +
                          std::to_string(res->status));
      if (res->status == 408 || res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;  // transient; retry
      }
      if (res->status != 200)
        throw EndpointUnreachable("endpoint " + config_.url + " returned HTTP " +
                                  std::to_string(res->status));
      try {
        return Json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw EndpointUnreachable("endpoint returned non-JSON body: " + std::string(e.what()));
      }
    }
    throw EndpointUnreachable("endpoint " + config_.url + " unreachable after " +
                              std::to_string(config_.max_attempts) + " attempts: " + last_error);
  }

private:
  EndpointConfig config_;
  ParsedUrl parsed_;
  std::mutex mutex_;
};

}  // namespace detail

// Chat-completions style respondent: question prompt as the user message with
// the (rendered) image attached as a base64 data URL.
class RemoteRespondent : public harness::Respondent {
public:
  RemoteRespondent(std::string id, EndpointConfig config)
      : id_(std::move(id)), config_(config), poster_(config) {}

  std::string id() const override { return id_; }

  harness::RawReply answer(const MCQItem& item, const std::string& prompt) override {
    Json content = Json::array();
    content.push_back(Json{{"type", "text"}, {"text", prompt}});
    if (config_.attach_image) {
      std::string image_path = item.rendered_image ? *item.rendered_image : item.image.path;
      auto bytes = png::read_bytes(image_path);
      content.push_back(
          Json{{"type", "image_url"},
               {"image_url", Json{{"url", "data:image/png;base64," + detail::base64(bytes)}}}});
    }
    Json payload{{"model", config_.model},
                 {"messages", Json::array({Json{{"role", "user"}, {"content", content}}})},
                 {"temperature", 0}};
    auto start = std::chrono::steady_clock::now();
    Json reply = poster_.post(payload);
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    try {
      std::string text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      return {text, static_cast<long>(elapsed)};
    } catch (const nlohmann::json::exception&) {
      throw EndpointUnreachable("endpoint reply missing choices[0].message.content");
    }
  }

private:
  std::string id_;
  EndpointConfig config_;
  detail::JsonPoster poster_;
};

// Embedding transport for distractor::RemoteScorer. POSTs {"texts": [...]}
// and expects {"embeddings": [[...], ...]}.
inline distractor::RemoteScorer::Fetch embed_fetch(const EndpointConfig& config) {
  auto poster = std::make_shared<detail::JsonPoster>(config);
  return [poster](const std::vector<std::string>& texts) {
    Json reply;
    try {
      reply = poster->post(Json{{"texts", texts}});
    } catch (const Error& e) {
      throw ScorerUnavailable(e.what());
    }
    try {
      return reply.at("embeddings").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception&) {
      throw ScorerUnavailable("embedding endpoint reply missing 'embeddings'");
    }
  };
}

// Text-rewrite client for paraphrasing. POSTs {"text": ...} and expects
// {"text": ...}; throws ServiceUnavailable so callers can fall back to
// identity.
class RewriteClient {
public:
  explicit RewriteClient(const EndpointConfig& config) : poster_(config) {}

  std::string rewrite(const std::string& text) {
    Json reply;
    try {
      reply = poster_.post(Json{{"text", text}});
    } catch (const Error& e) {
      throw ServiceUnavailable(e.what());
    }
    try {
      return reply.at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ServiceUnavailable("rewrite endpoint reply missing 'text'");
    }
  }

private:
  detail::JsonPoster poster_;
};

// Service-assisted choice extraction with a fixed prompt; used only when the
// regex cascade comes up empty.
inline harness::FallbackClient extract_fallback(const EndpointConfig& config) {
  auto poster = std::make_shared<detail::JsonPoster>(config);
  std::string model = config.model;
  return [poster, model](const std::string& raw, const std::vector<std::string>& letters) {
    std::string letter_list;
    for (size_t i = 0; i < letters.size(); ++i) {
      if (i) letter_list += ", ";
      letter_list += letters[i];
    }
    std::string prompt =
        "A multiple-choice question was answered with the response below. Reply with the "
        "single choice letter (" +
        letter_list + ") the response selects, or UNKNOWN.\n\nResponse:\n" + raw;
    Json payload{{"model", model},
                 {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
                 {"temperature", 0}};
    Json reply;
    try {
      reply = poster->post(payload);
    } catch (const Error& e) {
      throw FallbackUnavailable(e.what());
    }
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw FallbackUnavailable("extraction endpoint reply missing content");
    }
  };
}

}  // namespace msg::remote
