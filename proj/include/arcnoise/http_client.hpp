#pragma once

// OpenAI-compatible chat-completions transport.
//
// POST <endpoint> with {"model", "messages": [{"role": "user", "content"}],
// "temperature", "max_tokens"}; the reply text is choices[0].message.content.
// The bearer token is read from the environment variable named in the config
// at call time and is scrubbed from every error message.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "httplib.h"
#include "json.hpp"

#include "arcnoise/llm_client.hpp"

namespace arcnoise {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

[[nodiscard]] inline Endpoint parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ProviderError(ProviderErrc::ConfigInvalid, "endpoint must be an absolute http(s) URL");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ProviderError(ProviderErrc::ConfigInvalid, "unsupported endpoint scheme '" + std::string(scheme) + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/v1/chat/completions"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str()); v != nullptr) return std::string(v);
  return std::nullopt;
}

/// Replaces every occurrence of `secret` in `text`.
[[nodiscard]] inline std::string redact(std::string text, std::string_view secret) {
  if (secret.empty()) return text;
  for (auto pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
    text.replace(pos, secret.size(), "[redacted]");
  }
  return text;
}

class HttpChatProvider final : public Provider {
 public:
  explicit HttpChatProvider(ProviderConfig config, EnvLookup env = process_env)
      : config_(std::move(config)), endpoint_(parse_endpoint(config_.endpoint)), env_(std::move(env)) {}

  [[nodiscard]] CompletionResponse complete(const CompletionRequest& request) const override {
    if (request.prompt.empty()) throw ProviderError(ProviderErrc::InvalidRequest, "empty prompt");
    if (!(request.temperature >= 0.0)) throw ProviderError(ProviderErrc::InvalidRequest, "negative temperature");
    const auto key = env_(config_.credential_env);
    if (!key || key->empty()) {
      throw ProviderError(ProviderErrc::AuthFailure,
                          "credential variable " + config_.credential_env + " is not set");
    }
    try {
      return send(request, *key);
    } catch (const ProviderError& e) {
      throw ProviderError(e.code(), redact(strip_code(e.what(), e.code()), *key));
    }
  }

 private:
  static std::string strip_code(std::string_view what, ProviderErrc code) {
    const auto prefix = std::string(to_string(code)) + ": ";
    return std::string(what.substr(what.rfind(prefix, 0) == 0 ? prefix.size() : 0));
  }

  CompletionResponse send(const CompletionRequest& request, const std::string& key) const {
    httplib::Client client(endpoint_.base);
    client.set_connection_timeout(request.timeout);
    client.set_read_timeout(request.timeout);
    client.set_write_timeout(request.timeout);

    const nlohmann::json body = {
        {"model", request.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    const httplib::Headers headers = {{"Authorization", "Bearer " + key}};

    const auto started = std::chrono::steady_clock::now();
    auto result = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

    if (!result) {
      const auto err = result.error();
      if (err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && latency >= request.timeout)) {
        throw ProviderError(ProviderErrc::Timeout, "no response within " + std::to_string(request.timeout.count()) + " ms");
      }
      throw ProviderError(ProviderErrc::TransportError, httplib::to_string(err));
    }

    const int status = result->status;
    if (status == 401 || status == 403) {
      throw ProviderError(ProviderErrc::AuthFailure, "HTTP " + std::to_string(status));
    }
    if (status == 429) throw ProviderError(ProviderErrc::RateLimited, "HTTP 429");
    if (status == 408) throw ProviderError(ProviderErrc::Timeout, "HTTP 408");
    if (status >= 500) throw ProviderError(ProviderErrc::TransportError, "HTTP " + std::to_string(status));
    if (status < 200 || status >= 300) {
      throw ProviderError(ProviderErrc::InvalidRequest, "HTTP " + std::to_string(status));
    }

    CompletionResponse response;
    response.latency = latency;
    try {
      const auto doc = nlohmann::json::parse(result->body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      response.text = content.is_null() ? std::string() : content.get<std::string>();
      response.provider_meta["http_status"] = status;
      if (doc.contains("id")) response.provider_meta["request_id"] = doc["id"];
      if (doc.contains("model")) response.provider_meta["model"] = doc["model"];
      if (doc.contains("usage")) response.provider_meta["usage"] = doc["usage"];
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(ProviderErrc::MalformedProviderResponse, e.what());
    }
    return response;
  }

  ProviderConfig config_;
  Endpoint endpoint_;
  EnvLookup env_;
};

/// Provider for any configured kind, wrapped in the configured retry policy.
[[nodiscard]] inline std::shared_ptr<const Provider> make_provider(const ProviderConfig& config,
                                                                   Sleeper sleep = real_sleep) {
  config.validate();
  std::shared_ptr<const Provider> inner = config.kind == ProviderKind::HttpChatCompletion
                                              ? std::make_shared<HttpChatProvider>(config)
                                              : make_mock_provider(config);
  return std::make_shared<RetryingProvider>(std::move(inner), config.retry, std::move(sleep));
}

/// One-shot completion through a freshly built provider.
[[nodiscard]] inline CompletionResponse complete(const CompletionRequest& request, const ProviderConfig& config) {
  return make_provider(config)->complete(request);
}

}  // namespace arcnoise
