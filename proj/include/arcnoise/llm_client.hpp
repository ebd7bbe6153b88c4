#pragma once

// Solver abstraction: completion requests, providers, retries, batching.
//
// Concrete HTTP transport lives in http_client.hpp so that code which only
// needs mocks does not pull in cpp-httplib.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "arcnoise/error.hpp"
#include "arcnoise/grid.hpp"
#include "arcnoise/noise.hpp"
#include "arcnoise/rng.hpp"

namespace arcnoise {

enum class ProviderErrc {
  Timeout,
  RateLimited,
  AuthFailure,
  InvalidRequest,
  MalformedProviderResponse,
  TransportError,
  ConfigInvalid,
};

constexpr std::string_view to_string(ProviderErrc c) noexcept {
  switch (c) {
    case ProviderErrc::Timeout: return "Timeout";
    case ProviderErrc::RateLimited: return "RateLimited";
    case ProviderErrc::AuthFailure: return "AuthFailure";
    case ProviderErrc::InvalidRequest: return "InvalidRequest";
    case ProviderErrc::MalformedProviderResponse: return "MalformedProviderResponse";
    case ProviderErrc::TransportError: return "TransportError";
    case ProviderErrc::ConfigInvalid: return "ConfigInvalid";
  }
  return "ProviderError";
}

using ProviderError = Error<ProviderErrc>;

/// Errors worth another attempt. Authentication and validation failures are not.
constexpr bool is_transient(ProviderErrc c) noexcept {
  return c == ProviderErrc::Timeout || c == ProviderErrc::RateLimited || c == ProviderErrc::TransportError;
}

struct CompletionRequest {
  std::string id;
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  std::size_t max_tokens = 4096;
  std::chrono::milliseconds timeout{120'000};
  // Mock-only side channel: the answer an oracle provider derives its reply from.
  std::optional<Grid> oracle_target;
};

struct CompletionResponse {
  std::string text;
  nlohmann::json provider_meta = nlohmann::json::object();
  std::chrono::milliseconds latency{0};
};

struct RetryPolicy {
  std::size_t max_attempts = 3;  // total attempts, first try included
  std::chrono::milliseconds backoff{500};
  std::chrono::milliseconds max_backoff{30'000};
};

/// Delay before retry number `retry` (1-based): backoff * 2^(retry-1), capped.
[[nodiscard]] inline std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, std::size_t retry) {
  auto delay = policy.backoff;
  for (std::size_t i = 1; i < retry && delay < policy.max_backoff; ++i) delay *= 2;
  return std::min(delay, policy.max_backoff);
}

enum class ProviderKind { HttpChatCompletion, MockEchoOracle, MockCorruptedOracle, MockConstant };

constexpr std::string_view to_string(ProviderKind k) noexcept {
  switch (k) {
    case ProviderKind::HttpChatCompletion: return "http_chat_completion";
    case ProviderKind::MockEchoOracle: return "mock_echo_oracle";
    case ProviderKind::MockCorruptedOracle: return "mock_corrupted_oracle";
    case ProviderKind::MockConstant: return "mock_constant";
  }
  return "unknown";
}

inline ProviderKind parse_provider_kind(std::string_view s) {
  for (auto k : {ProviderKind::HttpChatCompletion, ProviderKind::MockEchoOracle, ProviderKind::MockCorruptedOracle,
                 ProviderKind::MockConstant}) {
    if (s == to_string(k)) return k;
  }
  throw ProviderError(ProviderErrc::ConfigInvalid, "unknown provider kind '" + std::string(s) + "'");
}

struct MockSettings {
  std::optional<std::size_t> flip_count;  // corrupted oracle: exact cells to flip
  std::optional<double> flip_level;       // ... or floor(level * cells)
  std::uint64_t seed = 0;
  std::string constant_text;
  std::chrono::milliseconds delay{0};
};

struct ProviderConfig {
  ProviderKind kind = ProviderKind::MockEchoOracle;
  std::string endpoint;
  std::string model;
  std::string credential_env;  // name of the environment variable, never the secret
  RetryPolicy retry;
  std::size_t parallelism = 1;
  std::size_t max_tokens = 4096;
  std::chrono::milliseconds timeout{120'000};
  MockSettings mock;

  void validate() const {
    if (kind == ProviderKind::HttpChatCompletion && (endpoint.empty() || credential_env.empty())) {
      throw ProviderError(ProviderErrc::ConfigInvalid, "http provider needs endpoint and credential_env");
    }
    if (parallelism == 0) throw ProviderError(ProviderErrc::ConfigInvalid, "parallelism must be >= 1");
    if (retry.max_attempts == 0) throw ProviderError(ProviderErrc::ConfigInvalid, "max_attempts must be >= 1");
    if (kind == ProviderKind::MockCorruptedOracle && !mock.flip_count && !mock.flip_level) {
      throw ProviderError(ProviderErrc::ConfigInvalid, "corrupted oracle needs mock.flip or mock.flip_level");
    }
  }
};

inline nlohmann::json to_json(const ProviderConfig& c) {
  nlohmann::json j = {
      {"kind", to_string(c.kind)},
      {"endpoint", c.endpoint},
      {"model", c.model},
      {"credential_env", c.credential_env},
      {"retry", {{"max_attempts", c.retry.max_attempts}, {"backoff_ms", c.retry.backoff.count()},
                 {"max_backoff_ms", c.retry.max_backoff.count()}}},
      {"parallelism", c.parallelism},
      {"max_tokens", c.max_tokens},
      {"timeout_ms", c.timeout.count()},
  };
  nlohmann::json mock = {{"seed", c.mock.seed}, {"text", c.mock.constant_text}, {"delay_ms", c.mock.delay.count()}};
  if (c.mock.flip_count) mock["flip"] = *c.mock.flip_count;
  if (c.mock.flip_level) mock["flip_level"] = *c.mock.flip_level;
  j["mock"] = std::move(mock);
  return j;
}

inline ProviderConfig provider_config_from_json(const nlohmann::json& j) {
  try {
    ProviderConfig c;
    c.kind = parse_provider_kind(j.at("kind").get<std::string>());
    c.endpoint = j.value("endpoint", "");
    c.model = j.value("model", "");
    c.credential_env = j.value("credential_env", "");
    c.parallelism = j.value("parallelism", std::size_t{1});
    c.max_tokens = j.value("max_tokens", std::size_t{4096});
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", std::int64_t{120'000}));
    if (auto it = j.find("retry"); it != j.end()) {
      c.retry.max_attempts = it->value("max_attempts", c.retry.max_attempts);
      c.retry.backoff = std::chrono::milliseconds(it->value("backoff_ms", c.retry.backoff.count()));
      c.retry.max_backoff = std::chrono::milliseconds(it->value("max_backoff_ms", c.retry.max_backoff.count()));
    }
    if (auto it = j.find("mock"); it != j.end()) {
      if (it->contains("flip")) c.mock.flip_count = it->at("flip").get<std::size_t>();
      if (it->contains("flip_level")) c.mock.flip_level = it->at("flip_level").get<double>();
      c.mock.seed = it->value("seed", std::uint64_t{0});
      c.mock.constant_text = it->value("text", "");
      c.mock.delay = std::chrono::milliseconds(it->value("delay_ms", std::int64_t{0}));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderErrc::ConfigInvalid, e.what());
  }
}

class Provider {
 public:
  virtual ~Provider() = default;
  /// Thread-safe; may be called concurrently.
  [[nodiscard]] virtual CompletionResponse complete(const CompletionRequest& request) const = 0;
};

namespace detail {

inline const Grid& require_oracle_target(const CompletionRequest& request) {
  if (!request.oracle_target) {
    throw ProviderError(ProviderErrc::InvalidRequest, "oracle provider needs the request's target grid");
  }
  return *request.oracle_target;
}

inline void mock_delay(std::chrono::milliseconds delay) {
  if (delay.count() > 0) std::this_thread::sleep_for(delay);
}

}  // namespace detail

/// Replies with the known answer.
class MockEchoOracle final : public Provider {
 public:
  explicit MockEchoOracle(std::chrono::milliseconds delay = {}) : delay_(delay) {}

  [[nodiscard]] CompletionResponse complete(const CompletionRequest& request) const override {
    detail::mock_delay(delay_);
    return {"Output:\n" + render_grid(detail::require_oracle_target(request)), {{"provider", "mock_echo_oracle"}}, {}};
  }

 private:
  std::chrono::milliseconds delay_;
};

/// Replies with the known answer after changing a fixed number of cells to a
/// different digit. The changed cells depend only on (prompt, seed).
class MockCorruptedOracle final : public Provider {
 public:
  struct FlipCount { std::size_t cells; };
  struct FlipLevel { double level; };

  MockCorruptedOracle(std::variant<FlipCount, FlipLevel> flips, std::uint64_t seed,
                      std::chrono::milliseconds delay = {})
      : flips_(flips), seed_(seed), delay_(delay) {}

  [[nodiscard]] std::size_t flips_for(const Grid& target) const {
    if (const auto* count = std::get_if<FlipCount>(&flips_)) return count->cells;
    return modified_count(NoiseLevel(std::get<FlipLevel>(flips_).level), target);
  }

  [[nodiscard]] CompletionResponse complete(const CompletionRequest& request) const override {
    detail::mock_delay(delay_);
    const Grid& target = detail::require_oracle_target(request);
    const std::size_t flips = flips_for(target);
    if (flips > total_cells(target)) {
      throw ProviderError(ProviderErrc::InvalidRequest, "cannot flip " + std::to_string(flips) + " of " +
                                                            std::to_string(total_cells(target)) + " cells");
    }
    Rng rng(SeedPath(seed_).add(request.prompt).value());
    static const ValuePool digits{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<CellValue> cells(target.cells().begin(), target.cells().end());
    for (const auto& pos : select_positions(target, flips, rng)) {
      auto& cell = cells[pos.row * target.cols() + pos.col];
      cell = replace_value(cell, digits, rng);
    }
    return {"Output:\n" + render_grid(target.with_cells(std::move(cells))),
            {{"provider", "mock_corrupted_oracle"}, {"flipped_cells", flips}},
            {}};
  }

 private:
  std::variant<FlipCount, FlipLevel> flips_;
  std::uint64_t seed_;
  std::chrono::milliseconds delay_;
};

/// Always replies with the same text.
class MockConstant final : public Provider {
 public:
  explicit MockConstant(std::string text, std::chrono::milliseconds delay = {})
      : text_(std::move(text)), delay_(delay) {}

  [[nodiscard]] CompletionResponse complete(const CompletionRequest&) const override {
    detail::mock_delay(delay_);
    return {text_, {{"provider", "mock_constant"}}, {}};
  }

 private:
  std::string text_;
  std::chrono::milliseconds delay_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// Retries transient failures with exponential backoff. The error of the last
/// attempt is rethrown once attempts are exhausted.
class RetryingProvider final : public Provider {
 public:
  RetryingProvider(std::shared_ptr<const Provider> inner, RetryPolicy policy, Sleeper sleep = real_sleep)
      : inner_(std::move(inner)), policy_(policy), sleep_(std::move(sleep)) {}

  [[nodiscard]] CompletionResponse complete(const CompletionRequest& request) const override {
    for (std::size_t attempt = 1;; ++attempt) {
      try {
        auto response = inner_->complete(request);
        response.provider_meta["attempts"] = attempt;
        return response;
      } catch (const ProviderError& e) {
        if (!is_transient(e.code()) || attempt >= policy_.max_attempts) throw;
        sleep_(backoff_delay(policy_, attempt));
      }
    }
  }

 private:
  std::shared_ptr<const Provider> inner_;
  RetryPolicy policy_;
  Sleeper sleep_;
};

/// Provider for the mock kinds; the HTTP kind is built in http_client.hpp.
[[nodiscard]] inline std::shared_ptr<const Provider> make_mock_provider(const ProviderConfig& config) {
  switch (config.kind) {
    case ProviderKind::MockEchoOracle:
      return std::make_shared<MockEchoOracle>(config.mock.delay);
    case ProviderKind::MockCorruptedOracle:
      if (config.mock.flip_count) {
        return std::make_shared<MockCorruptedOracle>(MockCorruptedOracle::FlipCount{*config.mock.flip_count},
                                                     config.mock.seed, config.mock.delay);
      }
      return std::make_shared<MockCorruptedOracle>(MockCorruptedOracle::FlipLevel{config.mock.flip_level.value()},
                                                   config.mock.seed, config.mock.delay);
    case ProviderKind::MockConstant:
      return std::make_shared<MockConstant>(config.mock.constant_text, config.mock.delay);
    case ProviderKind::HttpChatCompletion:
      break;
  }
  throw ProviderError(ProviderErrc::ConfigInvalid, "not a mock provider kind");
}

struct BatchResult {
  std::string id;
  std::variant<CompletionResponse, ProviderError> outcome;

  [[nodiscard]] bool ok() const noexcept { return outcome.index() == 0; }
};

/// Completes every request with at most `parallelism` in flight. Results are
/// returned in request order and carry the request id; a failing request
/// yields its error without affecting the others.
[[nodiscard]] inline std::vector<BatchResult> run_with_budget(const std::vector<CompletionRequest>& requests,
                                                              const Provider& provider, std::size_t parallelism) {
  if (parallelism == 0) throw ProviderError(ProviderErrc::ConfigInvalid, "parallelism must be >= 1");
  std::vector<std::optional<BatchResult>> slots(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      const auto& request = requests[i];
      try {
        slots[i].emplace(BatchResult{request.id, provider.complete(request)});
      } catch (const ProviderError& e) {
        slots[i].emplace(BatchResult{request.id, e});
      } catch (const std::exception& e) {
        slots[i].emplace(BatchResult{request.id, ProviderError(ProviderErrc::TransportError, e.what())});
      }
    }
  };

  {
    std::vector<std::jthread> workers;
    const std::size_t n = std::min(parallelism, std::max<std::size_t>(requests.size(), 1));
    for (std::size_t t = 1; t < n; ++t) workers.emplace_back(worker);
    worker();
  }

  std::vector<BatchResult> out;
  out.reserve(requests.size());
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

}  // namespace arcnoise
