#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpcal/errors.hpp"
#include "mpcal/jsonl.hpp"

namespace mpcal {

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 512;
  double temperature = 0.0;  // greedy decoding
  bool logprob_request = false;
};

struct TopLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TopLogprob&) const = default;
};

// One generated token. `top` holds the backend's alternatives at this
// position (may include the chosen token itself).
struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<TopLogprob> top;

  bool operator==(const TokenLogprob&) const = default;
};

struct CompletionResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::string backend_id;

  bool operator==(const CompletionResponse&) const = default;
};

Json ResponseToJson(const CompletionResponse& r);
CompletionResponse ResponseFromJson(const Json& j);

// An inference backend. Generate must be safe to call concurrently. Throw
// BackendError(kTransport) for failures worth retrying.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual CompletionResponse Generate(const CompletionRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
};

struct ClientOptions {
  RetryPolicy retry;
  bool cache_enabled = true;
  // Content-addressed response files (<key>.json). In-memory only if unset.
  std::optional<std::filesystem::path> cache_dir;
};

// Outcome of one request inside a batch; exactly one member is engaged.
struct BatchResult {
  std::optional<CompletionResponse> response;
  std::optional<BackendError> error;

  bool ok() const { return response.has_value(); }
};

// Caching, retrying front end over a Backend. Thread-safe.
class ModelClient {
 public:
  explicit ModelClient(std::shared_ptr<Backend> backend, ClientOptions options = {});

  CompletionResponse Complete(const CompletionRequest& request);

  // Responses come back in request order. At most `parallelism` requests are
  // in flight at once. A failing request does not abort its siblings.
  std::vector<BatchResult> CompleteBatch(std::span<const CompletionRequest> requests,
                                         std::size_t parallelism);

  // SHA-256 over (backend id, prompt, max_tokens, temperature, logprob flag).
  std::string CacheKey(const CompletionRequest& request) const;

  const std::string& backend_id() const { return backend_id_; }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::optional<CompletionResponse> Lookup(const std::string& key);
  void Store(const std::string& key, const CompletionResponse& response);
  CompletionResponse CallWithRetry(const CompletionRequest& request);

  std::shared_ptr<Backend> backend_;
  ClientOptions options_;
  std::string backend_id_;
  std::mutex mu_;
  std::unordered_map<std::string, CompletionResponse> memory_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

}  // namespace mpcal
