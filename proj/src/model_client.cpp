#include "mpcal/model_client.hpp"

#include <cmath>
#include <thread>

#include "mpcal/hashing.hpp"

namespace mpcal {

Json ResponseToJson(const CompletionResponse& r) {
  Json j;
  j["text"] = r.text;
  if (r.token_logprobs) {
    Json arr = Json::array();
    for (const TokenLogprob& t : *r.token_logprobs) {
      Json top = Json::array();
      for (const TopLogprob& alt : t.top) top.push_back({{"token", alt.token}, {"logprob", alt.logprob}});
      arr.push_back({{"token", t.token}, {"logprob", t.logprob}, {"top", std::move(top)}});
    }
    j["token_logprobs"] = std::move(arr);
  } else {
    j["token_logprobs"] = nullptr;
  }
  j["backend_id"] = r.backend_id;
  return j;
}

CompletionResponse ResponseFromJson(const Json& j) {
  CompletionResponse r;
  r.text = j.at("text").get<std::string>();
  if (const Json& lp = j.at("token_logprobs"); !lp.is_null()) {
    std::vector<TokenLogprob> tokens;
    for (const Json& t : lp) {
      TokenLogprob tok{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
      for (const Json& alt : t.at("top")) {
        tok.top.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
      }
      tokens.push_back(std::move(tok));
    }
    r.token_logprobs = std::move(tokens);
  }
  r.backend_id = j.at("backend_id").get<std::string>();
  return r;
}

ModelClient::ModelClient(std::shared_ptr<Backend> backend, ClientOptions options)
    : backend_(std::move(backend)), options_(std::move(options)), backend_id_(backend_->id()) {
  if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

std::string ModelClient::CacheKey(const CompletionRequest& request) const {
  FieldHasher h;
  h.Add(backend_id_)
      .Add(request.prompt)
      .Add(static_cast<std::uint64_t>(request.max_tokens))
      .Add(request.temperature)
      .Add(static_cast<std::uint64_t>(request.logprob_request));
  return h.HexDigest();
}

std::optional<CompletionResponse> ModelClient::Lookup(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!options_.cache_dir) return std::nullopt;
  std::filesystem::path file = *options_.cache_dir / (key + ".json");
  if (!std::filesystem::exists(file)) return std::nullopt;
  try {
    CompletionResponse r = ResponseFromJson(Json::parse(ReadFile(file)));
    std::lock_guard lock(mu_);
    memory_.emplace(key, r);
    return r;
  } catch (const std::exception&) {
    // Unreadable entry: treat as a miss and overwrite on store.
    return std::nullopt;
  }
}

void ModelClient::Store(const std::string& key, const CompletionResponse& response) {
  {
    std::lock_guard lock(mu_);
    memory_.insert_or_assign(key, response);
  }
  if (options_.cache_dir) {
    WriteFileAtomic(*options_.cache_dir / (key + ".json"), DumpLine(ResponseToJson(response)));
  }
}

CompletionResponse ModelClient::CallWithRetry(const CompletionRequest& request) {
  const RetryPolicy& retry = options_.retry;
  auto backoff = std::chrono::duration<double, std::milli>(retry.initial_backoff);
  for (int attempt = 1;; ++attempt) {
    try {
      backend_calls_.fetch_add(1);
      return backend_->Generate(request);
    } catch (const BackendError& e) {
      if (!e.retryable()) throw;
      if (attempt >= retry.max_attempts) {
        throw BackendError(BackendError::Kind::kExhausted,
                           "retry budget exhausted after " + std::to_string(attempt) +
                               " attempts: " + e.what(),
                           attempt, e.raw_body());
      }
    }
    std::this_thread::sleep_for(backoff);
    backoff *= retry.multiplier;
  }
}

CompletionResponse ModelClient::Complete(const CompletionRequest& request) {
  if (!options_.cache_enabled) return CallWithRetry(request);
  const std::string key = CacheKey(request);
  if (auto hit = Lookup(key)) {
    cache_hits_.fetch_add(1);
    return *std::move(hit);
  }
  CompletionResponse response = CallWithRetry(request);
  Store(key, response);
  return response;
}

std::vector<BatchResult> ModelClient::CompleteBatch(std::span<const CompletionRequest> requests,
                                                    std::size_t parallelism) {
  if (parallelism == 0) throw UsageError("parallelism must be at least 1");
  std::vector<BatchResult> results(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      try {
        results[i].response = Complete(requests[i]);
      } catch (const BackendError& e) {
        results[i].error = e;
      } catch (const std::exception& e) {
        results[i].error = BackendError(BackendError::Kind::kSemantic, e.what());
      }
    }
  };

  const std::size_t workers = std::min(parallelism, requests.size());
  if (workers <= 1) {
    worker();
    return results;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  return results;
}

}  // namespace mpcal
