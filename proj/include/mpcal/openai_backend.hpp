#pragma once

#include <string>

#include "mpcal/model_client.hpp"

namespace mpcal {

struct OpenAIBackendOptions {
  // e.g. "http://localhost:8000/v1"; requests go to <base_url>/chat/completions.
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the bearer token. A missing
  // variable sends no Authorization header.
  std::string api_key_env = "MPCAL_API_KEY";
  int timeout_seconds = 120;
  int top_logprobs = 5;
};

// OpenAI-compatible chat-completions backend.
class OpenAIBackend : public Backend {
 public:
  explicit OpenAIBackend(OpenAIBackendOptions options);

  std::string id() const override;
  CompletionResponse Generate(const CompletionRequest& request) override;

  // Exposed for tests: body construction and reply decoding.
  Json BuildRequestBody(const CompletionRequest& request) const;
  CompletionResponse DecodeReply(const std::string& body) const;

 private:
  OpenAIBackendOptions options_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // path prefix, no trailing slash
};

}  // namespace mpcal
