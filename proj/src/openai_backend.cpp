#include "mpcal/openai_backend.hpp"

#include <cstdlib>

#include "httplib.h"

namespace mpcal {

OpenAIBackend::OpenAIBackend(OpenAIBackendOptions options) : options_(std::move(options)) {
  const std::string& url = options_.base_url;
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw UsageError("base URL must start with http:// or https://: " + url);
  }
  std::size_t path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  if (options_.model.empty()) throw UsageError("remote backend needs a model name");
}

std::string OpenAIBackend::id() const { return "openai(" + options_.model + "@" + options_.base_url + ")"; }

Json OpenAIBackend::BuildRequestBody(const CompletionRequest& request) const {
  Json body;
  body["model"] = options_.model;
  body["messages"] = Json::array({Json{{"role", "user"}, {"content", request.prompt}}});
  body["max_tokens"] = request.max_tokens;
  body["temperature"] = request.temperature;
  if (request.logprob_request) {
    body["logprobs"] = true;
    body["top_logprobs"] = options_.top_logprobs;
  }
  return body;
}

CompletionResponse OpenAIBackend::DecodeReply(const std::string& body) const {
  auto fail = [&](const std::string& why) {
    return BackendError(BackendError::Kind::kDecode, "malformed backend reply: " + why, 1, body);
  };
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw fail(e.what());
  }
  try {
    const Json& choice = j.at("choices").at(0);
    CompletionResponse r;
    const Json& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    r.backend_id = id();
    if (auto lp = choice.find("logprobs"); lp != choice.end() && !lp->is_null()) {
      std::vector<TokenLogprob> tokens;
      for (const Json& t : lp->at("content")) {
        TokenLogprob tok{t.at("token").get<std::string>(), t.at("logprob").get<double>(), {}};
        if (auto top = t.find("top_logprobs"); top != t.end() && top->is_array()) {
          for (const Json& alt : *top) {
            tok.top.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
          }
        }
        if (tok.logprob > 0.0) throw fail("positive log-probability");
        tokens.push_back(std::move(tok));
      }
      r.token_logprobs = std::move(tokens);
    }
    return r;
  } catch (const Json::exception& e) {
    throw fail(e.what());
  }
}

CompletionResponse OpenAIBackend::Generate(const CompletionRequest& request) {
  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv(options_.api_key_env.c_str()); token != nullptr && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = client.Post(path_ + "/chat/completions", headers, BuildRequestBody(request).dump(),
                         "application/json");
  if (!res) {
    throw BackendError(BackendError::Kind::kTransport,
                       "transport failure: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw BackendError(BackendError::Kind::kTransport,
                       "backend returned HTTP " + std::to_string(res->status), 1, res->body);
  }
  if (res->status != 200) {
    throw BackendError(BackendError::Kind::kSemantic,
                       "backend rejected request with HTTP " + std::to_string(res->status), 1,
                       res->body);
  }
  return DecodeReply(res->body);
}

}  // namespace mpcal
