#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "mpcal/data_model.hpp"
#include "mpcal/model_client.hpp"

namespace mpcal {

enum class ConfidenceBehavior { kHonest, kOverconfident, kUnderconfident };

std::string_view ToString(ConfidenceBehavior b);
ConfidenceBehavior ParseConfidenceBehavior(std::string_view s);

struct MockModelSpec {
  double accuracy = 1.0;
  std::string wrong_answer_text = "unknown";
  std::uint64_t seed = 0;
  ConfidenceBehavior confidence_behavior = ConfidenceBehavior::kHonest;
};

// Deterministic stand-in for a language model.
//
// Whether the model "knows" a problem is a pure function of (seed, problem
// id): Mix64(seed ^ Fnv1a64(id)) mapped to [0,1) is compared against
// `accuracy`, so the verdict does not depend on n or on which other
// problems share the prompt.
//
// Answer prompts: every line "k: <question>" whose question text is found in
// the answer key is answered with the first gold answer (or the gold choice
// letter for MC) when known, else with `wrong_answer_text`.
//
// Confidence prompts (those containing the certainty question): each
// "Question: <q>. Answer: <a>." block gets "I am sure"/"I am unsure" per
// the confidence behavior. Honest is sure exactly on known problems. When
// logprobs are requested the discriminating token carries probability
// 1 - d with small d > 0 drawn from (seed, id), and the opposite token is
// listed as the alternative with the residual mass.
class MockBackend : public Backend {
 public:
  MockBackend(MockModelSpec spec, const Dataset& answer_key);

  std::string id() const override;
  CompletionResponse Generate(const CompletionRequest& request) override;

  bool Knows(std::string_view problem_id) const;
  std::uint64_t calls() const { return calls_.load(); }

 private:
  struct Entry {
    std::string id;
    std::string answer;
  };

  const Entry* Find(std::string_view question) const;
  CompletionResponse AnswerPrompt(const CompletionRequest& request) const;
  CompletionResponse ConfidencePrompt(const CompletionRequest& request) const;

  MockModelSpec spec_;
  std::unordered_map<std::string, Entry> key_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace mpcal
