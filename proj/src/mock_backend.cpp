#include "mpcal/mock_backend.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mpcal/composer.hpp"
#include "mpcal/errors.hpp"
#include "mpcal/hashing.hpp"
#include "mpcal/phrases.hpp"
#include "mpcal/text.hpp"

namespace mpcal {

std::string_view ToString(ConfidenceBehavior b) {
  switch (b) {
    case ConfidenceBehavior::kHonest: return "honest";
    case ConfidenceBehavior::kOverconfident: return "overconfident";
    case ConfidenceBehavior::kUnderconfident: return "underconfident";
  }
  return "honest";
}

ConfidenceBehavior ParseConfidenceBehavior(std::string_view s) {
  std::string lower = text::ToLowerAscii(s);
  if (lower == "honest") return ConfidenceBehavior::kHonest;
  if (lower == "overconfident") return ConfidenceBehavior::kOverconfident;
  if (lower == "underconfident") return ConfidenceBehavior::kUnderconfident;
  throw UsageError("unknown confidence behavior \"" + std::string(s) + "\"");
}

MockBackend::MockBackend(MockModelSpec spec, const Dataset& answer_key) : spec_(std::move(spec)) {
  if (!(spec_.accuracy >= 0.0 && spec_.accuracy <= 1.0)) {
    throw UsageError("mock accuracy must lie in [0, 1]");
  }
  for (const Problem& p : answer_key.problems) {
    std::string answer = p.gold.front();
    if (p.format == Format::kMC) {
      auto letters = GoldLetters(p);
      if (!letters.empty()) answer = letters.front();
    }
    Entry e{p.id, std::move(answer)};
    // Registered both with and without the problem's own context so lookups
    // succeed whether or not the context was shared.
    key_.try_emplace(RenderQuestion(p, std::nullopt), e);
    key_.try_emplace(RenderQuestion(p, p.context), e);
  }
}

std::string MockBackend::id() const {
  std::ostringstream os;
  os.precision(17);
  os << "mock(accuracy=" << spec_.accuracy << ",seed=" << spec_.seed
     << ",behavior=" << ToString(spec_.confidence_behavior)
     << ",wrong=" << spec_.wrong_answer_text << ")";
  return os.str();
}

bool MockBackend::Knows(std::string_view problem_id) const {
  return UnitInterval(Mix64(spec_.seed ^ Fnv1a64(problem_id))) < spec_.accuracy;
}

const MockBackend::Entry* MockBackend::Find(std::string_view question) const {
  auto it = key_.find(std::string(text::Trim(question)));
  return it == key_.end() ? nullptr : &it->second;
}

CompletionResponse MockBackend::Generate(const CompletionRequest& request) {
  calls_.fetch_add(1);
  if (request.prompt.find(kCertaintyQuestion) != std::string::npos) {
    return ConfidencePrompt(request);
  }
  return AnswerPrompt(request);
}

namespace {

// Splits on spaces, each token after the first keeping its leading space.
std::vector<TokenLogprob> SpaceTokens(std::string_view s) {
  std::vector<TokenLogprob> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ' ' || s[i] == '\n') {
      out.push_back({std::string(s.substr(start, i - start)), 0.0, {}});
      start = i;
    }
  }
  return out;
}

}  // namespace

CompletionResponse MockBackend::AnswerPrompt(const CompletionRequest& request) const {
  std::string out;
  std::istringstream lines(request.prompt);
  std::string line;
  while (std::getline(lines, line)) {
    std::size_t colon = line.find(": ");
    if (colon == std::string::npos || colon == 0) continue;
    std::string_view number(line.data(), colon);
    if (number.find_first_not_of("0123456789") != std::string_view::npos) continue;
    // Numbering restarting at 1 means an exemplar came first; answer only
    // the final run.
    if (number == "1") out.clear();
    const Entry* e = Find(std::string_view(line).substr(colon + 2));
    std::string answer = (e != nullptr && Knows(e->id)) ? e->answer : spec_.wrong_answer_text;
    if (!out.empty()) out += '\n';
    out += std::string(number) + ": " + answer;
  }
  CompletionResponse r{out, std::nullopt, id()};
  if (request.logprob_request) r.token_logprobs = SpaceTokens(out);
  return r;
}

CompletionResponse MockBackend::ConfidencePrompt(const CompletionRequest& request) const {
  static constexpr std::string_view kQ = "Question: ";
  static constexpr std::string_view kA = ". Answer: ";
  std::string_view prompt = request.prompt;
  prompt = prompt.substr(0, prompt.find(kCertaintyQuestion));

  std::vector<TokenLogprob> tokens;
  std::string out;
  std::size_t slot = 0;
  for (std::size_t pos = prompt.find(kQ); pos != std::string_view::npos;) {
    std::size_t next = prompt.find(kQ, pos + kQ.size());
    std::string_view block = prompt.substr(pos + kQ.size(), next == std::string_view::npos
                                                                ? std::string_view::npos
                                                                : next - pos - kQ.size());
    std::size_t a = block.rfind(kA);
    std::string_view question = a == std::string_view::npos ? block : block.substr(0, a);
    const Entry* e = Find(question);

    bool sure = false;
    switch (spec_.confidence_behavior) {
      case ConfidenceBehavior::kHonest: sure = e != nullptr && Knows(e->id); break;
      case ConfidenceBehavior::kOverconfident: sure = true; break;
      case ConfidenceBehavior::kUnderconfident: sure = false; break;
    }
    const std::string key_id = e != nullptr ? e->id : std::string(question);
    const double slack = 1e-6 + 0.02 * UnitInterval(Mix64(spec_.seed ^ Fnv1a64(key_id) ^ 0x5eedc0de));
    const double p_chosen = 1.0 - slack;

    ++slot;
    std::string head = (slot > 1 ? " " : "") + std::to_string(slot) + ": I am";
    out += head;
    out += sure ? " sure" : " unsure";
    for (TokenLogprob& t : SpaceTokens(head)) tokens.push_back(std::move(t));
    TokenLogprob choice{sure ? " sure" : " unsure", std::log(p_chosen), {}};
    choice.top.push_back({choice.token, choice.logprob});
    choice.top.push_back({sure ? " unsure" : " sure", std::log(slack)});
    tokens.push_back(std::move(choice));
    pos = next;
  }
  CompletionResponse r{out, std::nullopt, id()};
  if (request.logprob_request) r.token_logprobs = std::move(tokens);
  return r;
}

}  // namespace mpcal
