#include "mpcal/composer.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <random>
#include <unordered_map>

#include "mpcal/errors.hpp"
#include "mpcal/text.hpp"

namespace mpcal {
namespace {

constexpr char kDefaultLayout[] =
    "Answer each of the following questions.\n"
    "{exemplar}\n"
    "{context}\n"
    "{questions}\n"
    "Reply with one line per question, in order. Begin each line with the question number "
    "followed by a colon, then give only the answer.\n";

void ReplaceAll(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

// Uniform integer in [0, bound) by rejection, bound >= 1.
std::uint64_t UniformBelow(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

std::string MultiId(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mp%05zu", index);
  return buf;
}

std::optional<std::string> CommonContext(const std::vector<Problem>& members) {
  if (members.empty() || !members.front().context) return std::nullopt;
  for (const Problem& p : members) {
    if (p.context != members.front().context) return std::nullopt;
  }
  if (text::Trim(*members.front().context).empty()) return std::nullopt;
  return members.front().context;
}

}  // namespace

PromptTemplate PromptTemplate::Default() {
  PromptTemplate t;
  t.layout = kDefaultLayout;
  return t;
}

PromptTemplate PromptTemplate::FromFile(const std::filesystem::path& path) {
  PromptTemplate t;
  t.layout = ReadFile(path);
  if (t.layout.find("{questions}") == std::string::npos) {
    throw DataError(path.string() + ": template has no {questions} placeholder");
  }
  return t;
}

std::vector<std::string> MultiProblem::member_ids() const {
  std::vector<std::string> ids;
  ids.reserve(members.size());
  for (const Problem& p : members) ids.push_back(p.id);
  return ids;
}

std::string RenderQuestion(const Problem& p, const std::optional<std::string>& shared_context) {
  std::string q = p.question;
  // Context that is not shared travels with its own question.
  if (p.context && !text::Trim(*p.context).empty() && p.context != shared_context) {
    q = *p.context + " " + q;
  }
  if (p.format == Format::kMC && p.choices) {
    for (const Choice& c : *p.choices) q += " (" + c.letter + ") " + c.text;
  }
  return q;
}

std::string RenderPrompt(const MultiProblem& multi, const PromptTemplate& tmpl) {
  std::string questions;
  for (std::size_t i = 0; i < multi.members.size(); ++i) {
    const std::string q = RenderQuestion(multi.members[i], multi.shared_context);
    std::string item = tmpl.item_format;
    ReplaceAll(item, "{index}", std::to_string(i + 1));
    ReplaceAll(item, "{question}", q);
    if (i > 0) questions += '\n';
    questions += item;
  }

  std::string context;
  if (multi.shared_context) {
    context = tmpl.context_format;
    ReplaceAll(context, "{context}", *multi.shared_context);
  }
  const std::string exemplar = tmpl.exemplar.value_or("");

  std::string out;
  std::string_view layout = tmpl.layout;
  while (!layout.empty()) {
    std::size_t eol = layout.find('\n');
    std::string_view line = layout.substr(0, eol);
    bool has_newline = eol != std::string_view::npos;
    layout = has_newline ? layout.substr(eol + 1) : std::string_view{};

    if ((line == "{exemplar}" && exemplar.empty()) || (line == "{context}" && context.empty())) {
      continue;
    }
    std::string rendered(line);
    // Substituted values may themselves contain braces, so fill each
    // placeholder at most once per line in a fixed order.
    auto fill = [&](std::string_view key, const std::string& value) {
      if (std::size_t pos = rendered.find(key); pos != std::string::npos) {
        rendered.replace(pos, key.size(), value);
      }
    };
    fill("{exemplar}", exemplar);
    fill("{context}", context);
    fill("{questions}", questions);
    out += rendered;
    if (has_newline) out += '\n';
  }
  return out;
}

std::vector<std::size_t> SeededPermutation(std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> perm(size);
  for (std::size_t i = 0; i < size; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = size; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(UniformBelow(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<MultiProblem> Compose(const Dataset& dataset, std::size_t n, std::uint64_t seed,
                                  const PromptTemplate& tmpl) {
  if (n == 0) throw UsageError("n must be at least 1");
  std::vector<MultiProblem> out;

  auto emit = [&](std::vector<Problem> members) {
    MultiProblem m;
    m.id = MultiId(out.size());
    m.setting = dataset.setting;
    m.members = std::move(members);
    if (dataset.setting == Setting::kSequential) m.shared_context = CommonContext(m.members);
    m.prompt = RenderPrompt(m, tmpl);
    out.push_back(std::move(m));
  };

  const auto& problems = dataset.problems;
  if (dataset.setting == Setting::kIndependent) {
    std::vector<std::size_t> order = SeededPermutation(problems.size(), seed);
    for (std::size_t start = 0; start < order.size(); start += n) {
      std::vector<Problem> members;
      for (std::size_t k = start; k < std::min(start + n, order.size()); ++k) {
        members.push_back(problems[order[k]]);
      }
      emit(std::move(members));
    }
    return out;
  }

  std::size_t i = 0;
  while (i < problems.size()) {
    std::size_t end = i;
    while (end < problems.size() && problems[end].group_key == problems[i].group_key) ++end;
    for (std::size_t start = i; start < end; start += n) {
      emit({problems.begin() + static_cast<std::ptrdiff_t>(start),
            problems.begin() + static_cast<std::ptrdiff_t>(std::min(start + n, end))});
    }
    i = end;
  }
  return out;
}

Json MultiProblemToJson(const MultiProblem& multi) {
  Json j;
  j["multi_id"] = multi.id;
  j["setting"] = ToString(multi.setting);
  j["member_ids"] = multi.member_ids();
  j["shared_context"] = multi.shared_context ? Json(*multi.shared_context) : Json(nullptr);
  j["prompt"] = multi.prompt;
  return j;
}

std::string SerializeCompositions(const std::vector<MultiProblem>& multis) {
  std::string out;
  for (const MultiProblem& m : multis) {
    out += DumpLine(MultiProblemToJson(m));
    out += '\n';
  }
  return out;
}

std::vector<MultiProblem> LoadCompositions(const std::filesystem::path& path,
                                           const Dataset& dataset) {
  std::unordered_map<std::string, const Problem*> by_id;
  for (const Problem& p : dataset.problems) by_id.emplace(p.id, &p);
  std::vector<MultiProblem> out;
  ForEachJsonLine(path, [&](std::size_t, const Json& j) {
    RejectUnknownKeys(j, {"multi_id", "setting", "member_ids", "shared_context", "prompt"},
                      "composition");
    MultiProblem m;
    m.id = j.at("multi_id").get<std::string>();
    m.setting = ParseSetting(j.at("setting").get<std::string>());
    for (const Json& id : j.at("member_ids")) {
      auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) {
        throw DataError("composition " + m.id + " names unknown problem \"" +
                        id.get<std::string>() + "\"");
      }
      m.members.push_back(*it->second);
    }
    if (m.members.empty()) throw DataError("composition " + m.id + " has no members");
    if (const Json& ctx = j.at("shared_context"); !ctx.is_null()) {
      m.shared_context = ctx.get<std::string>();
    }
    m.prompt = j.at("prompt").get<std::string>();
    out.push_back(std::move(m));
  });
  return out;
}

}  // namespace mpcal
