#include "mpcal/data_model.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "mpcal/errors.hpp"
#include "mpcal/text.hpp"

namespace mpcal {

std::string_view ToString(Format f) { return f == Format::kQA ? "QA" : "MC"; }

std::string_view ToString(Setting s) {
  return s == Setting::kIndependent ? "independent" : "sequential";
}

Format ParseFormat(std::string_view s) {
  std::string lower = text::ToLowerAscii(s);
  if (lower == "qa") return Format::kQA;
  if (lower == "mc") return Format::kMC;
  throw DataError("unknown format \"" + std::string(s) + "\"");
}

Setting ParseSetting(std::string_view s) {
  std::string lower = text::ToLowerAscii(s);
  if (lower == "independent") return Setting::kIndependent;
  if (lower == "sequential") return Setting::kSequential;
  throw UsageError("unknown setting \"" + std::string(s) + "\"");
}

std::vector<std::string> GoldLetters(const Problem& problem) {
  std::vector<std::string> letters;
  if (problem.format != Format::kMC || !problem.choices) return letters;
  for (const std::string& g : problem.gold) {
    std::string want = text::ToLowerAscii(text::Trim(g));
    for (const Choice& c : *problem.choices) {
      if (text::ToLowerAscii(c.letter) == want ||
          text::ToLowerAscii(text::Trim(c.text)) == want) {
        if (std::find(letters.begin(), letters.end(), c.letter) == letters.end()) {
          letters.push_back(c.letter);
        }
      }
    }
  }
  return letters;
}

std::vector<std::string> ValidateProblem(const Problem& p) {
  std::vector<std::string> out;
  auto fail = [&](const std::string& msg) { out.push_back("problem \"" + p.id + "\": " + msg); };

  if (p.id.empty()) fail("empty id");
  if (p.gold.empty()) fail("gold is empty");
  for (const std::string& g : p.gold) {
    if (text::Trim(g).empty()) {
      fail("gold contains a blank entry");
      break;
    }
  }
  if (p.format == Format::kQA) {
    if (p.choices) fail("QA problem must not carry choices");
    return out;
  }
  if (!p.choices) {
    fail("MC problem has no choices");
    return out;
  }
  const auto& choices = *p.choices;
  if (choices.size() < 2 || choices.size() > 26) {
    fail("MC problem needs 2-26 choices, has " + std::to_string(choices.size()));
  }
  std::set<std::string> seen;
  bool letters_ok = true;
  for (const Choice& c : choices) {
    if (c.letter.size() != 1 || c.letter[0] < 'A' || c.letter[0] > 'Z') {
      fail("choice letter \"" + c.letter + "\" is not a single letter A-Z");
      letters_ok = false;
    } else if (!seen.insert(c.letter).second) {
      fail("duplicate choice letter \"" + c.letter + "\"");
      letters_ok = false;
    }
  }
  if (letters_ok && !p.gold.empty() && GoldLetters(p).empty()) {
    fail("no gold entry names a choice letter or choice text");
  }
  return out;
}

std::vector<std::string> Validate(const Dataset& dataset) {
  std::vector<std::string> out;
  std::unordered_set<std::string> ids;
  for (const Problem& p : dataset.problems) {
    auto v = ValidateProblem(p);
    out.insert(out.end(), v.begin(), v.end());
    if (!ids.insert(p.id).second) out.push_back("problem \"" + p.id + "\": duplicate id");
  }
  if (dataset.setting == Setting::kSequential) {
    std::unordered_set<std::string> closed;
    const std::string* current = nullptr;
    for (const Problem& p : dataset.problems) {
      if (!p.group_key) {
        out.push_back("problem \"" + p.id + "\": sequential dataset requires group_key");
        continue;
      }
      if (current != nullptr && *current == *p.group_key) continue;
      if (current != nullptr) closed.insert(*current);
      if (closed.contains(*p.group_key)) {
        out.push_back("problem \"" + p.id + "\": group_key \"" + *p.group_key +
                      "\" is not contiguous");
      }
      current = &*p.group_key;
    }
  }
  return out;
}

Json ProblemToJson(const Problem& p) {
  Json j;
  j["id"] = p.id;
  j["question"] = p.question;
  j["context"] = p.context ? Json(*p.context) : Json(nullptr);
  j["gold"] = p.gold;
  j["format"] = ToString(p.format);
  if (p.choices) {
    Json arr = Json::array();
    for (const Choice& c : *p.choices) arr.push_back(Json{{"letter", c.letter}, {"text", c.text}});
    j["choices"] = std::move(arr);
  } else {
    j["choices"] = nullptr;
  }
  j["group_key"] = p.group_key ? Json(*p.group_key) : Json(nullptr);
  return j;
}

namespace {

std::optional<std::string> OptionalString(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string("\"") + key + "\" must be a string or null");
  return it->get<std::string>();
}

const Json& Required(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing key \"") + key + "\"");
  return *it;
}

}  // namespace

Problem ProblemFromJson(const Json& j, bool lenient, std::string dataset_name) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  if (!lenient) {
    RejectUnknownKeys(j, {"id", "question", "context", "gold", "format", "choices", "group_key"},
                      "record");
  }
  Problem p;
  const Json& id = Required(j, "id");
  if (!id.is_string()) throw DataError("\"id\" must be a string");
  p.id = id.get<std::string>();
  const Json& question = Required(j, "question");
  if (!question.is_string()) throw DataError("\"question\" must be a string");
  p.question = question.get<std::string>();
  p.context = OptionalString(j, "context");
  const Json& gold = Required(j, "gold");
  if (!gold.is_array()) throw DataError("\"gold\" must be an array of strings");
  for (const Json& g : gold) {
    if (!g.is_string()) throw DataError("\"gold\" must be an array of strings");
    p.gold.push_back(g.get<std::string>());
  }
  const Json& format = Required(j, "format");
  if (!format.is_string()) throw DataError("\"format\" must be \"QA\" or \"MC\"");
  p.format = ParseFormat(format.get<std::string>());
  if (auto it = j.find("choices"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("\"choices\" must be an array or null");
    std::vector<Choice> choices;
    for (const Json& c : *it) {
      if (!c.is_object()) throw DataError("choice must be an object");
      if (!lenient) RejectUnknownKeys(c, {"letter", "text"}, "choice");
      const Json& letter = Required(c, "letter");
      const Json& txt = Required(c, "text");
      if (!letter.is_string() || !txt.is_string()) {
        throw DataError("choice letter and text must be strings");
      }
      choices.push_back({letter.get<std::string>(), txt.get<std::string>()});
    }
    p.choices = std::move(choices);
  }
  p.group_key = OptionalString(j, "group_key");
  p.dataset = std::move(dataset_name);
  return p;
}

Dataset LoadDataset(const std::filesystem::path& path, Setting setting,
                    const LoadOptions& options) {
  Dataset ds;
  ds.name = options.name.value_or(path.stem().string());
  ds.setting = setting;
  std::unordered_map<std::string, std::size_t> line_of;
  ForEachJsonLine(path, [&](std::size_t line_no, const Json& j) {
    Problem p = ProblemFromJson(j, options.lenient, ds.name);
    if (auto v = ValidateProblem(p); !v.empty()) throw DataError(v.front());
    if (auto [it, inserted] = line_of.emplace(p.id, line_no); !inserted) {
      throw DataError("duplicate id \"" + p.id + "\" (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    ds.problems.push_back(std::move(p));
  });
  if (auto violations = Validate(ds); !violations.empty()) {
    throw DataError(path.string() + ": " + violations.front());
  }
  return ds;
}

Dataset ReadDatasetUnchecked(const std::filesystem::path& path, Setting setting,
                             const LoadOptions& options) {
  Dataset ds;
  ds.name = options.name.value_or(path.stem().string());
  ds.setting = setting;
  ForEachJsonLine(path, [&](std::size_t, const Json& j) {
    ds.problems.push_back(ProblemFromJson(j, options.lenient, ds.name));
  });
  return ds;
}

std::string SerializeDataset(const Dataset& dataset) {
  std::string out;
  for (const Problem& p : dataset.problems) {
    out += DumpLine(ProblemToJson(p));
    out += '\n';
  }
  return out;
}

}  // namespace mpcal
