#include "mpcal/boundary.hpp"

#include <cctype>

#include "mpcal/errors.hpp"
#include "mpcal/phrases.hpp"
#include "mpcal/text.hpp"

namespace mpcal {
namespace {

bool IsAlnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool IsBlank(char c) { return c == ' ' || c == '\t' || c == '\r'; }
bool IsSpace(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

enum class Tier { kLineStart, kInlineColon, kInlineDot };

// Position of marker `number` at or after `from` in `tier`; returns the
// (marker start, content start) pair.
std::optional<std::pair<std::size_t, std::size_t>> FindMarker(std::string_view s,
                                                              std::string_view number,
                                                              std::size_t from, Tier tier) {
  for (std::size_t pos = s.find(number, from); pos != std::string_view::npos;
       pos = s.find(number, pos + 1)) {
    std::size_t after = pos + number.size();
    if (after >= s.size()) continue;
    const char sep = s[after];
    if (sep != ':' && sep != '.') continue;
    if (sep == '.' && after + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[after + 1]))) {
      continue;
    }
    bool line_start = true;
    for (std::size_t i = pos; i > 0; --i) {
      if (s[i - 1] == '\n') break;
      if (!IsBlank(s[i - 1])) {
        line_start = false;
        break;
      }
    }
    const bool spaced = pos == 0 || IsSpace(s[pos - 1]);
    bool ok = false;
    switch (tier) {
      case Tier::kLineStart: ok = line_start; break;
      case Tier::kInlineColon: ok = spaced && sep == ':'; break;
      case Tier::kInlineDot: ok = spaced && sep == '.'; break;
    }
    if (ok) return std::pair{pos, after + 1};
  }
  return std::nullopt;
}

bool IsLetterInSet(char c, std::span<const Choice> choices) {
  if (c < 'A' || c > 'Z') return false;
  if (choices.empty()) return true;
  for (const Choice& ch : choices) {
    if (ch.letter.size() == 1 && ch.letter[0] == c) return true;
  }
  return false;
}

std::string StripOuterPunct(std::string_view s) {
  s = text::Trim(s);
  while (!s.empty() && !IsAlnum(s.front())) s.remove_prefix(1);
  while (!s.empty() && !IsAlnum(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> LetterGolds(std::span<const std::string> gold) {
  std::vector<std::string> out;
  for (const std::string& g : gold) {
    std::string t = StripOuterPunct(g);
    if (t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0]))) {
      out.push_back(std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])))));
    }
  }
  return out;
}

bool MatchQA(std::string_view predicted, std::span<const std::string> gold) {
  if (text::Trim(predicted).empty()) return false;
  const std::string np = text::NormalizeAnswer(predicted);
  std::optional<std::string> last_number;
  bool last_number_done = false;
  for (const std::string& g : gold) {
    if (auto canon = text::CanonicalDecimal(g)) {
      if (!last_number_done) {
        last_number = text::LastNumber(predicted);
        last_number_done = true;
      }
      if (last_number == canon) return true;
      continue;
    }
    const std::string ng = text::NormalizeAnswer(g);
    if (ng.empty()) {
      // Gold made only of punctuation or an article: compare raw text.
      if (text::ToLowerAscii(text::Trim(predicted)) == text::ToLowerAscii(text::Trim(g))) return true;
      continue;
    }
    if (np == ng || text::ContainsTokenBounded(np, ng)) return true;
  }
  return false;
}

bool MatchMC(std::string_view predicted, std::span<const std::string> gold_letters,
             std::span<const Choice> choices) {
  auto letter = ExtractChoice(predicted, choices);
  if (!letter) return false;
  for (const std::string& g : gold_letters) {
    if (g == *letter) return true;
  }
  return false;
}

}  // namespace

std::optional<ConfidenceLabel> ConfidenceLabel::FromRendered(std::string_view phrase) {
  if (phrase == kSurePhrase) return ConfidenceLabel{Confidence::kSure};
  if (phrase == kUnsurePhrase) return ConfidenceLabel{Confidence::kUnsure};
  return std::nullopt;
}

std::string_view ConfidenceLabel::rendered() const {
  return value == Confidence::kSure ? kSurePhrase : kUnsurePhrase;
}

std::vector<std::optional<SlotSpan>> LocateSlots(std::string_view generation, std::size_t n) {
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> markers(n);
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::string number = std::to_string(k + 1);
    for (Tier tier : {Tier::kLineStart, Tier::kInlineColon, Tier::kInlineDot}) {
      if (auto m = FindMarker(generation, number, cursor, tier)) {
        markers[k] = m;
        cursor = m->second;
        break;
      }
    }
  }
  std::vector<std::optional<SlotSpan>> slots(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!markers[k]) continue;
    std::size_t end = generation.size();
    for (std::size_t j = k + 1; j < n; ++j) {
      if (markers[j]) {
        end = markers[j]->first;
        break;
      }
    }
    slots[k] = SlotSpan{markers[k]->second, std::max(end, markers[k]->second)};
  }
  return slots;
}

ParsedAnswers ParseAnswers(std::string_view generation, std::size_t n, Format format,
                           std::span<const std::vector<Choice>> choices) {
  if (n == 0) throw UsageError("n must be at least 1");
  ParsedAnswers out;
  out.answers.resize(n);
  auto slots = LocateSlots(generation, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::string label = "slot " + std::to_string(k + 1);
    if (!slots[k]) {
      out.parse_warnings.push_back(label + ": no marker found");
      continue;
    }
    std::string_view body =
        text::Trim(generation.substr(slots[k]->begin, slots[k]->end - slots[k]->begin));
    if (body.empty()) {
      out.parse_warnings.push_back(label + ": empty answer");
      continue;
    }
    if (format == Format::kMC) {
      std::span<const Choice> opts = k < choices.size() ? std::span<const Choice>(choices[k])
                                                        : std::span<const Choice>{};
      if (auto letter = ExtractChoice(body, opts)) {
        out.answers[k] = *letter;
      } else {
        out.parse_warnings.push_back(label + ": no choice recognized");
      }
      continue;
    }
    out.answers[k] = std::string(body);
  }
  return out;
}

ParsedAnswers ParseAnswers(std::string_view generation, const MultiProblem& multi) {
  const std::size_t n = multi.n();
  ParsedAnswers qa = ParseAnswers(generation, n, Format::kQA);
  for (std::size_t k = 0; k < n; ++k) {
    const Problem& p = multi.members[k];
    if (p.format != Format::kMC || qa.answers[k].empty()) continue;
    std::span<const Choice> opts = p.choices ? std::span<const Choice>(*p.choices)
                                             : std::span<const Choice>{};
    if (auto letter = ExtractChoice(qa.answers[k], opts)) {
      qa.answers[k] = *letter;
    } else {
      qa.answers[k].clear();
      qa.parse_warnings.push_back("slot " + std::to_string(k + 1) + ": no choice recognized");
    }
  }
  return qa;
}

std::optional<std::string> ExtractChoice(std::string_view slot_text,
                                         std::span<const Choice> choices) {
  const std::string bare = StripOuterPunct(slot_text);
  if (bare.size() == 1 && IsLetterInSet(bare[0], choices)) return bare;

  const std::string_view s = slot_text;
  // "(B)" or "[B]"
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if ((s[i - 1] == '(' && s[i + 1] == ')') || (s[i - 1] == '[' && s[i + 1] == ']')) {
      if (IsLetterInSet(s[i], choices)) return std::string(1, s[i]);
    }
  }
  // Free-standing capital. "A" and "I" directly followed by a lowercase word
  // are English words, not options.
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!IsLetterInSet(s[i], choices)) continue;
    if (i > 0 && IsAlnum(s[i - 1])) continue;
    if (i + 1 < s.size() && IsAlnum(s[i + 1])) continue;
    if ((s[i] == 'A' || s[i] == 'I') && i + 2 < s.size() && s[i + 1] == ' ' &&
        std::islower(static_cast<unsigned char>(s[i + 2]))) {
      continue;
    }
    if (i > 0 && s[i - 1] == '\'') continue;  // contractions like "it's"
    return std::string(1, s[i]);
  }

  const std::string normalized = text::NormalizeAnswer(slot_text);
  const Choice* best = nullptr;
  std::size_t best_len = 0;
  for (const Choice& c : choices) {
    const std::string nc = text::NormalizeAnswer(c.text);
    if (nc.size() > best_len && text::ContainsTokenBounded(normalized, nc)) {
      best = &c;
      best_len = nc.size();
    }
  }
  if (best != nullptr) return best->letter;
  return std::nullopt;
}

bool MatchAnswer(std::string_view predicted, std::span<const std::string> gold, Format format) {
  if (gold.empty()) throw UsageError("gold must not be empty");
  if (format == Format::kQA) return MatchQA(predicted, gold);
  return MatchMC(predicted, LetterGolds(gold), {});
}

bool MatchAnswer(std::string_view predicted, const Problem& problem) {
  if (problem.format == Format::kQA) return MatchQA(predicted, problem.gold);
  if (!problem.choices) return MatchAnswer(predicted, problem.gold, Format::kMC);
  return MatchMC(predicted, GoldLetters(problem), *problem.choices);
}

BoundaryRecord LabelGeneration(const MultiProblem& multi, std::string_view generation) {
  BoundaryRecord r;
  r.multi_id = multi.id;
  r.parsed = ParseAnswers(generation, multi);
  for (std::size_t k = 0; k < multi.n(); ++k) {
    const bool matched = MatchAnswer(r.parsed.answers[k], multi.members[k]);
    r.matches.push_back(matched);
    r.labels.push_back(ConfidenceLabel::FromMatch(matched));
  }
  return r;
}

std::vector<BoundaryRecord> Probe(std::span<const MultiProblem> multis, ModelClient& client,
                                  const ProbeOptions& options) {
  std::vector<CompletionRequest> requests;
  requests.reserve(multis.size());
  for (const MultiProblem& m : multis) {
    requests.push_back({m.prompt, options.max_tokens, 0.0, false});
  }
  auto results = client.CompleteBatch(requests, options.parallelism);
  std::vector<BoundaryRecord> records;
  records.reserve(multis.size());
  for (std::size_t i = 0; i < multis.size(); ++i) {
    if (!results[i].ok()) {
      const BackendError& e = *results[i].error;
      throw BackendError(e.kind(),
                         "multi-problem #" + std::to_string(i) + " (" + multis[i].id + "): " + e.what(),
                         e.attempts(), e.raw_body());
    }
    records.push_back(LabelGeneration(multis[i], results[i].response->text));
  }
  return records;
}

Json BoundaryRecordToJson(const BoundaryRecord& r) {
  Json j;
  j["multi_id"] = r.multi_id;
  j["answers"] = r.parsed.answers;
  Json matches = Json::array();
  for (bool m : r.matches) matches.push_back(m);
  j["matches"] = std::move(matches);
  Json labels = Json::array();
  for (const ConfidenceLabel& l : r.labels) labels.push_back(l.rendered());
  j["labels"] = std::move(labels);
  return j;
}

BoundaryRecord BoundaryRecordFromJson(const Json& j) {
  RejectUnknownKeys(j, {"multi_id", "answers", "matches", "labels"}, "boundary record");
  BoundaryRecord r;
  r.multi_id = j.at("multi_id").get<std::string>();
  r.parsed.answers = j.at("answers").get<std::vector<std::string>>();
  for (const Json& m : j.at("matches")) r.matches.push_back(m.get<bool>());
  for (const Json& l : j.at("labels")) {
    auto label = ConfidenceLabel::FromRendered(l.get<std::string>());
    if (!label) throw DataError("unrecognized confidence label \"" + l.get<std::string>() + "\"");
    r.labels.push_back(*label);
  }
  if (r.matches.size() != r.parsed.answers.size() || r.labels.size() != r.matches.size()) {
    throw DataError("boundary record " + r.multi_id + ": answers/matches/labels lengths differ");
  }
  for (std::size_t i = 0; i < r.matches.size(); ++i) {
    if (r.labels[i].sure() != r.matches[i]) {
      throw DataError("boundary record " + r.multi_id + ": label " + std::to_string(i + 1) +
                      " contradicts its match");
    }
  }
  return r;
}

std::string SerializeBoundaryRecords(std::span<const BoundaryRecord> records) {
  std::string out;
  for (const BoundaryRecord& r : records) {
    out += DumpLine(BoundaryRecordToJson(r));
    out += '\n';
  }
  return out;
}

std::vector<BoundaryRecord> LoadBoundaryRecords(const std::filesystem::path& path) {
  std::vector<BoundaryRecord> out;
  ForEachJsonLine(path, [&](std::size_t, const Json& j) { out.push_back(BoundaryRecordFromJson(j)); });
  return out;
}

}  // namespace mpcal
