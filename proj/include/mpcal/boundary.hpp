#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpcal/composer.hpp"
#include "mpcal/data_model.hpp"
#include "mpcal/model_client.hpp"

namespace mpcal {

enum class Confidence { kSure, kUnsure };

struct ConfidenceLabel {
  Confidence value = Confidence::kUnsure;

  static ConfidenceLabel FromMatch(bool matched) {
    return {matched ? Confidence::kSure : Confidence::kUnsure};
  }
  // Exact phrase only; nullopt for anything else.
  static std::optional<ConfidenceLabel> FromRendered(std::string_view phrase);

  std::string_view rendered() const;
  bool sure() const { return value == Confidence::kSure; }
  bool operator==(const ConfidenceLabel&) const = default;
};

struct ParsedAnswers {
  std::vector<std::string> answers;  // always exactly n entries
  std::vector<std::string> parse_warnings;
};

// Byte range of slot k's content (text after the "k:" / "k." marker, up to
// the next located marker or the end of the generation).
struct SlotSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Locates markers 1..n in order. Markers at the start of a line are
// preferred; otherwise an inline "k:" preceded by whitespace, then an
// inline "k." not followed by a digit. Unfound markers are nullopt.
std::vector<std::optional<SlotSpan>> LocateSlots(std::string_view generation, std::size_t n);

// Splits a numbered multi-answer generation into n trimmed slots. For MC the
// slot is reduced to a choice letter via ExtractChoice; `choices` supplies
// the per-slot options (when empty, any standalone letter A-Z is accepted).
ParsedAnswers ParseAnswers(std::string_view generation, std::size_t n, Format format,
                           std::span<const std::vector<Choice>> choices = {});

// Per-member format and choices taken from the MultiProblem.
ParsedAnswers ParseAnswers(std::string_view generation, const MultiProblem& multi);

// A standalone choice letter if one appears (a bare letter, then "(X)", then
// a free-standing capital), otherwise the letter of the longest choice text
// found token-bounded in the slot (case-insensitive), otherwise nullopt.
std::optional<std::string> ExtractChoice(std::string_view slot_text,
                                         std::span<const Choice> choices);

// QA: numeric golds compare the last number in `predicted` as an exact
// decimal; other golds match on normalized equality or token-bounded
// containment. MC: the extracted letter must equal a gold letter.
bool MatchAnswer(std::string_view predicted, std::span<const std::string> gold, Format format);

// Uses the problem's choices to resolve MC golds given as choice text.
bool MatchAnswer(std::string_view predicted, const Problem& problem);

struct BoundaryRecord {
  std::string multi_id;
  ParsedAnswers parsed;
  std::vector<bool> matches;
  std::vector<ConfidenceLabel> labels;

  bool operator==(const BoundaryRecord& o) const {
    return multi_id == o.multi_id && parsed.answers == o.parsed.answers &&
           matches == o.matches && labels == o.labels;
  }
};

// Matches parsed answers against the members and labels each slot.
BoundaryRecord LabelGeneration(const MultiProblem& multi, std::string_view generation);

struct ProbeOptions {
  int max_tokens = 512;
  std::size_t parallelism = 4;
};

// Sends every MultiProblem's rendered prompt through the client. Throws
// BackendError annotated with the failing MultiProblem's index.
std::vector<BoundaryRecord> Probe(std::span<const MultiProblem> multis, ModelClient& client,
                                  const ProbeOptions& options = {});

Json BoundaryRecordToJson(const BoundaryRecord& record);
BoundaryRecord BoundaryRecordFromJson(const Json& j);
std::string SerializeBoundaryRecords(std::span<const BoundaryRecord> records);
std::vector<BoundaryRecord> LoadBoundaryRecords(const std::filesystem::path& path);

}  // namespace mpcal
