#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mpcal/boundary.hpp"
#include "mpcal/composer.hpp"

namespace mpcal {

// Stage 1 teaches numbered answers, stage 2 teaches numbered confidence.
enum class TuningKind { kMultQA, kMultQAC };

std::string_view ToString(TuningKind kind);
// "qa" or "qa-conf".
TuningKind ParseStage(std::string_view s);

struct TuningRecord {
  std::string input;
  std::string output;
  TuningKind kind = TuningKind::kMultQA;
  std::vector<std::string> source_ids;

  bool operator==(const TuningRecord&) const = default;
};

// Which answer the confidence record shows next to each question.
enum class AnswerSource { kModelAnswers, kGoldAnswers };

AnswerSource ParseAnswerSource(std::string_view s);
std::string_view ToString(AnswerSource s);

// input = the rendered multi-question prompt; output = "1: a1\n...\nn: an"
// with each member's first gold answer.
TuningRecord BuildMultQA(const MultiProblem& multi);

// "Question: <q>. Answer: <a>." per member (space separated, shared context
// once up front), then the certainty question; output =
// "1: <c1> 2: <c2> ... n: <cn>". Throws DataError if the record's length
// differs from the MultiProblem's n.
TuningRecord BuildMultQAConf(const MultiProblem& multi, const BoundaryRecord& record,
                             AnswerSource source = AnswerSource::kModelAnswers);

// The confidence-elicitation prompt alone (no labels needed).
std::string RenderConfidencePrompt(const MultiProblem& multi,
                                   std::span<const std::string> answers);

// One {"input","output","source_ids"} object per line. Throws DataError
// if any record's kind differs from `stage`. Returns the line count.
std::size_t EmitTuningRecords(std::span<const TuningRecord> records, TuningKind stage,
                              const std::filesystem::path& path);
std::string SerializeTuningRecords(std::span<const TuningRecord> records, TuningKind stage);
std::vector<TuningRecord> LoadTuningRecords(const std::filesystem::path& path, TuningKind stage);

}  // namespace mpcal
