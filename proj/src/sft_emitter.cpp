#include "mpcal/sft_emitter.hpp"

#include "mpcal/errors.hpp"
#include "mpcal/phrases.hpp"
#include "mpcal/text.hpp"

namespace mpcal {

std::string_view ToString(TuningKind kind) {
  return kind == TuningKind::kMultQA ? "qa" : "qa-conf";
}

TuningKind ParseStage(std::string_view s) {
  if (s == "qa") return TuningKind::kMultQA;
  if (s == "qa-conf") return TuningKind::kMultQAC;
  throw UsageError("unknown stage \"" + std::string(s) + "\" (expected qa or qa-conf)");
}

AnswerSource ParseAnswerSource(std::string_view s) {
  if (s == "model") return AnswerSource::kModelAnswers;
  if (s == "gold") return AnswerSource::kGoldAnswers;
  throw UsageError("unknown answer source \"" + std::string(s) + "\" (expected model or gold)");
}

std::string_view ToString(AnswerSource s) {
  return s == AnswerSource::kModelAnswers ? "model" : "gold";
}

TuningRecord BuildMultQA(const MultiProblem& multi) {
  TuningRecord r;
  r.kind = TuningKind::kMultQA;
  r.input = multi.prompt;
  for (std::size_t k = 0; k < multi.n(); ++k) {
    if (k > 0) r.output += '\n';
    r.output += std::to_string(k + 1) + ": " + multi.members[k].gold.front();
  }
  r.source_ids = multi.member_ids();
  return r;
}

std::string RenderConfidencePrompt(const MultiProblem& multi,
                                   std::span<const std::string> answers) {
  std::string in;
  if (multi.shared_context) in += *multi.shared_context + "\n";
  for (std::size_t k = 0; k < multi.n(); ++k) {
    in += "Question: " + RenderQuestion(multi.members[k], multi.shared_context) +
          ". Answer: " + (k < answers.size() ? answers[k] : std::string()) + ". ";
  }
  in += kCertaintyQuestion;
  return in;
}

TuningRecord BuildMultQAConf(const MultiProblem& multi, const BoundaryRecord& record,
                             AnswerSource source) {
  const std::size_t n = multi.n();
  if (record.labels.size() != n || record.parsed.answers.size() != n) {
    throw DataError("boundary record " + record.multi_id + " has " +
                    std::to_string(record.labels.size()) + " labels for " + std::to_string(n) +
                    " questions");
  }
  std::vector<std::string> answers;
  answers.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    answers.push_back(source == AnswerSource::kModelAnswers ? record.parsed.answers[k]
                                                            : multi.members[k].gold.front());
  }
  TuningRecord r;
  r.kind = TuningKind::kMultQAC;
  r.input = RenderConfidencePrompt(multi, answers);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) r.output += ' ';
    r.output += std::to_string(k + 1) + ": ";
    r.output += record.labels[k].rendered();
  }
  r.source_ids = multi.member_ids();
  return r;
}

std::string SerializeTuningRecords(std::span<const TuningRecord> records, TuningKind stage) {
  std::string out;
  for (const TuningRecord& r : records) {
    if (r.kind != stage) {
      throw DataError("stage " + std::string(ToString(stage)) + " cannot hold a " +
                      std::string(ToString(r.kind)) + " record");
    }
    Json j;
    j["input"] = r.input;
    j["output"] = r.output;
    j["source_ids"] = r.source_ids;
    out += DumpLine(j);
    out += '\n';
  }
  return out;
}

std::size_t EmitTuningRecords(std::span<const TuningRecord> records, TuningKind stage,
                              const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeTuningRecords(records, stage));
  return records.size();
}

std::vector<TuningRecord> LoadTuningRecords(const std::filesystem::path& path, TuningKind stage) {
  std::vector<TuningRecord> out;
  ForEachJsonLine(path, [&](std::size_t, const Json& j) {
    RejectUnknownKeys(j, {"input", "output", "source_ids"}, "tuning record");
    TuningRecord r;
    r.kind = stage;
    r.input = j.at("input").get<std::string>();
    r.output = j.at("output").get<std::string>();
    r.source_ids = j.at("source_ids").get<std::vector<std::string>>();
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace mpcal
