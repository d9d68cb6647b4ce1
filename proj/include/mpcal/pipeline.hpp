#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpcal/boundary.hpp"
#include "mpcal/composer.hpp"
#include "mpcal/data_model.hpp"
#include "mpcal/metrics.hpp"
#include "mpcal/mock_backend.hpp"
#include "mpcal/model_client.hpp"
#include "mpcal/openai_backend.hpp"
#include "mpcal/sft_emitter.hpp"

namespace mpcal {

// Canonical stage order. Dataset ingestion happens on every run.
enum class Stage { kCompose, kProbe, kEmit, kEvaluate, kReport };

inline constexpr Stage kAllStages[] = {Stage::kCompose, Stage::kProbe, Stage::kEmit,
                                       Stage::kEvaluate, Stage::kReport};

std::string_view ToString(Stage s);
Stage ParsePipelineStage(std::string_view s);

// Artifact file names inside the output directory.
namespace artifacts {
inline constexpr char kCompositions[] = "compositions.jsonl";
inline constexpr char kBoundary[] = "boundary.jsonl";
inline constexpr char kStage1[] = "stage1_multqa.jsonl";
inline constexpr char kStage2[] = "stage2_multqa_conf.jsonl";
inline constexpr char kPredictions[] = "predictions.jsonl";
inline constexpr char kReportJson[] = "report.json";
inline constexpr char kReportText[] = "report.txt";
inline constexpr char kBinsCsv[] = "bins.csv";
inline constexpr char kManifest[] = "manifest.json";
}  // namespace artifacts

struct BackendSpec {
  enum class Type { kMock, kOpenAI };
  Type type = Type::kMock;
  MockModelSpec mock;
  OpenAIBackendOptions remote;
};

std::shared_ptr<Backend> MakeBackend(const BackendSpec& spec, const Dataset& dataset);

struct RunConfig {
  std::filesystem::path dataset;
  Setting setting = Setting::kIndependent;
  bool lenient = false;
  std::size_t n = 3;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> template_path;
  BackendSpec backend;
  std::filesystem::path output_dir;
  std::vector<Stage> stages{std::begin(kAllStages), std::end(kAllStages)};
  std::size_t parallelism = 4;
  int max_tokens = 512;
  std::optional<std::filesystem::path> cache_dir;
  AnswerSource qa_source = AnswerSource::kModelAnswers;
  bool request_logprobs = true;
  std::size_t bins = 10;
  ConfidenceTokens confidence_tokens;
  int retry_attempts = 3;
};

// Throws UsageError naming the first broken rule: n >= 1, bins >= 1,
// parallelism >= 1, stages a non-empty prefix of the canonical order,
// output directory set.
void ValidateRunConfig(const RunConfig& config);

// Keys: dataset, setting, lenient, n, seed, template, backend{...},
// output_dir, stages, parallelism, max_tokens, cache_dir, qa_source,
// request_logprobs, bins, confidence_tokens{sure,unsure}, retry_attempts.
// Missing keys keep their defaults; unknown keys are rejected. Relative
// paths resolve against the config file's directory.
RunConfig RunConfigFromJson(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig LoadRunConfig(const std::filesystem::path& path);

// Output-affecting settings only; locations (dataset/template/output/cache
// paths) are replaced by content hashes in the manifest.
Json RunConfigContent(const RunConfig& config);

struct RunSummary {
  std::vector<Stage> executed;
  std::vector<Stage> skipped;
  std::uint64_t backend_calls = 0;
  std::optional<CalibrationReport> report;
  std::filesystem::path manifest;
};

// Runs the requested stages in order, persisting each stage's artifacts and
// updating the manifest after every stage. A stage whose fingerprint and
// artifact checksums already match the manifest is skipped. A failing stage
// rethrows with the stage name prefixed; earlier artifacts stay in place.
RunSummary Run(const RunConfig& config);

// Building blocks shared by Run and the individual CLI subcommands.

// Records for one tuning stage; boundary records are matched by multi_id.
std::vector<TuningRecord> BuildStageRecords(std::span<const MultiProblem> multis,
                                            std::span<const BoundaryRecord> boundary,
                                            TuningKind kind, AnswerSource qa_source);

struct ElicitOptions {
  int max_tokens = 512;
  std::size_t parallelism = 4;
  bool request_logprobs = true;
  ConfidenceTokens tokens;
};

struct ElicitResult {
  std::vector<PredictionRecord> predictions;
  // Slots with neither a confidence phrase nor usable logprobs; scored as
  // "I am unsure" with confidence 0.
  std::size_t unparsed = 0;
};

// Asks the model for per-question confidence about its own probed answers
// and pairs each slot with its correctness from the boundary record.
ElicitResult ElicitConfidence(std::span<const MultiProblem> multis,
                              std::span<const BoundaryRecord> boundary, ModelClient& client,
                              const ElicitOptions& options);

}  // namespace mpcal
