#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "mpcal/hashing.hpp"
#include "mpcal/pipeline.hpp"

using namespace mpcal;
namespace fs = std::filesystem;

namespace {

fs::path Fixture(const char* name) { return fs::path(MPCAL_FIXTURE_DIR) / name; }

fs::path Scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mpcal_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path WriteSynthetic(const fs::path& dir, std::size_t size) {
  Dataset ds;
  ds.name = "synthetic";
  for (std::size_t i = 0; i < size; ++i) {
    Problem p;
    p.id = "s" + std::to_string(i);
    p.question = "What is the code word for entry " + std::to_string(i) + "?";
    p.gold = {"word" + std::to_string(i)};
    ds.problems.push_back(p);
  }
  const fs::path path = dir / "synthetic.jsonl";
  WriteFileAtomic(path, SerializeDataset(ds));
  return path;
}

RunConfig MockConfig(const fs::path& dataset, const fs::path& out, double accuracy) {
  RunConfig c;
  c.dataset = dataset;
  c.output_dir = out;
  c.n = 3;
  c.seed = 11;
  c.backend.mock = {accuracy, "unknown", 4, ConfidenceBehavior::kHonest};
  c.parallelism = 2;
  return c;
}

std::map<std::string, std::string> Checksums(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    out[e.path().filename().string()] = Sha256File(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("perfect mock gives a perfectly calibrated report") {
  const fs::path dir = Scratch("perfect");
  RunConfig c = MockConfig(WriteSynthetic(dir, 30), dir / "out", 1.0);
  RunSummary s = Run(c);
  CHECK(s.executed.size() == 5);
  REQUIRE(s.report.has_value());
  CHECK(s.report->ap == 1.0);
  CHECK(s.report->ece <= 0.02);
  CHECK(s.report->accuracy_among_certain == 1.0);
  CHECK(s.report->counts.total == 30);
  for (const char* name : {artifacts::kCompositions, artifacts::kBoundary, artifacts::kStage1,
                           artifacts::kStage2, artifacts::kPredictions, artifacts::kReportJson,
                           artifacts::kReportText, artifacts::kBinsCsv, artifacts::kManifest}) {
    CHECK(fs::exists(dir / "out" / name));
  }
  CHECK(LoadTuningRecords(dir / "out" / artifacts::kStage1, TuningKind::kMultQA).size() == 10);
}

TEST_CASE("running only compose writes only compositions") {
  const fs::path dir = Scratch("compose_only");
  RunConfig c = MockConfig(WriteSynthetic(dir, 10), dir / "out", 1.0);
  c.stages = {Stage::kCompose};
  RunSummary s = Run(c);
  CHECK(s.backend_calls == 0);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(dir / "out")) files.insert(e.path().filename().string());
  CHECK(files == std::set<std::string>{artifacts::kCompositions, artifacts::kManifest});
  const Json manifest = Json::parse(ReadFile(dir / "out" / artifacts::kManifest));
  CHECK(manifest["stages"].size() == 1);
  CHECK(manifest["stages"].contains("compose"));
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["n"] == 3);
}

TEST_CASE("rerun skips every stage and keeps artifacts byte-identical") {
  const fs::path dir = Scratch("rerun");
  RunConfig c = MockConfig(WriteSynthetic(dir, 20), dir / "out", 0.6);
  Run(c);
  const auto before = Checksums(dir / "out");
  RunSummary again = Run(c);
  CHECK(again.executed.empty());
  CHECK(again.skipped.size() == 5);
  CHECK(again.backend_calls == 0);
  CHECK(again.report.has_value());
  CHECK(Checksums(dir / "out") == before);
}

TEST_CASE("changing a setting reruns that stage and everything downstream") {
  const fs::path dir = Scratch("invalidate");
  RunConfig c = MockConfig(WriteSynthetic(dir, 20), dir / "out", 0.6);
  Run(c);

  c.bins = 5;
  RunSummary s = Run(c);
  CHECK(s.skipped == std::vector<Stage>{Stage::kCompose, Stage::kProbe, Stage::kEmit});
  CHECK(s.executed == std::vector<Stage>{Stage::kEvaluate, Stage::kReport});

  c.seed = 12;
  s = Run(c);
  CHECK(s.executed.size() == 5);
}

TEST_CASE("a tampered artifact is regenerated") {
  const fs::path dir = Scratch("tamper");
  RunConfig c = MockConfig(WriteSynthetic(dir, 9), dir / "out", 1.0);
  Run(c);
  const std::string original = ReadFile(dir / "out" / artifacts::kBoundary);
  WriteFileAtomic(dir / "out" / artifacts::kBoundary, "{}\n");
  RunSummary s = Run(c);
  CHECK(s.skipped == std::vector<Stage>{Stage::kCompose});
  CHECK(ReadFile(dir / "out" / artifacts::kBoundary) == original);
}

TEST_CASE("two output directories get identical artifacts") {
  const fs::path dir = Scratch("determinism");
  const fs::path data = WriteSynthetic(dir, 25);
  Run(MockConfig(data, dir / "a", 0.7));
  Run(MockConfig(data, dir / "b", 0.7));
  CHECK(Checksums(dir / "a") == Checksums(dir / "b"));
}

TEST_CASE("config file parsing") {
  RunConfig c = LoadRunConfig(Fixture("run_mock.json"));
  CHECK(c.dataset == Fixture("qa3.jsonl"));
  CHECK(c.output_dir == Fixture("out"));
  CHECK(c.n == 3);
  CHECK(c.seed == 7);
  CHECK(c.parallelism == 2);
  CHECK(c.backend.type == BackendSpec::Type::kMock);
  CHECK(c.backend.mock.seed == 1);
  CHECK(c.stages.size() == 5);

  CHECK_THROWS_AS(RunConfigFromJson(Json{{"dataset", "x"}, {"colour", "red"}}), UsageError);
  CHECK_THROWS_AS(RunConfigFromJson(Json{{"n", "three"}}), UsageError);
  CHECK_THROWS_AS(RunConfigFromJson(Json{{"stages", {"compose", "train"}}}), UsageError);
  CHECK_THROWS_AS(RunConfigFromJson(Json{{"backend", {{"type", "carrier-pigeon"}}}}), UsageError);

  // Content excludes locations, so moving files around keeps the hash.
  RunConfig moved = c;
  moved.dataset = "/elsewhere/qa3.jsonl";
  moved.output_dir = "/elsewhere/out";
  CHECK(RunConfigContent(moved) == RunConfigContent(c));
  moved.n = 4;
  CHECK_FALSE(RunConfigContent(moved) == RunConfigContent(c));
}

TEST_CASE("stage lists must be a prefix of the canonical order") {
  RunConfig c;
  c.dataset = "d.jsonl";
  c.output_dir = "out";
  c.stages = {Stage::kCompose, Stage::kProbe};
  CHECK_NOTHROW(ValidateRunConfig(c));
  c.stages = {Stage::kProbe};
  CHECK_THROWS_AS(ValidateRunConfig(c), UsageError);
  c.stages = {Stage::kCompose, Stage::kEmit};
  CHECK_THROWS_AS(ValidateRunConfig(c), UsageError);
  c.stages = {};
  CHECK_THROWS_AS(ValidateRunConfig(c), UsageError);
  c.stages = {Stage::kCompose};
  c.n = 0;
  CHECK_THROWS_AS(ValidateRunConfig(c), UsageError);
}

TEST_CASE("a failing stage is named and keeps earlier artifacts") {
  const fs::path dir = Scratch("failing");
  RunConfig c = MockConfig(WriteSynthetic(dir, 6), dir / "out", 1.0);
  c.backend.type = BackendSpec::Type::kOpenAI;
  c.backend.remote.base_url = "http://127.0.0.1:9/v1";
  c.backend.remote.model = "none";
  c.backend.remote.timeout_seconds = 2;
  c.retry_attempts = 1;
  try {
    Run(c);
    FAIL("expected failure");
  } catch (const BackendError& e) {
    CHECK(std::string(e.what()).rfind("stage probe failed: ", 0) == 0);
  }
  CHECK(fs::exists(dir / "out" / artifacts::kCompositions));
  CHECK_FALSE(fs::exists(dir / "out" / artifacts::kBoundary));
  const Json manifest = Json::parse(ReadFile(dir / "out" / artifacts::kManifest));
  CHECK(manifest["stages"].contains("compose"));
  CHECK_FALSE(manifest["stages"].contains("probe"));
}

TEST_CASE("data errors surface before any stage runs") {
  const fs::path dir = Scratch("bad_data");
  RunConfig c = MockConfig(Fixture("seq_interleaved.jsonl"), dir / "out", 1.0);
  c.setting = Setting::kSequential;
  CHECK_THROWS_AS(Run(c), DataError);
}
