// mpcal: multi-problem confidence-calibration pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mpcal/errors.hpp"
#include "mpcal/hashing.hpp"
#include "mpcal/pipeline.hpp"

namespace {

using namespace mpcal;
namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

struct DatasetArgs {
  std::string path;
  std::string setting = "independent";
  bool lenient = false;

  void Register(CLI::App* app) {
    app->add_option("--dataset", path, "Normalized JSONL dataset")->required();
    app->add_option("--setting", setting, "independent | sequential");
    app->add_flag("--lenient", lenient, "Ignore unknown keys");
  }
  Dataset Load() const { return LoadDataset(path, ParseSetting(setting), {lenient, std::nullopt}); }
};

struct BackendArgs {
  std::string type = "mock";
  double mock_accuracy = 1.0;
  std::uint64_t mock_seed = 0;
  std::string mock_behavior = "honest";
  std::string mock_wrong = "unknown";
  std::string base_url;
  std::string model;
  std::string api_key_env = "MPCAL_API_KEY";
  std::size_t parallelism = 4;
  int max_tokens = 512;
  int retry_attempts = 3;
  std::string cache_dir;

  void Register(CLI::App* app) {
    app->add_option("--backend", type, "mock | openai");
    app->add_option("--mock-accuracy", mock_accuracy, "Mock: probability a question is known");
    app->add_option("--mock-seed", mock_seed, "Mock: knowledge seed");
    app->add_option("--mock-behavior", mock_behavior, "Mock: honest | overconfident | underconfident");
    app->add_option("--mock-wrong", mock_wrong, "Mock: answer given when unknown");
    app->add_option("--base-url", base_url, "Remote: chat-completions base URL");
    app->add_option("--model", model, "Remote: model name");
    app->add_option("--api-key-env", api_key_env, "Remote: env var holding the bearer token");
    app->add_option("--parallelism", parallelism, "Max requests in flight")->check(CLI::PositiveNumber);
    app->add_option("--max-tokens", max_tokens, "Generation budget per request");
    app->add_option("--retries", retry_attempts, "Attempts per request on transport failure");
    app->add_option("--cache-dir", cache_dir, "Persist responses here");
  }

  BackendSpec Spec() const {
    BackendSpec spec;
    if (type == "mock") {
      spec.type = BackendSpec::Type::kMock;
      spec.mock = {mock_accuracy, mock_wrong, mock_seed, ParseConfidenceBehavior(mock_behavior)};
    } else if (type == "openai") {
      spec.type = BackendSpec::Type::kOpenAI;
      spec.remote.base_url = base_url;
      spec.remote.model = model;
      spec.remote.api_key_env = api_key_env;
    } else {
      throw UsageError("unknown backend \"" + type + "\"");
    }
    return spec;
  }

  ModelClient Client(const Dataset& dataset) const {
    ClientOptions opts;
    opts.retry.max_attempts = retry_attempts;
    if (!cache_dir.empty()) opts.cache_dir = fs::path(cache_dir);
    return ModelClient(MakeBackend(Spec(), dataset), opts);
  }
};

void WriteOrPrint(const std::string& out, const std::string& bytes) {
  if (out.empty() || out == "-") {
    std::cout << bytes;
  } else {
    WriteFileAtomic(out, bytes);
  }
}

std::vector<std::string> SplitCommas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-problem confidence calibration: compose, probe, emit tuning data, evaluate"};
  app.require_subcommand(1);

  // validate
  DatasetArgs validate_ds;
  auto* validate = app.add_subcommand("validate", "Check a dataset against the schema invariants");
  validate_ds.Register(validate);

  // compose
  DatasetArgs compose_ds;
  std::size_t compose_n = 3;
  std::uint64_t compose_seed = 0;
  std::string compose_template;
  std::string compose_out;
  auto* compose = app.add_subcommand("compose", "Group problems into multi-problem prompts");
  compose_ds.Register(compose);
  compose->add_option("--n", compose_n, "Questions per prompt")->check(CLI::PositiveNumber);
  compose->add_option("--seed", compose_seed, "Shuffle seed (independent setting)");
  compose->add_option("--template", compose_template, "Prompt layout file");
  compose->add_option("--out", compose_out, "Compositions JSONL (stdout if omitted)");

  // probe
  DatasetArgs probe_ds;
  BackendArgs probe_backend;
  std::string probe_compositions;
  std::string probe_out;
  auto* probe = app.add_subcommand("probe", "Query the model and label each answer sure/unsure");
  probe_ds.Register(probe);
  probe_backend.Register(probe);
  probe->add_option("--compositions", probe_compositions, "Compositions JSONL")->required();
  probe->add_option("--out", probe_out, "Boundary records JSONL (stdout if omitted)");

  // emit
  DatasetArgs emit_ds;
  std::string emit_compositions;
  std::string emit_boundary;
  std::string emit_stage;
  std::string emit_out;
  std::string emit_qa_source = "model";
  auto* emit = app.add_subcommand("emit", "Write a tuning dataset (qa or qa-conf)");
  emit_ds.Register(emit);
  emit->add_option("--compositions", emit_compositions, "Compositions JSONL")->required();
  emit->add_option("--boundary", emit_boundary, "Boundary records JSONL (qa-conf only)");
  emit->add_option("--stage", emit_stage, "qa | qa-conf")->required();
  emit->add_option("--out", emit_out, "Output JSONL")->required();
  emit->add_option("--qa-source", emit_qa_source, "Answer shown in qa-conf records: model | gold");

  // evaluate
  DatasetArgs eval_ds;
  BackendArgs eval_backend;
  std::string eval_compositions;
  std::string eval_boundary;
  std::string eval_predictions;
  std::string eval_out_dir;
  std::size_t eval_bins = 10;
  bool eval_no_logprobs = false;
  auto* evaluate = app.add_subcommand(
      "evaluate", "Elicit confidence and score AP/ECE/accuracy, or score a predictions file");
  evaluate->add_option("--dataset", eval_ds.path, "Normalized JSONL dataset");
  evaluate->add_option("--setting", eval_ds.setting, "independent | sequential");
  evaluate->add_flag("--lenient", eval_ds.lenient, "Ignore unknown keys");
  eval_backend.Register(evaluate);
  evaluate->add_option("--compositions", eval_compositions, "Compositions JSONL");
  evaluate->add_option("--boundary", eval_boundary, "Boundary records JSONL");
  evaluate->add_option("--predictions", eval_predictions, "Score this predictions JSONL instead");
  evaluate->add_option("--out-dir", eval_out_dir, "Directory for predictions.jsonl and report.json")
      ->required();
  evaluate->add_option("--bins", eval_bins, "ECE bins")->check(CLI::PositiveNumber);
  evaluate->add_flag("--no-logprobs", eval_no_logprobs, "Use the phrase-only confidence");

  // report
  std::string report_in;
  std::string report_name = "dataset";
  std::string report_csv;
  auto* report = app.add_subcommand("report", "Print a report.json as a table");
  report->add_option("--report", report_in, "report.json")->required();
  report->add_option("--name", report_name, "Row label");
  report->add_option("--bins-csv", report_csv, "Also write reliability bins as CSV");

  // run
  std::string run_config;
  std::string run_dataset;
  std::string run_setting;
  std::string run_out;
  std::string run_stages;
  std::string run_cache;
  std::optional<std::size_t> run_n;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> run_parallelism;
  auto* run = app.add_subcommand("run", "Run the pipeline from a JSON config (flags override)");
  run->add_option("--config", run_config, "Run config JSON")->required();
  run->add_option("--dataset", run_dataset, "Override dataset path");
  run->add_option("--setting", run_setting, "Override setting");
  run->add_option("--n", run_n, "Override questions per prompt");
  run->add_option("--seed", run_seed, "Override seed");
  run->add_option("--out", run_out, "Override output directory");
  run->add_option("--stages", run_stages, "Override stages, comma separated");
  run->add_option("--parallelism", run_parallelism, "Override parallelism");
  run->add_option("--cache-dir", run_cache, "Override cache directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (validate->parsed()) {
      Dataset ds = ReadDatasetUnchecked(validate_ds.path, ParseSetting(validate_ds.setting),
                                        {validate_ds.lenient, std::nullopt});
      auto violations = Validate(ds);
      for (const std::string& v : violations) std::cout << v << "\n";
      if (!violations.empty()) return kExitData;
      std::cout << "ok: " << ds.problems.size() << " problems\n";
      return 0;
    }
    if (compose->parsed()) {
      Dataset ds = compose_ds.Load();
      PromptTemplate tmpl = compose_template.empty() ? PromptTemplate::Default()
                                                     : PromptTemplate::FromFile(compose_template);
      WriteOrPrint(compose_out, SerializeCompositions(Compose(ds, compose_n, compose_seed, tmpl)));
      return 0;
    }
    if (probe->parsed()) {
      Dataset ds = probe_ds.Load();
      auto multis = LoadCompositions(probe_compositions, ds);
      ModelClient client = probe_backend.Client(ds);
      auto records = Probe(multis, client, {probe_backend.max_tokens, probe_backend.parallelism});
      WriteOrPrint(probe_out, SerializeBoundaryRecords(records));
      return 0;
    }
    if (emit->parsed()) {
      Dataset ds = emit_ds.Load();
      TuningKind kind = ParseStage(emit_stage);
      auto multis = LoadCompositions(emit_compositions, ds);
      std::vector<BoundaryRecord> boundary;
      if (kind == TuningKind::kMultQAC) {
        if (emit_boundary.empty()) throw UsageError("--stage qa-conf needs --boundary");
        boundary = LoadBoundaryRecords(emit_boundary);
      }
      AnswerSource source = ParseAnswerSource(emit_qa_source);
      auto records = BuildStageRecords(multis, boundary, kind, source);
      std::size_t lines = EmitTuningRecords(records, kind, emit_out);
      Json manifest;
      manifest["stage"] = ToString(kind);
      manifest["records"] = lines;
      manifest["dataset_sha256"] = Sha256File(emit_ds.path);
      manifest["compositions_sha256"] = Sha256File(emit_compositions);
      if (!emit_boundary.empty()) manifest["boundary_sha256"] = Sha256File(emit_boundary);
      manifest["qa_source"] = ToString(source);
      manifest["output_sha256"] = Sha256File(emit_out);
      WriteFileAtomic(emit_out + ".manifest.json", manifest.dump(2) + "\n");
      std::cerr << "wrote " << lines << " records to " << emit_out << "\n";
      return 0;
    }
    if (evaluate->parsed()) {
      std::vector<PredictionRecord> predictions;
      if (!eval_predictions.empty()) {
        predictions = LoadPredictions(eval_predictions);
      } else {
        if (eval_ds.path.empty() || eval_compositions.empty() || eval_boundary.empty()) {
          throw UsageError("evaluate needs --predictions, or --dataset, --compositions and --boundary");
        }
        Dataset ds = eval_ds.Load();
        auto multis = LoadCompositions(eval_compositions, ds);
        auto boundary = LoadBoundaryRecords(eval_boundary);
        ModelClient client = eval_backend.Client(ds);
        ElicitOptions opts{eval_backend.max_tokens, eval_backend.parallelism, !eval_no_logprobs, {}};
        ElicitResult res = ElicitConfidence(multis, boundary, client, opts);
        if (res.unparsed > 0) {
          std::cerr << res.unparsed << " confidence slots unparseable; scored as unsure\n";
        }
        predictions = std::move(res.predictions);
        WriteFileAtomic(fs::path(eval_out_dir) / artifacts::kPredictions,
                        SerializePredictions(predictions));
      }
      CalibrationReport rep = BuildReport(predictions, eval_bins);
      WriteFileAtomic(fs::path(eval_out_dir) / artifacts::kReportJson, ReportToJson(rep).dump(2) + "\n");
      std::cout << RenderReportTable(rep, eval_ds.path.empty() ? "predictions" : fs::path(eval_ds.path).stem().string());
      return 0;
    }
    if (report->parsed()) {
      CalibrationReport rep = ReportFromJson(Json::parse(ReadFile(report_in)));
      std::cout << RenderReportTable(rep, report_name);
      if (!report_csv.empty()) WriteFileAtomic(report_csv, RenderBinsCsv(rep));
      return 0;
    }
    if (run->parsed()) {
      RunConfig cfg = LoadRunConfig(run_config);
      if (!run_dataset.empty()) cfg.dataset = run_dataset;
      if (!run_setting.empty()) cfg.setting = ParseSetting(run_setting);
      if (run_n) cfg.n = *run_n;
      if (run_seed) cfg.seed = *run_seed;
      if (!run_out.empty()) cfg.output_dir = run_out;
      if (!run_cache.empty()) cfg.cache_dir = fs::path(run_cache);
      if (run_parallelism) cfg.parallelism = *run_parallelism;
      if (!run_stages.empty()) {
        cfg.stages.clear();
        for (const std::string& s : SplitCommas(run_stages)) cfg.stages.push_back(ParsePipelineStage(s));
      }
      RunSummary summary = Run(cfg);
      for (Stage s : summary.executed) std::cerr << "ran     " << ToString(s) << "\n";
      for (Stage s : summary.skipped) std::cerr << "skipped " << ToString(s) << " (unchanged)\n";
      std::cerr << "backend calls: " << summary.backend_calls << "\n";
      if (summary.report) std::cout << RenderReportTable(*summary.report, fs::path(cfg.dataset).stem().string());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
