#include "mpcal/pipeline.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "mpcal/errors.hpp"
#include "mpcal/hashing.hpp"

namespace mpcal {

namespace fs = std::filesystem;

std::string_view ToString(Stage s) {
  switch (s) {
    case Stage::kCompose: return "compose";
    case Stage::kProbe: return "probe";
    case Stage::kEmit: return "emit";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "compose";
}

Stage ParsePipelineStage(std::string_view s) {
  for (Stage st : kAllStages) {
    if (ToString(st) == s) return st;
  }
  throw UsageError("unknown stage \"" + std::string(s) + "\"");
}

std::shared_ptr<Backend> MakeBackend(const BackendSpec& spec, const Dataset& dataset) {
  if (spec.type == BackendSpec::Type::kMock) return std::make_shared<MockBackend>(spec.mock, dataset);
  return std::make_shared<OpenAIBackend>(spec.remote);
}

void ValidateRunConfig(const RunConfig& c) {
  if (c.n == 0) throw UsageError("n must be at least 1");
  if (c.bins == 0) throw UsageError("bins must be at least 1");
  if (c.parallelism == 0) throw UsageError("parallelism must be at least 1");
  if (c.retry_attempts < 1) throw UsageError("retry_attempts must be at least 1");
  if (c.output_dir.empty()) throw UsageError("output_dir is required");
  if (c.dataset.empty()) throw UsageError("dataset is required");
  if (c.stages.empty()) throw UsageError("stage list is empty");
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    if (c.stages[i] != kAllStages[i]) {
      throw UsageError("stage list must be a prefix of compose,probe,emit,evaluate,report");
    }
  }
}

namespace {

std::string DefaultSetting(Setting s) { return std::string(ToString(s)); }

fs::path Resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

Json BackendToJson(const BackendSpec& b) {
  Json j;
  if (b.type == BackendSpec::Type::kMock) {
    j["type"] = "mock";
    j["accuracy"] = b.mock.accuracy;
    j["wrong_answer_text"] = b.mock.wrong_answer_text;
    j["seed"] = b.mock.seed;
    j["confidence_behavior"] = ToString(b.mock.confidence_behavior);
  } else {
    j["type"] = "openai";
    j["base_url"] = b.remote.base_url;
    j["model"] = b.remote.model;
    j["api_key_env"] = b.remote.api_key_env;
    j["timeout_seconds"] = b.remote.timeout_seconds;
    j["top_logprobs"] = b.remote.top_logprobs;
  }
  return j;
}

BackendSpec BackendFromJson(const Json& j) {
  BackendSpec b;
  const std::string type = j.value("type", std::string("mock"));
  if (type == "mock") {
    RejectUnknownKeys(j, {"type", "accuracy", "wrong_answer_text", "seed", "confidence_behavior"},
                      "backend");
    b.type = BackendSpec::Type::kMock;
    b.mock.accuracy = j.value("accuracy", b.mock.accuracy);
    b.mock.wrong_answer_text = j.value("wrong_answer_text", b.mock.wrong_answer_text);
    b.mock.seed = j.value("seed", b.mock.seed);
    if (j.contains("confidence_behavior")) {
      b.mock.confidence_behavior =
          ParseConfidenceBehavior(j.at("confidence_behavior").get<std::string>());
    }
  } else if (type == "openai") {
    RejectUnknownKeys(j, {"type", "base_url", "model", "api_key_env", "timeout_seconds", "top_logprobs"},
                      "backend");
    b.type = BackendSpec::Type::kOpenAI;
    b.remote.base_url = j.value("base_url", std::string());
    b.remote.model = j.value("model", std::string());
    b.remote.api_key_env = j.value("api_key_env", b.remote.api_key_env);
    b.remote.timeout_seconds = j.value("timeout_seconds", b.remote.timeout_seconds);
    b.remote.top_logprobs = j.value("top_logprobs", b.remote.top_logprobs);
  } else {
    throw UsageError("unknown backend type \"" + type + "\"");
  }
  return b;
}

}  // namespace

RunConfig RunConfigFromJson(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw UsageError("run config must be a JSON object");
  try {
    RejectUnknownKeys(j,
                      {"dataset", "setting", "lenient", "n", "seed", "template", "backend",
                       "output_dir", "stages", "parallelism", "max_tokens", "cache_dir",
                       "qa_source", "request_logprobs", "bins", "confidence_tokens",
                       "retry_attempts"},
                      "run config");
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  RunConfig c;
  try {
    if (j.contains("dataset")) c.dataset = Resolve(base_dir, j.at("dataset").get<std::string>());
    c.setting = ParseSetting(j.value("setting", DefaultSetting(c.setting)));
    c.lenient = j.value("lenient", c.lenient);
    c.n = j.value("n", c.n);
    c.seed = j.value("seed", c.seed);
    if (j.contains("template") && !j.at("template").is_null()) {
      c.template_path = Resolve(base_dir, j.at("template").get<std::string>());
    }
    if (j.contains("backend")) c.backend = BackendFromJson(j.at("backend"));
    if (j.contains("output_dir")) c.output_dir = Resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("stages")) {
      c.stages.clear();
      for (const Json& s : j.at("stages")) c.stages.push_back(ParsePipelineStage(s.get<std::string>()));
    }
    c.parallelism = j.value("parallelism", c.parallelism);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    if (j.contains("cache_dir") && !j.at("cache_dir").is_null()) {
      c.cache_dir = Resolve(base_dir, j.at("cache_dir").get<std::string>());
    }
    if (j.contains("qa_source")) c.qa_source = ParseAnswerSource(j.at("qa_source").get<std::string>());
    c.request_logprobs = j.value("request_logprobs", c.request_logprobs);
    c.bins = j.value("bins", c.bins);
    if (j.contains("confidence_tokens")) {
      const Json& t = j.at("confidence_tokens");
      c.confidence_tokens.sure = t.value("sure", c.confidence_tokens.sure);
      c.confidence_tokens.unsure = t.value("unsure", c.confidence_tokens.unsure);
    }
    c.retry_attempts = j.value("retry_attempts", c.retry_attempts);
  } catch (const Json::exception& e) {
    throw UsageError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig LoadRunConfig(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(ReadFile(path));
  } catch (const Json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return RunConfigFromJson(j, path.parent_path());
}

Json RunConfigContent(const RunConfig& c) {
  Json j;
  j["setting"] = ToString(c.setting);
  j["lenient"] = c.lenient;
  j["n"] = c.n;
  j["seed"] = c.seed;
  j["backend"] = BackendToJson(c.backend);
  Json stages = Json::array();
  for (Stage s : c.stages) stages.push_back(ToString(s));
  j["stages"] = std::move(stages);
  j["parallelism"] = c.parallelism;
  j["max_tokens"] = c.max_tokens;
  j["qa_source"] = ToString(c.qa_source);
  j["request_logprobs"] = c.request_logprobs;
  j["bins"] = c.bins;
  j["confidence_tokens"] = {{"sure", c.confidence_tokens.sure},
                            {"unsure", c.confidence_tokens.unsure}};
  j["retry_attempts"] = c.retry_attempts;
  return j;
}

std::vector<TuningRecord> BuildStageRecords(std::span<const MultiProblem> multis,
                                            std::span<const BoundaryRecord> boundary,
                                            TuningKind kind, AnswerSource qa_source) {
  std::vector<TuningRecord> out;
  out.reserve(multis.size());
  if (kind == TuningKind::kMultQA) {
    for (const MultiProblem& m : multis) out.push_back(BuildMultQA(m));
    return out;
  }
  std::unordered_map<std::string, const BoundaryRecord*> by_id;
  for (const BoundaryRecord& r : boundary) by_id.emplace(r.multi_id, &r);
  for (const MultiProblem& m : multis) {
    auto it = by_id.find(m.id);
    if (it == by_id.end()) throw DataError("no boundary record for " + m.id);
    out.push_back(BuildMultQAConf(m, *it->second, qa_source));
  }
  return out;
}

ElicitResult ElicitConfidence(std::span<const MultiProblem> multis,
                              std::span<const BoundaryRecord> boundary, ModelClient& client,
                              const ElicitOptions& options) {
  std::unordered_map<std::string, const BoundaryRecord*> by_id;
  for (const BoundaryRecord& r : boundary) by_id.emplace(r.multi_id, &r);

  std::vector<const BoundaryRecord*> records;
  std::vector<CompletionRequest> requests;
  for (const MultiProblem& m : multis) {
    auto it = by_id.find(m.id);
    if (it == by_id.end()) throw DataError("no boundary record for " + m.id);
    if (it->second->matches.size() != m.n()) {
      throw DataError("boundary record " + m.id + " does not match its composition size");
    }
    records.push_back(it->second);
    requests.push_back({RenderConfidencePrompt(m, it->second->parsed.answers), options.max_tokens,
                        0.0, options.request_logprobs});
  }

  auto results = client.CompleteBatch(requests, options.parallelism);
  ElicitResult out;
  for (std::size_t i = 0; i < multis.size(); ++i) {
    if (!results[i].ok()) {
      const BackendError& e = *results[i].error;
      throw BackendError(e.kind(), "confidence for " + multis[i].id + ": " + e.what(),
                         e.attempts(), e.raw_body());
    }
    const std::size_t n = multis[i].n();
    for (std::size_t k = 0; k < n; ++k) {
      PredictionRecord p;
      p.question_id = multis[i].members[k].id;
      p.correct = records[i]->matches[k];
      try {
        SlotConfidence sc = ReadConfidence(*results[i].response, k, n, options.tokens);
        p.confidence = sc.score;
        p.label = sc.label;
      } catch (const DataError&) {
        ++out.unparsed;
        p.confidence = 0.0;
        p.label = ConfidenceLabel{Confidence::kUnsure};
      }
      out.predictions.push_back(std::move(p));
    }
  }
  return out;
}

namespace {

struct StageEntry {
  std::string fingerprint;
  std::map<std::string, std::string> artifacts;  // file name -> sha256
  Json extra = Json::object();
};

Json EntryToJson(const StageEntry& e) {
  Json j;
  j["fingerprint"] = e.fingerprint;
  Json a = Json::object();
  for (const auto& [name, sha] : e.artifacts) a[name] = sha;
  j["artifacts"] = std::move(a);
  if (!e.extra.empty()) j["details"] = e.extra;
  return j;
}

std::map<Stage, StageEntry> LoadStageEntries(const fs::path& manifest) {
  std::map<Stage, StageEntry> out;
  if (!fs::exists(manifest)) return out;
  try {
    Json j = Json::parse(ReadFile(manifest));
    for (const auto& [name, value] : j.at("stages").items()) {
      StageEntry e;
      e.fingerprint = value.at("fingerprint").get<std::string>();
      for (const auto& [file, sha] : value.at("artifacts").items()) {
        e.artifacts[file] = sha.get<std::string>();
      }
      if (value.contains("details")) e.extra = value.at("details");
      out[ParsePipelineStage(name)] = std::move(e);
    }
  } catch (const std::exception&) {
    // A damaged manifest only costs a recomputation.
    out.clear();
  }
  return out;
}

bool ArtifactsIntact(const fs::path& dir, const StageEntry& e) {
  for (const auto& [file, sha] : e.artifacts) {
    const fs::path p = dir / file;
    if (!fs::exists(p) || Sha256File(p) != sha) return false;
  }
  return true;
}

[[noreturn]] void RethrowForStage(Stage stage) {
  const std::string prefix = "stage " + std::string(ToString(stage)) + " failed: ";
  try {
    throw;
  } catch (const BackendError& e) {
    throw BackendError(e.kind(), prefix + e.what(), e.attempts(), e.raw_body());
  } catch (const UsageError& e) {
    throw UsageError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const std::exception& e) {
    throw DataError(prefix + e.what());
  }
}

}  // namespace

RunSummary Run(const RunConfig& config) {
  ValidateRunConfig(config);
  const fs::path& out_dir = config.output_dir;
  fs::create_directories(out_dir);
  const fs::path manifest_path = out_dir / artifacts::kManifest;

  const Dataset dataset = LoadDataset(config.dataset, config.setting, {config.lenient, std::nullopt});
  const std::string dataset_sha = Sha256File(config.dataset);
  const PromptTemplate tmpl =
      config.template_path ? PromptTemplate::FromFile(*config.template_path) : PromptTemplate::Default();
  const std::string template_sha = FieldHasher()
                                       .Add(tmpl.layout)
                                       .Add(tmpl.item_format)
                                       .Add(tmpl.context_format)
                                       .Add(tmpl.exemplar.value_or(""))
                                       .HexDigest();
  const Json content = RunConfigContent(config);
  const std::string config_hash = Sha256Hex(DumpLine(content));

  std::shared_ptr<Backend> backend = MakeBackend(config.backend, dataset);
  const std::string backend_id = backend->id();
  std::unique_ptr<ModelClient> client;
  auto get_client = [&]() -> ModelClient& {
    if (!client) {
      ClientOptions opts;
      opts.retry.max_attempts = config.retry_attempts;
      opts.cache_dir = config.cache_dir;
      client = std::make_unique<ModelClient>(backend, opts);
    }
    return *client;
  };

  std::map<Stage, StageEntry> entries = LoadStageEntries(manifest_path);

  auto write_manifest = [&] {
    Json m;
    m["config"] = content;
    m["config_hash"] = config_hash;
    m["dataset_name"] = dataset.name;
    m["dataset_sha256"] = dataset_sha;
    m["seed"] = config.seed;
    m["n"] = config.n;
    m["template_sha256"] = template_sha;
    m["backend_id"] = backend_id;
    m["confidence_tokens"] = content["confidence_tokens"];
    Json stages = Json::object();
    for (Stage s : kAllStages) {
      if (auto it = entries.find(s); it != entries.end()) stages[std::string(ToString(s))] = EntryToJson(it->second);
    }
    m["stages"] = std::move(stages);
    WriteFileAtomic(manifest_path, m.dump(2) + "\n");
  };

  // Each fingerprint chains the previous one, so any upstream change
  // invalidates everything downstream.
  std::string prev_fp;
  auto fingerprint = [&](Stage s, std::initializer_list<std::string_view> parts) {
    FieldHasher h;
    h.Add(ToString(s)).Add(prev_fp);
    for (std::string_view p : parts) h.Add(p);
    return h.HexDigest();
  };
  const std::string n_str = std::to_string(config.n);
  const std::string seed_str = std::to_string(config.seed);
  const std::string max_tokens_str = std::to_string(config.max_tokens);
  const std::string bins_str = std::to_string(config.bins);

  RunSummary summary;
  summary.manifest = manifest_path;

  std::vector<MultiProblem> multis;
  std::vector<BoundaryRecord> boundary;
  bool multis_loaded = false;
  bool boundary_loaded = false;
  auto need_multis = [&]() -> std::vector<MultiProblem>& {
    if (!multis_loaded) {
      multis = LoadCompositions(out_dir / artifacts::kCompositions, dataset);
      multis_loaded = true;
    }
    return multis;
  };
  auto need_boundary = [&]() -> std::vector<BoundaryRecord>& {
    if (!boundary_loaded) {
      boundary = LoadBoundaryRecords(out_dir / artifacts::kBoundary);
      boundary_loaded = true;
    }
    return boundary;
  };
  auto store = [&](StageEntry& e, const char* name, const std::string& bytes) {
    WriteFileAtomic(out_dir / name, bytes);
    e.artifacts[name] = Sha256Hex(bytes);
  };

  for (Stage stage : config.stages) {
    std::string fp;
    switch (stage) {
      case Stage::kCompose:
        fp = fingerprint(stage, {dataset_sha, ToString(config.setting), config.lenient ? "1" : "0",
                                 n_str, seed_str, template_sha});
        break;
      case Stage::kProbe:
        fp = fingerprint(stage, {backend_id, max_tokens_str});
        break;
      case Stage::kEmit:
        fp = fingerprint(stage, {ToString(config.qa_source)});
        break;
      case Stage::kEvaluate:
        fp = fingerprint(stage, {backend_id, max_tokens_str, config.request_logprobs ? "1" : "0",
                                 bins_str, config.confidence_tokens.sure,
                                 config.confidence_tokens.unsure});
        break;
      case Stage::kReport:
        fp = fingerprint(stage, {dataset.name});
        break;
    }
    prev_fp = fp;

    if (auto it = entries.find(stage);
        it != entries.end() && it->second.fingerprint == fp && ArtifactsIntact(out_dir, it->second)) {
      summary.skipped.push_back(stage);
      if (stage == Stage::kEvaluate) {
        summary.report = ReportFromJson(Json::parse(ReadFile(out_dir / artifacts::kReportJson)));
      }
      continue;
    }

    StageEntry entry;
    entry.fingerprint = fp;
    try {
      switch (stage) {
        case Stage::kCompose: {
          multis = Compose(dataset, config.n, config.seed, tmpl);
          multis_loaded = true;
          store(entry, artifacts::kCompositions, SerializeCompositions(multis));
          entry.extra["multi_problems"] = multis.size();
          break;
        }
        case Stage::kProbe: {
          boundary = Probe(need_multis(), get_client(), {config.max_tokens, config.parallelism});
          boundary_loaded = true;
          store(entry, artifacts::kBoundary, SerializeBoundaryRecords(boundary));
          std::size_t sure = 0;
          std::size_t total = 0;
          for (const BoundaryRecord& r : boundary) {
            total += r.labels.size();
            sure += static_cast<std::size_t>(std::count_if(
                r.labels.begin(), r.labels.end(), [](const ConfidenceLabel& l) { return l.sure(); }));
          }
          entry.extra["questions"] = total;
          entry.extra["sure"] = sure;
          break;
        }
        case Stage::kEmit: {
          auto qa = BuildStageRecords(need_multis(), need_boundary(), TuningKind::kMultQA, config.qa_source);
          auto conf = BuildStageRecords(need_multis(), need_boundary(), TuningKind::kMultQAC, config.qa_source);
          store(entry, artifacts::kStage1, SerializeTuningRecords(qa, TuningKind::kMultQA));
          store(entry, artifacts::kStage2, SerializeTuningRecords(conf, TuningKind::kMultQAC));
          break;
        }
        case Stage::kEvaluate: {
          ElicitOptions eo{config.max_tokens, config.parallelism, config.request_logprobs,
                           config.confidence_tokens};
          ElicitResult res = ElicitConfidence(need_multis(), need_boundary(), get_client(), eo);
          CalibrationReport report = BuildReport(res.predictions, config.bins);
          store(entry, artifacts::kPredictions, SerializePredictions(res.predictions));
          store(entry, artifacts::kReportJson, ReportToJson(report).dump(2) + "\n");
          entry.extra["unparsed_confidence"] = res.unparsed;
          summary.report = std::move(report);
          break;
        }
        case Stage::kReport: {
          CalibrationReport report =
              ReportFromJson(Json::parse(ReadFile(out_dir / artifacts::kReportJson)));
          store(entry, artifacts::kReportText, RenderReportTable(report, dataset.name));
          store(entry, artifacts::kBinsCsv, RenderBinsCsv(report));
          break;
        }
      }
    } catch (...) {
      RethrowForStage(stage);
    }

    // Downstream entries were computed from the old version of this stage.
    for (auto it = entries.upper_bound(stage); it != entries.end();) it = entries.erase(it);
    entries[stage] = std::move(entry);
    write_manifest();
    summary.executed.push_back(stage);
  }
  write_manifest();
  summary.backend_calls = client ? client->backend_calls() : 0;
  return summary;
}

}  // namespace mpcal
