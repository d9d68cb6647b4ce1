// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "mpcal/hashing.hpp"
#include "mpcal/pipeline.hpp"
#include "mpcal/sft_emitter.hpp"
#include "oracles.hpp"

using namespace mpcal;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome Fail(std::string detail) { return {false, std::move(detail)}; }

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* fmt, double a, double b = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

fs::path Scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mpcal_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Dataset SyntheticDataset(std::size_t size, std::size_t group_len) {
  Dataset ds;
  ds.name = "synthetic";
  for (std::size_t i = 0; i < size; ++i) {
    Problem p;
    p.id = "s" + std::to_string(i);
    p.question = "What is the code word for entry " + std::to_string(i) + "?";
    p.gold = {"word" + std::to_string(i)};
    if (group_len > 0) p.group_key = "g" + std::to_string(i / group_len);
    ds.problems.push_back(p);
  }
  return ds;
}

fs::path WriteDataset(const fs::path& dir, const Dataset& ds) {
  const fs::path path = dir / (ds.name + ".jsonl");
  WriteFileAtomic(path, SerializeDataset(ds));
  return path;
}

RunConfig MockRun(const fs::path& data, const fs::path& out, double accuracy) {
  RunConfig c;
  c.dataset = data;
  c.output_dir = out;
  c.n = 3;
  c.seed = 2024;
  c.backend.mock = {accuracy, "unknown", 99, ConfidenceBehavior::kHonest};
  return c;
}

Outcome ApOracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto r = oracle::RandomPredictions(rng, 8, true);
    worst = std::max(worst, std::fabs(AveragePrecision(r) - oracle::AveragePrecisionByEnumeration(r)));
  }
  const double secs = Seconds(start);
  if (worst > 1e-12) return Fail(Fmt("max deviation %.3g", worst));
  if (secs >= 5.0) return Fail(Fmt("took %.2fs", secs));
  return {true, Fmt("1000 lists, max deviation %.3g, %.3fs", worst, secs)};
}

Outcome EceCases() {
  auto rec = [](double c, bool ok) { return PredictionRecord{"q", ok, c, {}}; };
  std::vector<PredictionRecord> single;
  for (int i = 0; i < 10; ++i) single.push_back(rec(0.75, i < 6));
  const double e1 = ExpectedCalibrationError(single);
  if (std::fabs(e1 - 0.15) > 1e-12) return Fail(Fmt("single-bin case gave %.17g", e1));
  std::vector<PredictionRecord> perfect = {rec(1.0, true), rec(1.0, true), rec(1.0, true)};
  if (ExpectedCalibrationError(perfect) != 0.0) return Fail("all-correct at 1.0 is not 0");
  std::vector<PredictionRecord> coin = {rec(0.5, true), rec(0.5, false)};
  if (ExpectedCalibrationError(coin) != 0.0) return Fail("coin flip at 0.5 is not 0");

  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto r = oracle::RandomPredictions(rng, 40, false);
    worst = std::max(worst, std::fabs(ExpectedCalibrationError(r) - oracle::EceByMembership(r, 10)));
  }
  if (worst > 1e-12) return Fail(Fmt("random lists: max deviation %.3g", worst));
  return {true, Fmt("hand cases exact, 1000 lists max deviation %.3g", worst)};
}

Outcome ApRankInvariance() {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    auto r = oracle::RandomPredictions(rng, 20, true);
    const double before = AveragePrecision(r);
    for (auto& p : r) p.confidence = p.confidence * p.confidence * p.confidence;
    const double after = AveragePrecision(r);
    if (before != after) return Fail(Fmt("list %g changed by %.3g", i, after - before));
  }
  return {true, "500 lists, AP unchanged"};
}

Outcome PartitionProperty() {
  std::mt19937_64 rng(4);
  std::size_t checked = 0;
  for (std::size_t size : {1u, 2u, 7u, 50u, 163u, 500u}) {
    for (std::size_t n = 1; n <= 15; ++n) {
      for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (Setting setting : {Setting::kIndependent, Setting::kSequential}) {
          const std::size_t group_len = setting == Setting::kSequential ? 1 + rng() % 9 : 0;
          Dataset ds = SyntheticDataset(size, group_len);
          ds.setting = setting;
          const auto multis = Compose(ds, n, seed);
          std::multiset<std::string> seen;
          for (const MultiProblem& m : multis) {
            if (m.n() == 0 || m.n() > n) return Fail("group of size " + std::to_string(m.n()));
            std::set<std::optional<std::string>> keys;
            for (const Problem& p : m.members) {
              seen.insert(p.id);
              keys.insert(p.group_key);
            }
            if (setting == Setting::kSequential && keys.size() != 1) {
              return Fail("sequential group mixes keys in " + m.id);
            }
          }
          std::multiset<std::string> expected;
          for (const Problem& p : ds.problems) expected.insert(p.id);
          if (seen != expected) {
            return Fail("size " + std::to_string(size) + " n " + std::to_string(n) + " seed " +
                        std::to_string(seed) + " is not a partition");
          }
          ++checked;
        }
      }
    }
  }
  return {true, std::to_string(checked) + " compositions partition their dataset"};
}

Outcome TemplateGolden() {
  const fs::path fixtures(MPCAL_FIXTURE_DIR);
  Dataset ds = LoadDataset(fixtures / "qa3.jsonl", Setting::kIndependent);
  MultiProblem m;
  m.id = "mp00000";
  m.members = ds.problems;
  BoundaryRecord b;
  b.multi_id = m.id;
  b.parsed.answers = {"Paris", "41", "Blue"};
  b.matches = {true, false, true};
  for (bool x : b.matches) b.labels.push_back(ConfidenceLabel::FromMatch(x));
  const TuningRecord r = BuildMultQAConf(m, b);
  if (r.input != ReadFile(fixtures / "conf_input_n3.txt")) return Fail("input differs from golden");
  if (r.output != ReadFile(fixtures / "conf_output_n3.txt")) return Fail("output differs from golden");
  return {true, "n=3 input and output match byte-for-byte"};
}

Outcome EndToEnd() {
  const auto start = Clock::now();
  const fs::path dir = Scratch("e2e");
  const fs::path data = WriteDataset(dir, SyntheticDataset(300, 0));
  RunSummary s = Run(MockRun(data, dir / "out", 0.7));
  const double secs = Seconds(start);
  if (!s.report) return Fail("no report");
  const CalibrationReport& r = *s.report;
  const double sure_fraction = static_cast<double>(r.counts.sure) / static_cast<double>(r.counts.total);
  std::string detail = Fmt("acc|certain %.4f, sure %.4f", r.accuracy_among_certain, sure_fraction) +
                       Fmt(", ECE %.4f, AP %.4f", r.ece, r.ap) + Fmt(", %.2fs", secs);
  const bool ok = r.counts.total == 300 && r.accuracy_among_certain == 1.0 &&
                  std::fabs(sure_fraction - 0.7) <= 0.07 && r.ece <= 0.05 && r.ap >= 0.95 &&
                  secs < 30.0;
  return {ok, detail};
}

Outcome Determinism() {
  const fs::path dir = Scratch("determinism");
  const fs::path data = WriteDataset(dir, SyntheticDataset(120, 0));
  Run(MockRun(data, dir / "a", 0.7));
  Run(MockRun(data, dir / "b", 0.7));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const fs::path twin = dir / "b" / e.path().filename();
    if (!fs::exists(twin) || Sha256File(e.path()) != Sha256File(twin)) {
      return Fail(e.path().filename().string() + " differs");
    }
    ++files;
  }
  if (files != static_cast<std::size_t>(std::distance(fs::directory_iterator(dir / "b"), {}))) {
    return Fail("file sets differ");
  }
  return {true, std::to_string(files) + " files byte-identical, manifest included"};
}

Outcome LabelSoundness() {
  std::mt19937_64 rng(8);
  const std::vector<std::string> words = {"Paris", "the", "42", "1,000", "blue", "Blue.", "A",
                                          "(B)", "-7", "3.50", "an", "x", "I", "sure", ":"};
  auto phrase = [&](std::size_t max_words) {
    std::string s;
    const std::size_t len = rng() % (max_words + 1);
    for (std::size_t i = 0; i < len; ++i) {
      if (i) s += ' ';
      s += words[rng() % words.size()];
    }
    return s;
  };
  const std::vector<Choice> choices = {{"A", "Paris"}, {"B", "blue"}, {"C", "42"}};
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 1 + rng() % 4;
    MultiProblem m;
    m.id = "f" + std::to_string(i);
    std::string gen;
    for (std::size_t k = 0; k < n; ++k) {
      Problem p;
      p.id = m.id + "_" + std::to_string(k);
      p.question = "q";
      if (rng() % 3 == 0) {
        p.format = Format::kMC;
        p.choices = choices;
        p.gold = {std::string(1, static_cast<char>('A' + rng() % 3))};
      } else {
        std::string g = phrase(2);
        p.gold = {g.empty() ? "Paris" : g};
      }
      m.members.push_back(p);
      if (rng() % 5 != 0) gen += std::to_string(k + 1) + ": ";
      gen += phrase(4);
      gen += rng() % 2 ? "\n" : " ";
    }
    const BoundaryRecord rec = LabelGeneration(m, gen);
    if (rec.labels.size() != n || rec.matches.size() != n || rec.parsed.answers.size() != n) {
      return Fail("length contract broken on case " + std::to_string(i));
    }
    for (std::size_t k = 0; k < n; ++k) {
      const bool match = MatchAnswer(rec.parsed.answers[k], m.members[k]);
      if (rec.labels[k].sure() != match || rec.matches[k] != match) {
        return Fail("case " + std::to_string(i) + " slot " + std::to_string(k + 1) + ": \"" + gen + "\"");
      }
    }
  }
  return {true, "10000 pairs, Sure iff match"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"average precision equals the enumeration oracle", ApOracle},
      {"ECE hand cases and membership oracle", EceCases},
      {"average precision is invariant under x^3", ApRankInvariance},
      {"composition partitions the dataset", PartitionProperty},
      {"confidence template golden (n=3)", TemplateGolden},
      {"end-to-end mock pipeline (300 problems, p=0.7)", EndToEnd},
      {"two identical runs are byte-identical", Determinism},
      {"label soundness fuzz", LabelSoundness},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = Fail(std::string("exception: ") + e.what());
    }
    if (!o.pass) ++failures;
    std::printf("%s  %s  (%s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
