#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mpcal/metrics.hpp"
#include "oracles.hpp"

using namespace mpcal;

namespace {

PredictionRecord Rec(std::string id, double conf, bool correct, bool sure = false) {
  return {std::move(id), correct, conf, ConfidenceLabel{sure ? Confidence::kSure : Confidence::kUnsure}};
}

CompletionResponse WithLogprobs(std::string chosen, double p_chosen,
                                std::optional<std::pair<std::string, double>> alt) {
  CompletionResponse r;
  r.text = "1: I am" + chosen;
  TokenLogprob t{chosen, std::log(p_chosen), {}};
  if (alt) t.top.push_back({alt->first, std::log(alt->second)});
  r.token_logprobs = std::vector<TokenLogprob>{{"1:", 0.0, {}}, {" I", 0.0, {}}, {" am", 0.0, {}}, t};
  return r;
}

}  // namespace

TEST_CASE("average precision hand cases") {
  std::vector<PredictionRecord> r = {Rec("a", 0.9, true), Rec("b", 0.8, false), Rec("c", 0.7, true)};
  CHECK(AveragePrecision(r) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));

  std::vector<PredictionRecord> all = {Rec("a", 0.1, true), Rec("b", 0.5, true)};
  CHECK(AveragePrecision(all) == 1.0);
  std::vector<PredictionRecord> one = {Rec("a", 0.3, true)};
  CHECK(AveragePrecision(one) == 1.0);

  std::vector<PredictionRecord> none = {Rec("a", 0.3, false)};
  CHECK_THROWS_AS(AveragePrecision(none), DataError);
  CHECK_THROWS_AS(AveragePrecision({}), DataError);
}

TEST_CASE("ties break by question id") {
  // b (correct) ranks before a (wrong) only because of the id order.
  std::vector<PredictionRecord> r = {Rec("b", 0.5, true), Rec("a", 0.5, false)};
  CHECK(AveragePrecision(r) == doctest::Approx(0.5));
  std::vector<PredictionRecord> s = {Rec("a", 0.5, true), Rec("b", 0.5, false)};
  CHECK(AveragePrecision(s) == 1.0);
}

TEST_CASE("ECE hand cases") {
  std::vector<PredictionRecord> r;
  for (int i = 0; i < 10; ++i) r.push_back(Rec("q" + std::to_string(i), 0.75, i < 6));
  CHECK(ExpectedCalibrationError(r) == doctest::Approx(0.15).epsilon(1e-12));

  std::vector<PredictionRecord> perfect = {Rec("a", 1.0, true), Rec("b", 1.0, true)};
  CHECK(ExpectedCalibrationError(perfect) == 0.0);

  std::vector<PredictionRecord> coin = {Rec("a", 0.5, true), Rec("b", 0.5, false)};
  CHECK(ExpectedCalibrationError(coin) == 0.0);

  CHECK_THROWS_AS(ExpectedCalibrationError({}), DataError);
  CHECK_THROWS_AS(ExpectedCalibrationError(perfect, 0), UsageError);
}

TEST_CASE("bin edges are half-open, last bin closed") {
  CHECK(BinIndex(0.0, 10) == 0);
  CHECK(BinIndex(0.1, 10) == 1);
  CHECK(BinIndex(0.3, 10) == 3);
  CHECK(BinIndex(0.7, 10) == 7);
  CHECK(BinIndex(0.0999999, 10) == 0);
  CHECK(BinIndex(0.9, 10) == 9);
  CHECK(BinIndex(1.0, 10) == 9);
  for (int m = 0; m <= 20; ++m) {
    const double c = m / 20.0;
    const std::size_t b = BinIndex(c, 10);
    CHECK(c >= static_cast<double>(b) / 10);
    CHECK((c < static_cast<double>(b + 1) / 10 || b == 9));
  }
}

TEST_CASE("one-bin ECE is the gap between mean confidence and accuracy") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto r = oracle::RandomPredictions(rng, 30, false);
    double conf = 0.0;
    double acc = 0.0;
    for (const auto& p : r) {
      conf += p.confidence;
      acc += p.correct ? 1.0 : 0.0;
    }
    const double expect = std::fabs(conf / r.size() - acc / r.size());
    CHECK(ExpectedCalibrationError(r, 1) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("metrics agree with the oracles, are permutation invariant and lie in [0, 1]") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    auto r = oracle::RandomPredictions(rng, 12, true);
    const double ap = AveragePrecision(r);
    const double ece = ExpectedCalibrationError(r);
    CHECK(std::fabs(ap - oracle::AveragePrecisionByEnumeration(r)) <= 1e-12);
    CHECK(std::fabs(ece - oracle::EceByMembership(r, 10)) <= 1e-12);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
    CHECK(ece >= 0.0);
    CHECK(ece <= 1.0);

    // Fully tied duplicates fall back to input order, so give every record
    // its own id before permuting.
    for (std::size_t k = 0; k < r.size(); ++k) r[k].question_id = "id" + std::to_string(k);
    const double ap_unique = AveragePrecision(r);
    auto shuffled = r;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(AveragePrecision(shuffled) == doctest::Approx(ap_unique).epsilon(1e-12));
    CHECK(ExpectedCalibrationError(shuffled) == doctest::Approx(ece).epsilon(1e-12));
  }
}

TEST_CASE("accuracy among certain") {
  std::vector<PredictionRecord> r = {Rec("a", 1, true, true), Rec("b", 1, false, true),
                                     Rec("c", 0, true, false), Rec("d", 0, false, false)};
  CHECK(AccuracyAmongCertain(r) == 0.5);
  std::vector<PredictionRecord> unsure = {Rec("a", 0, true, false)};
  CHECK_THROWS_AS(AccuracyAmongCertain(unsure), DataError);
}

TEST_CASE("confidence score from logprobs") {
  CHECK(ConfidenceScore(WithLogprobs(" sure", 0.9, std::pair{std::string(" unsure"), 0.1}), 0, 1) ==
        doctest::Approx(0.9));
  // Unlisted alternative takes the residual mass.
  CHECK(ConfidenceScore(WithLogprobs(" sure", 0.9, std::nullopt), 0, 1) == doctest::Approx(0.9));
  CHECK(ConfidenceScore(WithLogprobs(" unsure", 0.5, std::pair{std::string(" sure"), 0.5}), 0, 1) ==
        doctest::Approx(0.5));
  // Only the discriminating pair matters, not the rest of the distribution.
  CHECK(ConfidenceScore(WithLogprobs(" unsure", 0.6, std::pair{std::string(" sure"), 0.2}), 0, 1) ==
        doctest::Approx(0.25));

  auto sc = ReadConfidence(WithLogprobs(" sure", 0.9, std::nullopt), 0, 1);
  CHECK(sc.from_logprobs);
  CHECK(sc.label.sure());
}

TEST_CASE("confidence score falls back to the phrase") {
  CompletionResponse r{"1: I am sure 2: I am unsure", std::nullopt, "x"};
  CHECK(ConfidenceScore(r, 0, 2) == 1.0);
  CHECK(ConfidenceScore(r, 1, 2) == 0.0);
  CHECK_FALSE(ReadConfidence(r, 1, 2).from_logprobs);

  CompletionResponse garbled{"1: perhaps", std::nullopt, "x"};
  CHECK_THROWS_AS(ConfidenceScore(garbled, 0, 1), DataError);
}

TEST_CASE("confidence tokens are configurable") {
  CompletionResponse r;
  r.text = "1: I am certain";
  r.token_logprobs = std::vector<TokenLogprob>{
      {"1: I am", 0.0, {}}, {" certain", std::log(0.7), {{" doubtful", std::log(0.3)}}}};
  CHECK(ConfidenceScore(r, 0, 1, {"certain", "doubtful"}) == doctest::Approx(0.7));
}

TEST_CASE("report round-trips and renders") {
  std::vector<PredictionRecord> r = {Rec("a", 0.95, true, true), Rec("b", 0.85, false, true),
                                     Rec("c", 0.05, false, false), Rec("d", 0.15, true, false)};
  CalibrationReport rep = BuildReport(r);
  CHECK(rep.counts == ReportCounts{4, 2, 2});
  CHECK(rep.bins.size() == 10);
  CHECK(ReportFromJson(Json::parse(DumpLine(ReportToJson(rep)))) == rep);

  const std::string table = RenderReportTable(rep, "toy");
  CHECK(table.find("toy") != std::string::npos);
  CHECK(table.find("AP") != std::string::npos);
  CHECK(table.find("50.0") != std::string::npos);  // accuracy among certain
  const std::string csv = RenderBinsCsv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("prediction records round-trip") {
  std::vector<PredictionRecord> r = {Rec("a", 0.25, true, false), Rec("b", 1.0, false, true)};
  const auto path = std::filesystem::temp_directory_path() / "mpcal_preds.jsonl";
  WriteFileAtomic(path, SerializePredictions(r));
  CHECK(LoadPredictions(path) == r);
}
