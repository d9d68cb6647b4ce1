#include "mpcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mpcal/errors.hpp"
#include "mpcal/text.hpp"

namespace mpcal {
namespace {

void CheckConfidences(std::span<const PredictionRecord> records) {
  for (const PredictionRecord& r : records) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw DataError("confidence of \"" + r.question_id + "\" is outside [0, 1]");
    }
  }
}

std::string Percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

std::string Lowered(std::string_view token) { return text::ToLowerAscii(text::Trim(token)); }

}  // namespace

SlotConfidence ReadConfidence(const CompletionResponse& response, std::size_t slot_index,
                              std::size_t n, const ConfidenceTokens& tokens) {
  if (slot_index >= n) throw UsageError("slot index out of range");
  const std::string& text = response.text;
  auto slots = LocateSlots(text, n);
  if (!slots[slot_index]) {
    throw DataError("unparseable confidence: slot " + std::to_string(slot_index + 1) +
                    " not found");
  }
  const SlotSpan span = *slots[slot_index];

  std::optional<ConfidenceLabel> phrase;
  const std::string body = text::NormalizeAnswer(text.substr(span.begin, span.end - span.begin));
  if (text::ContainsTokenBounded(body, "i am unsure")) {
    phrase = ConfidenceLabel{Confidence::kUnsure};
  } else if (text::ContainsTokenBounded(body, "i am sure")) {
    phrase = ConfidenceLabel{Confidence::kSure};
  }

  if (response.token_logprobs) {
    const auto& toks = *response.token_logprobs;
    std::string joined;
    for (const TokenLogprob& t : toks) joined += t.token;
    if (joined == text) {
      std::size_t offset = 0;
      for (const TokenLogprob& t : toks) {
        const std::size_t start = offset;
        offset += t.token.size();
        if (start < span.begin || start >= span.end) continue;
        const std::string chosen = Lowered(t.token);
        const bool chose_sure = chosen == tokens.sure;
        if (!chose_sure && chosen != tokens.unsure) continue;

        const double p_chosen = std::exp(t.logprob);
        std::optional<double> p_other;
        const std::string& other = chose_sure ? tokens.unsure : tokens.sure;
        for (const TopLogprob& alt : t.top) {
          if (Lowered(alt.token) == other) {
            p_other = std::exp(alt.logprob);
            break;
          }
        }
        const double other_mass = p_other.value_or(std::max(0.0, 1.0 - p_chosen));
        const double p_sure = chose_sure ? p_chosen : other_mass;
        const double p_unsure = chose_sure ? other_mass : p_chosen;
        if (p_sure + p_unsure <= 0.0) break;
        SlotConfidence out;
        out.score = std::clamp(p_sure / (p_sure + p_unsure), 0.0, 1.0);
        out.label = phrase.value_or(ConfidenceLabel{chose_sure ? Confidence::kSure : Confidence::kUnsure});
        out.from_logprobs = true;
        return out;
      }
    }
  }

  if (!phrase) {
    throw DataError("unparseable confidence in slot " + std::to_string(slot_index + 1));
  }
  return SlotConfidence{phrase->sure() ? 1.0 : 0.0, *phrase, false};
}

double ConfidenceScore(const CompletionResponse& response, std::size_t slot_index, std::size_t n,
                       const ConfidenceTokens& tokens) {
  return ReadConfidence(response, slot_index, n, tokens).score;
}

double AveragePrecision(std::span<const PredictionRecord> records) {
  if (records.empty()) throw DataError("average precision needs at least one record");
  CheckConfidences(records);
  const auto positives = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.correct; }));
  if (positives == 0) throw DataError("average precision undefined: no correct records");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].confidence != records[b].confidence) {
      return records[a].confidence > records[b].confidence;
    }
    return records[a].question_id < records[b].question_id;
  });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 1; k <= order.size(); ++k) {
    if (records[order[k - 1]].correct) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(k);
    const double recall = static_cast<double>(hits) / static_cast<double>(positives);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

std::size_t BinIndex(double confidence, std::size_t bins) {
  if (bins == 0) throw UsageError("bins must be at least 1");
  const auto lower = [bins](std::size_t m) {
    return static_cast<double>(m) / static_cast<double>(bins);
  };
  auto m = static_cast<std::size_t>(
      std::clamp(std::floor(confidence * static_cast<double>(bins)), 0.0,
                 static_cast<double>(bins - 1)));
  // floor(c * bins) can land one off near an edge; settle against the
  // actual bin edges.
  while (m > 0 && confidence < lower(m)) --m;
  while (m + 1 < bins && confidence >= lower(m + 1)) ++m;
  return m;
}

std::vector<CalibrationBin> ReliabilityBins(std::span<const PredictionRecord> records,
                                            std::size_t bins) {
  if (bins == 0) throw UsageError("bins must be at least 1");
  CheckConfidences(records);
  std::vector<CalibrationBin> out(bins);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<std::size_t> correct(bins, 0);
  for (std::size_t m = 0; m < bins; ++m) {
    out[m].lower = static_cast<double>(m) / static_cast<double>(bins);
    out[m].upper = static_cast<double>(m + 1) / static_cast<double>(bins);
  }
  for (const PredictionRecord& r : records) {
    const std::size_t m = BinIndex(r.confidence, bins);
    ++out[m].size;
    conf_sum[m] += r.confidence;
    if (r.correct) ++correct[m];
  }
  for (std::size_t m = 0; m < bins; ++m) {
    if (out[m].size == 0) continue;
    const auto size = static_cast<double>(out[m].size);
    out[m].mean_confidence = conf_sum[m] / size;
    out[m].empirical_accuracy = static_cast<double>(correct[m]) / size;
  }
  return out;
}

double ExpectedCalibrationError(std::span<const PredictionRecord> records, std::size_t bins) {
  if (records.empty()) throw DataError("ECE needs at least one record");
  const auto total = static_cast<double>(records.size());
  double ece = 0.0;
  for (const CalibrationBin& b : ReliabilityBins(records, bins)) {
    if (b.size == 0) continue;
    ece += static_cast<double>(b.size) / total * std::abs(b.mean_confidence - b.empirical_accuracy);
  }
  return ece;
}

double AccuracyAmongCertain(std::span<const PredictionRecord> records) {
  std::size_t sure = 0;
  std::size_t sure_correct = 0;
  for (const PredictionRecord& r : records) {
    if (!r.label.sure()) continue;
    ++sure;
    if (r.correct) ++sure_correct;
  }
  if (sure == 0) throw DataError("accuracy among certain undefined: nothing labeled sure");
  return static_cast<double>(sure_correct) / static_cast<double>(sure);
}

CalibrationReport BuildReport(std::span<const PredictionRecord> records, std::size_t bins) {
  if (records.empty()) throw DataError("report needs at least one prediction");
  CalibrationReport report;
  report.ap = AveragePrecision(records);
  report.ece = ExpectedCalibrationError(records, bins);
  report.accuracy_among_certain = AccuracyAmongCertain(records);
  report.bins = ReliabilityBins(records, bins);
  report.counts.total = records.size();
  for (const PredictionRecord& r : records) {
    if (r.label.sure()) ++report.counts.sure;
    if (r.correct) ++report.counts.correct;
  }
  return report;
}

Json ReportToJson(const CalibrationReport& report) {
  Json j;
  j["ap"] = report.ap;
  j["ece"] = report.ece;
  j["accuracy_among_certain"] = report.accuracy_among_certain;
  Json bins = Json::array();
  for (const CalibrationBin& b : report.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"size", b.size},
                    {"mean_confidence", b.mean_confidence},
                    {"empirical_accuracy", b.empirical_accuracy}});
  }
  j["bins"] = std::move(bins);
  j["counts"] = {{"total", report.counts.total},
                 {"sure", report.counts.sure},
                 {"correct", report.counts.correct}};
  return j;
}

CalibrationReport ReportFromJson(const Json& j) {
  CalibrationReport r;
  r.ap = j.at("ap").get<double>();
  r.ece = j.at("ece").get<double>();
  r.accuracy_among_certain = j.at("accuracy_among_certain").get<double>();
  for (const Json& b : j.at("bins")) {
    r.bins.push_back({b.at("lower").get<double>(), b.at("upper").get<double>(),
                      b.at("size").get<std::size_t>(), b.at("mean_confidence").get<double>(),
                      b.at("empirical_accuracy").get<double>()});
  }
  const Json& c = j.at("counts");
  r.counts = {c.at("total").get<std::size_t>(), c.at("sure").get<std::size_t>(),
              c.at("correct").get<std::size_t>()};
  return r;
}

std::string RenderReportTable(const CalibrationReport& report, std::string_view name) {
  std::string label(name.empty() ? "dataset" : name);
  const std::size_t width = std::max<std::size_t>(label.size(), 7);
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-*s  %6s  %6s  %6s\n", static_cast<int>(width), "Dataset",
                "AP", "ECE", "Acc");
  out += line;
  out += std::string(width + 24, '-') + "\n";
  std::snprintf(line, sizeof line, "%-*s  %6s  %6s  %6s\n", static_cast<int>(width), label.c_str(),
                Percent(report.ap).c_str(), Percent(report.ece).c_str(),
                Percent(report.accuracy_among_certain).c_str());
  out += line;
  std::snprintf(line, sizeof line, "(%zu predictions, %zu sure, %zu correct)\n",
                report.counts.total, report.counts.sure, report.counts.correct);
  out += line;
  return out;
}

std::string RenderBinsCsv(const CalibrationReport& report) {
  std::string out = "lower,upper,size,mean_confidence,empirical_accuracy\n";
  char line[160];
  for (const CalibrationBin& b : report.bins) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%zu,%.17g,%.17g\n", b.lower, b.upper, b.size,
                  b.mean_confidence, b.empirical_accuracy);
    out += line;
  }
  return out;
}

Json PredictionToJson(const PredictionRecord& p) {
  Json j;
  j["question_id"] = p.question_id;
  j["correct"] = p.correct;
  j["confidence"] = p.confidence;
  j["label"] = p.label.rendered();
  return j;
}

PredictionRecord PredictionFromJson(const Json& j) {
  RejectUnknownKeys(j, {"question_id", "correct", "confidence", "label"}, "prediction");
  PredictionRecord p;
  p.question_id = j.at("question_id").get<std::string>();
  p.correct = j.at("correct").get<bool>();
  p.confidence = j.at("confidence").get<double>();
  auto label = ConfidenceLabel::FromRendered(j.at("label").get<std::string>());
  if (!label) throw DataError("unrecognized label in prediction \"" + p.question_id + "\"");
  p.label = *label;
  if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
    throw DataError("confidence of \"" + p.question_id + "\" is outside [0, 1]");
  }
  return p;
}

std::string SerializePredictions(std::span<const PredictionRecord> records) {
  std::string out;
  for (const PredictionRecord& p : records) {
    out += DumpLine(PredictionToJson(p));
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> LoadPredictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  ForEachJsonLine(path, [&](std::size_t, const Json& j) { out.push_back(PredictionFromJson(j)); });
  return out;
}

}  // namespace mpcal
