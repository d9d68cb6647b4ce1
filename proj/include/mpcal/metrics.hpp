#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpcal/boundary.hpp"
#include "mpcal/model_client.hpp"

namespace mpcal {

struct PredictionRecord {
  std::string question_id;
  bool correct = false;
  double confidence = 0.0;  // in [0, 1]
  ConfidenceLabel label;

  bool operator==(const PredictionRecord&) const = default;
};

// Tokens that tell "I am sure" from "I am unsure". Compared after trimming
// whitespace and ASCII-lowercasing the backend's token strings.
struct ConfidenceTokens {
  std::string sure = "sure";
  std::string unsure = "unsure";
};

struct SlotConfidence {
  double score = 0.0;
  ConfidenceLabel label;
  bool from_logprobs = false;
};

// Confidence for slot `slot_index` of an n-slot "k: I am sure/unsure"
// generation. With logprobs covering the slot's discriminating token the
// score is p_sure / (p_sure + p_unsure), both read from the chosen token and
// its listed alternatives; an alternative the backend did not list gets the
// residual mass 1 - p_chosen. Without usable logprobs the score is 1.0 for
// "I am sure" and 0.0 for "I am unsure". Throws DataError when the slot has
// neither a phrase nor covering logprobs.
SlotConfidence ReadConfidence(const CompletionResponse& response, std::size_t slot_index,
                              std::size_t n, const ConfidenceTokens& tokens = {});

double ConfidenceScore(const CompletionResponse& response, std::size_t slot_index, std::size_t n,
                       const ConfidenceTokens& tokens = {});

// Non-interpolated AP over `correct` as the positive class, ranking by
// confidence descending with ties broken by question_id ascending:
//   AP = sum_k (R_k - R_{k-1}) * P_k.
// Throws DataError if there are no records or no correct record.
double AveragePrecision(std::span<const PredictionRecord> records);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t size = 0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;

  bool operator==(const CalibrationBin&) const = default;
};

// Bin m covers [m/bins, (m+1)/bins); the last bin also takes 1.0.
std::size_t BinIndex(double confidence, std::size_t bins);

std::vector<CalibrationBin> ReliabilityBins(std::span<const PredictionRecord> records,
                                            std::size_t bins = 10);

// sum_m |B_m|/n * |mean confidence_m - accuracy_m|. Throws DataError on
// empty input, UsageError if bins == 0.
double ExpectedCalibrationError(std::span<const PredictionRecord> records, std::size_t bins = 10);

// Correct-and-sure over sure. Throws DataError when nothing is labeled sure.
double AccuracyAmongCertain(std::span<const PredictionRecord> records);

struct ReportCounts {
  std::size_t total = 0;
  std::size_t sure = 0;
  std::size_t correct = 0;

  bool operator==(const ReportCounts&) const = default;
};

struct CalibrationReport {
  double ap = 0.0;
  double ece = 0.0;
  double accuracy_among_certain = 0.0;
  std::vector<CalibrationBin> bins;
  ReportCounts counts;

  bool operator==(const CalibrationReport&) const = default;
};

CalibrationReport BuildReport(std::span<const PredictionRecord> records, std::size_t bins = 10);

Json ReportToJson(const CalibrationReport& report);
CalibrationReport ReportFromJson(const Json& j);

// Percentages with one decimal, laid out as name | AP | ECE | Acc.
std::string RenderReportTable(const CalibrationReport& report, std::string_view name);
std::string RenderBinsCsv(const CalibrationReport& report);

Json PredictionToJson(const PredictionRecord& p);
PredictionRecord PredictionFromJson(const Json& j);
std::string SerializePredictions(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> LoadPredictions(const std::filesystem::path& path);

}  // namespace mpcal
