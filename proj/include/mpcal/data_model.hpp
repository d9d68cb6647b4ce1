#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpcal/jsonl.hpp"

namespace mpcal {

enum class Format { kQA, kMC };
enum class Setting { kIndependent, kSequential };

std::string_view ToString(Format f);
std::string_view ToString(Setting s);
// Accepts "QA"/"MC" (any case). Throws DataError otherwise.
Format ParseFormat(std::string_view s);
// Accepts "independent"/"sequential" (any case). Throws UsageError otherwise.
Setting ParseSetting(std::string_view s);

struct Choice {
  std::string letter;
  std::string text;

  bool operator==(const Choice&) const = default;
};

// One single-question item. `choices` is engaged iff format == kMC.
struct Problem {
  std::string id;
  std::string question;
  std::optional<std::string> context;
  std::vector<std::string> gold;
  Format format = Format::kQA;
  std::optional<std::vector<Choice>> choices;
  std::optional<std::string> group_key;
  std::string dataset;

  bool operator==(const Problem&) const = default;
};

struct Dataset {
  std::string name;
  Setting setting = Setting::kIndependent;
  std::vector<Problem> problems;

  bool operator==(const Dataset&) const = default;
};

struct LoadOptions {
  // Ignore unknown keys instead of rejecting the line.
  bool lenient = false;
  // Dataset name; defaults to the file stem.
  std::optional<std::string> name;
};

// Reads the normalized JSONL schema. Throws DataError on a malformed line
// (naming the line number) or on any invariant violation.
Dataset LoadDataset(const std::filesystem::path& path, Setting setting,
                    const LoadOptions& options = {});

// Parses every line (malformed lines still throw) without checking
// invariants; pair with Validate to list every violation at once.
Dataset ReadDatasetUnchecked(const std::filesystem::path& path, Setting setting,
                             const LoadOptions& options = {});

// Returns one description per violated invariant; empty iff the dataset is
// valid. Each description names the offending problem id.
std::vector<std::string> Validate(const Dataset& dataset);

// Problem-local invariants only (no cross-problem checks).
std::vector<std::string> ValidateProblem(const Problem& problem);

// Schema-order JSON for one problem; `dataset` is not part of the line schema.
Json ProblemToJson(const Problem& problem);
Problem ProblemFromJson(const Json& j, bool lenient, std::string dataset_name);

// One line per problem, schema field order. LoadDataset inverts this.
std::string SerializeDataset(const Dataset& dataset);

// Letters of the choices named by the gold answers (a gold entry may be a
// letter or a choice text). Empty for QA problems.
std::vector<std::string> GoldLetters(const Problem& problem);

}  // namespace mpcal
