#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpcal/data_model.hpp"

namespace mpcal {

// Prompt layout. `layout` is free text with {exemplar}, {context} and
// {questions} placeholders; a line holding only a placeholder that renders
// empty is dropped whole. `item_format` is applied per question with
// {index} (1-based) and {question}.
struct PromptTemplate {
  std::string layout;
  std::string item_format = "{index}: {question}";
  std::string context_format = "Context: {context}";
  std::optional<std::string> exemplar;

  // Checked-in default; identical to templates/multi_problem.txt.
  static PromptTemplate Default();
  // Reads a layout file. Throws DataError if it lacks {questions}.
  static PromptTemplate FromFile(const std::filesystem::path& path);
};

struct MultiProblem {
  std::string id;
  std::vector<Problem> members;
  Setting setting = Setting::kIndependent;
  std::optional<std::string> shared_context;
  std::string prompt;

  std::size_t n() const { return members.size(); }
  std::vector<std::string> member_ids() const;
};

// Question text as it appears in a prompt: the problem's own context is
// prefixed unless it equals `shared_context`; MC choices are appended as
// "(A) text".
std::string RenderQuestion(const Problem& problem,
                           const std::optional<std::string>& shared_context);

std::string RenderPrompt(const MultiProblem& multi, const PromptTemplate& tmpl);

// Independent: shuffle with a seeded PRNG, then chunk into groups of n (the
// last group may be short). Sequential: chunk each group_key run in original
// order, never mixing groups. Every problem lands in exactly one
// MultiProblem. Throws UsageError if n == 0.
std::vector<MultiProblem> Compose(const Dataset& dataset, std::size_t n, std::uint64_t seed,
                                  const PromptTemplate& tmpl = PromptTemplate::Default());

// Deterministic Fisher-Yates over [0, size). Uses only mt19937_64 raw
// output (whose sequence is fixed by the standard) and rejection sampling,
// so the permutation is identical on every platform.
std::vector<std::size_t> SeededPermutation(std::size_t size, std::uint64_t seed);

// Composition artifact: one line per MultiProblem holding member ids and the
// rendered prompt. Members are rehydrated from the dataset on load.
Json MultiProblemToJson(const MultiProblem& multi);
std::string SerializeCompositions(const std::vector<MultiProblem>& multis);
std::vector<MultiProblem> LoadCompositions(const std::filesystem::path& path,
                                           const Dataset& dataset);

}  // namespace mpcal
