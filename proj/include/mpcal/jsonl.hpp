#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace mpcal {

// Insertion-ordered JSON keeps emitted field order byte-stable.
using Json = nlohmann::ordered_json;

// Calls `fn(line_number, json)` for every non-blank line. Line numbers are
// 1-based. Parse failures raise DataError naming the file and line.
void ForEachJsonLine(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const Json&)>& fn);

// Compact single-line dump, UTF-8 passed through unescaped.
std::string DumpLine(const Json& j);

// Writes `content` to a sibling temp file and renames it into place, so a
// failed write never clobbers an existing artifact.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view content);

std::string ReadFile(const std::filesystem::path& path);

// Throws DataError unless every key of `obj` is in `allowed`.
void RejectUnknownKeys(const Json& obj, std::initializer_list<std::string_view> allowed,
                       std::string_view where);

}  // namespace mpcal
