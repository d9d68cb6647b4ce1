#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpcal::text {

std::string_view Trim(std::string_view s);
std::string ToLowerAscii(std::string_view s);

// Answer normalization used for both training labels and evaluation:
// ASCII-lowercase, delete ASCII punctuation, collapse whitespace runs to a
// single space, then drop one leading article (a / an / the).
std::string NormalizeAnswer(std::string_view s);

// True iff `needle` occurs in `haystack` with a space or string edge on both
// sides. Both arguments are expected to be normalized already.
bool ContainsTokenBounded(std::string_view haystack, std::string_view needle);

// The last decimal number in `s` (optional sign, digits with optional
// thousands commas, optional fraction), in canonical form; nullopt if none.
std::optional<std::string> LastNumber(std::string_view s);

// Canonical exact-decimal spelling of `s` if the whole (trimmed) string is a
// number: commas removed, leading zeros and trailing fractional zeros
// stripped, "-0" folded to "0". nullopt if `s` is not a number.
std::optional<std::string> CanonicalDecimal(std::string_view s);

}  // namespace mpcal::text
