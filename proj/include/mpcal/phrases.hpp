#pragma once

#include <string_view>

namespace mpcal {

inline constexpr std::string_view kSurePhrase = "I am sure";
inline constexpr std::string_view kUnsurePhrase = "I am unsure";

// Closing instruction of every confidence-elicitation prompt.
inline constexpr std::string_view kCertaintyQuestion =
    "Are you sure you accurately answered the question based on your internal knowledge?";

}  // namespace mpcal
