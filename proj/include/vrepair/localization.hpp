#pragma once

#include <optional>
#include <string_view>

namespace vrepair {

/// Which lines of the input function get wrapped in <StartLoc>/<EndLoc>.
enum class LocalizationMode { kFirstLine, kNone, kAllLines, kSingleBlock };

const char* to_string(LocalizationMode mode);
std::optional<LocalizationMode> parse_localization_mode(std::string_view name);

}  // namespace vrepair
