#pragma once

#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace damagepipe {

/// First balanced {...} span in free text that parses as a JSON object.
/// Models wrap replies in prose and code fences; both are skipped.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

}  // namespace damagepipe
