#pragma once

#include <string>
#include <string_view>

#include "damagepipe/clip_eval.hpp"
#include "damagepipe/run_layout.hpp"

namespace damagepipe::report {

/// "moore-tornado" -> "Moore Tornado".
std::string event_title(std::string_view event);
/// First letter upper-cased: "qwen3-vl:32b" -> "Qwen3-vl:32b".
std::string model_title(std::string_view model);
/// "Qwen3-vl:32b 63.34 72.60 54.83".
std::string clip_row(const clip::DatasetClipReport& r);

/// Renders every table whose source file exists in the run. Reads only.
/// Throws ConfigError when the run has nothing to report.
std::string render(const RunLayout& layout);

}  // namespace damagepipe::report
