#pragma once

#include <string>
#include <string_view>

namespace damagepipe::prompts {

/// Appended to a prompt when the previous reply could not be parsed.
inline constexpr std::string_view kRepairInstruction =
    "Your previous reply could not be parsed. Reply again with only the JSON object "
    "described above and no other text.";

inline constexpr std::string_view kJuryPersona =
    "Senior Structural Engineer and Disaster Response Evaluator";

/// Assessment prompt: four-level scale, pre/post comparison instructions and
/// the JSON reply schema.
std::string assessment_prompt();

/// Jury prompt for one candidate answer. The candidate model is not named.
std::string jury_prompt(std::string_view candidate_answer);

/// Original prompt followed by the repair instruction and the rejected reply.
std::string repair_prompt(std::string_view original_prompt, std::string_view rejected_reply);

}  // namespace damagepipe::prompts
