#include "damagepipe/prompts.hpp"

#include <array>

#include <fmt/format.h>

namespace damagepipe::prompts {

namespace {

struct Level {
  std::string_view name;
  std::string_view looks_like;
};

constexpr std::array<Level, 4> kScale = {{
    {"No/Slight Damage", "structure undisturbed; no visible roof, wall or water damage"},
    {"Moderate Damage",
     "roof elements missing, visible cracks, or water surrounding the structure"},
    {"Severe Damage", "partial wall or roof collapse, or the structure surrounded by water/mud"},
    {"Totally Destroyed",
     "completely collapsed, scorched, covered by water/mud, or no longer present"},
}};

std::string scale_block() {
  std::string out;
  for (std::size_t i = 0; i < kScale.size(); ++i) {
    out += fmt::format("({}) {}: {}\n", i + 1, kScale[i].name, kScale[i].looks_like);
  }
  return out;
}

}  // namespace

std::string assessment_prompt() {
  return fmt::format(
      "You are assisting disaster response teams. You are given two satellite image crops of "
      "the same building. The first image was captured before the disaster, the second "
      "after it.\n"
      "\n"
      "Compare the pre-disaster image with the post-disaster image and classify the severity "
      "of damage to the building according to the xBD damage scale:\n"
      "{}"
      "\n"
      "Then describe, for rescue teams, the nature of the hazards present, the "
      "characteristics of the damaged building, and essential safety recommendations for "
      "rescue workers.\n"
      "\n"
      "Reply with a single JSON object and nothing else, using exactly these keys:\n"
      "{{\n"
      "  \"category\": <integer 1-4>,\n"
      "  \"reasoning\": \"<why this category was assigned>\",\n"
      "  \"hazards\": [\"<hazard>\", ...],\n"
      "  \"characteristics\": [\"<observed characteristic of the building>\", ...],\n"
      "  \"recommendations\": [\"<safety recommendation>\", ...]\n"
      "}}\n",
      scale_block());
}

std::string jury_prompt(std::string_view candidate_answer) {
  return fmt::format(
      "You act as a {}. You are given a pre-disaster image and a post-disaster image of the "
      "same location, followed by a damage assessment written by a candidate model that "
      "saw the same images.\n"
      "\n"
      "Damage scale used by the candidate:\n"
      "{}"
      "\n"
      "Grade the candidate assessment from 0 to 100, judging correctness of the assigned "
      "damage category, completeness, relevance, clarity and hallucination risk.\n"
      "Scoring rubric:\n"
      "90-100 (excellent): correct category, complete and actionable hazards and "
      "recommendations, no hallucinated details\n"
      "75-89 (good): correct or adjacent category with minor omissions\n"
      "50-74 (weak): questionable category or vague, partly unsupported description\n"
      "0-49 (critical failure): wrong category or hallucinated, unsafe guidance\n"
      "\n"
      "Candidate assessment:\n"
      "<<<\n"
      "{}\n"
      ">>>\n"
      "\n"
      "Reply with a single JSON object and nothing else, using exactly these keys:\n"
      "{{\n"
      "  \"score\": <number 0-100>,\n"
      "  \"classification_accuracy\": \"<correct | incorrect, and the category you would "
      "assign>\",\n"
      "  \"reasoning\": \"<short justification of the score>\"\n"
      "}}\n",
      kJuryPersona, scale_block(), candidate_answer);
}

std::string repair_prompt(std::string_view original_prompt, std::string_view rejected_reply) {
  return fmt::format("{}\nYour previous reply was:\n<<<\n{}\n>>>\n\n{}\n", original_prompt,
                     rejected_reply, kRepairInstruction);
}

}  // namespace damagepipe::prompts
