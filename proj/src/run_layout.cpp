#include "damagepipe/run_layout.hpp"

#include <cctype>

#include <fmt/format.h>

#include "damagepipe/errors.hpp"
#include "damagepipe/raster.hpp"

namespace damagepipe {

namespace fs = std::filesystem;

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out += (std::isalnum(u) || c == '.' || c == '-') ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

RunLayout::RunLayout(fs::path run_dir, std::string run_id)
    : root_(std::move(run_dir) / "runs" / slug(run_id)), run_id_(std::move(run_id)) {}

fs::path RunLayout::scene(std::string_view pair_id) const {
  return root_ / "scenes" / (std::string(pair_id) + ".json");
}

fs::path RunLayout::crop(std::string_view pair_id, int index, bool post) const {
  return root_ / "crops" / std::string(pair_id) /
         fmt::format("{}_{}.png", index, post ? "post" : "pre");
}

fs::path RunLayout::assessments_dir(std::string_view candidate) const {
  return root_ / "assessments" / slug(candidate);
}

fs::path RunLayout::assessment(std::string_view candidate, std::string_view pair_id,
                               int index) const {
  return assessments_dir(candidate) / std::string(pair_id) / fmt::format("{}.json", index);
}

fs::path RunLayout::raw(std::string_view candidate, std::string_view pair_id, int index) const {
  return root_ / "raw" / slug(candidate) / std::string(pair_id) / fmt::format("{}.txt", index);
}

fs::path RunLayout::failure(std::string_view candidate, std::string_view pair_id,
                            int index) const {
  return root_ / "failures" / slug(candidate) / std::string(pair_id) /
         fmt::format("{}.json", index);
}

fs::path RunLayout::clip_scores(std::string_view candidate, std::string_view pair_id,
                                int index) const {
  return root_ / "clip" / slug(candidate) / std::string(pair_id) / fmt::format("{}.json", index);
}

fs::path RunLayout::verdict(std::string_view juror, std::string_view candidate,
                            std::string_view pair_id, int index) const {
  return root_ / "jury" / slug(juror) / slug(candidate) / std::string(pair_id) /
         fmt::format("{}.json", index);
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  write_binary_file(path, doc.dump(2) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_binary_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace damagepipe
