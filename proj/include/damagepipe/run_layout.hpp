#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace damagepipe {

/// Model names as directory components: "qwen3-vl:32b" -> "qwen3-vl_32b".
std::string slug(std::string_view name);

/// Paths of every artifact under <run_dir>/runs/<run_id>/.
class RunLayout {
 public:
  RunLayout(std::filesystem::path run_dir, std::string run_id);

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::string& run_id() const noexcept { return run_id_; }

  std::filesystem::path manifest() const { return root_ / "manifest.json"; }
  std::filesystem::path scene(std::string_view pair_id) const;
  std::filesystem::path crop(std::string_view pair_id, int index, bool post) const;
  std::filesystem::path assessment(std::string_view candidate, std::string_view pair_id,
                                   int index) const;
  std::filesystem::path assessments_dir(std::string_view candidate) const;
  std::filesystem::path raw(std::string_view candidate, std::string_view pair_id,
                            int index) const;
  std::filesystem::path failure(std::string_view candidate, std::string_view pair_id,
                                int index) const;
  std::filesystem::path clip_scores(std::string_view candidate, std::string_view pair_id,
                                    int index) const;
  std::filesystem::path clip_report() const { return root_ / "clip_report.json"; }
  std::filesystem::path verdict(std::string_view juror, std::string_view candidate,
                                std::string_view pair_id, int index) const;
  std::filesystem::path jury_report() const { return root_ / "jury_report.json"; }
  std::filesystem::path metrics_report() const { return root_ / "metrics_report.json"; }
  std::filesystem::path term_frequencies() const { return root_ / "term_frequencies.json"; }

 private:
  std::filesystem::path root_;
  std::string run_id_;
};

/// Pretty-printed, key-sorted, newline-terminated.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace damagepipe
