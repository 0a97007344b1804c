// Runs every acceptance criterion of the primary component and prints one
// PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "damagepipe/assess.hpp"
#include "damagepipe/cli.hpp"
#include "damagepipe/clip_eval.hpp"
#include "damagepipe/geometry.hpp"
#include "damagepipe/inference.hpp"
#include "damagepipe/jury.hpp"
#include "damagepipe/metrics.hpp"
#include "damagepipe/mock_backend.hpp"
#include "damagepipe/raster.hpp"
#include "damagepipe/run_layout.hpp"
#include "damagepipe/synthetic.hpp"
#include "support.hpp"

using namespace damagepipe;
using damagepipe::testing::Gen;
using damagepipe::testing::TempDir;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Collects the first few violations of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_.size() < 5) failures_.push_back(what);
    ++count_;
  }
  bool ok() const { return count_ == 0; }
  std::string summary() const {
    std::string s = fmt::format("{} violation(s)", count_);
    for (const auto& f : failures_) s += "; " + f;
    return s;
  }

 private:
  std::vector<std::string> failures_;
  long count_ = 0;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<void(Check&)> run;
};

inference::Embedding emb(std::vector<double> v) { return {std::move(v), "clip"}; }

void eq1_oracle(Check& c) {
  Gen g(101);
  const clip::ScoreConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = g.coin() ? 512 : g.integer(2, 8);  // low dims spread the cosine over [-1, 1]
    const auto a = g.unit_vector(dim), b = g.unit_vector(dim);
    long double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < dim; ++i) {
      dot += static_cast<long double>(a[i]) * b[i];
      na += static_cast<long double>(a[i]) * a[i];
      nb += static_cast<long double>(b[i]) * b[i];
    }
    const long double cos = dot / std::sqrt(na * nb);
    const double expected = static_cast<double>(cfg.w * std::max(100.0L * cos, 0.0L));
    const double got = clip::clip_score(emb(a), emb(b), cfg);
    c.expect(std::abs(got - expected) <= 1e-9, fmt::format("trial {}: {} vs {}", trial, got, expected));
    if (cos <= 0) c.expect(got == 0.0, fmt::format("trial {}: cos <= 0 gave {}", trial, got));
    c.expect(clip::clip_score(emb(a), emb(a), cfg) == cfg.w * 100.0, "identical vectors");
    std::vector<double> neg(a);
    for (auto& x : neg) x = -x;
    c.expect(clip::clip_score(emb(a), emb(neg), cfg) == 0.0, "opposite vectors");
  }
}

void chunking_law(Check& c) {
  std::vector<std::int64_t> ids;
  for (int n = 1; n <= 10000; ++n) {
    ids.push_back(n * 7 + 3);
    const auto chunks = clip::chunk_tokens(ids, 77);
    c.expect(chunks.size() == static_cast<std::size_t>((n + 76) / 77), fmt::format("n={} count", n));
    std::vector<std::int64_t> joined;
    for (const auto& ch : chunks) {
      c.expect(!ch.empty() && ch.size() <= 77, fmt::format("n={} chunk size {}", n, ch.size()));
      joined.insert(joined.end(), ch.begin(), ch.end());
    }
    c.expect(joined == ids, fmt::format("n={} reconstruction", n));
  }
}

void f1_row(Check& c) {
  const double f1 = metrics::f1_from(0.8198, 0.9342);
  c.expect(std::abs(f1 - 0.8733) <= 1e-4, fmt::format("f1 {}", f1));
}

void padding(Check& c) {
  Gen g(102);
  const geometry::ImageDims dims(4096, 4096);
  int unclamped = 0;
  while (unclamped < 1000) {
    const auto b = g.box(0, 4096);
    const auto padded = geometry::pad_bbox(b, 0.30, dims);
    c.expect(padded.within(dims), "padded box outside image");
    const double gx = b.width() * 0.15, gy = b.height() * 0.15;
    if (b.x_min() - gx < 0 || b.y_min() - gy < 0 || b.x_max() + gx > 4096 || b.y_max() + gy > 4096) {
      continue;
    }
    ++unclamped;
    const double ratio = padded.area() / b.area();
    c.expect(std::abs(ratio - 1.69) <= 1e-9, fmt::format("area ratio {}", ratio));
  }
  // Boxes touching the border are clamped and stay inside.
  for (int trial = 0; trial < 1000; ++trial) {
    const double w = g.real(1, 400), h = g.real(1, 400);
    const geometry::BBox edge(0, 4096 - h, w, 4096);
    c.expect(geometry::pad_bbox(edge, 0.30, dims).within(dims), "clamped box outside image");
  }
}

void scale_round_trip(Check& c) {
  Gen g(103);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto b = g.box(0, 1024);
    const auto r = geometry::scale_bbox(geometry::scale_bbox(b, 4), 0.25);
    c.expect(std::abs(r.x_min() - b.x_min()) <= 1e-9 && std::abs(r.y_min() - b.y_min()) <= 1e-9 &&
                 std::abs(r.x_max() - b.x_max()) <= 1e-9 && std::abs(r.y_max() - b.y_max()) <= 1e-9,
             "round trip drift");
    c.expect(geometry::scale_bbox(b, 4).within(geometry::ImageDims(4096, 4096)), "scaled box exceeds 4096");
  }
  // Through the gateway: a 1024 scene upscaled by the mock, detections in 4096 space.
  const inference::Client client({.base_url = "mock://acceptance-scale", .model_name = "m", .backoff_s = 0},
                                 std::make_shared<inference::MockBackend>());
  Raster scene(geometry::ImageDims(1024, 1024), synthetic::kBackground);
  for (int i = 0; i < 16; ++i) {
    const int x = (i % 4) * 256, y = (i / 4) * 256;
    synthetic::paint(scene, i + 1, true, 1 + i % 4, x, y, x + 256, y + 256);
  }
  const auto up = client.upscale(scene, 4);
  c.expect(up.dims() == geometry::ImageDims(4096, 4096), "upscaled dims");
  const auto dets = client.detect(up);
  c.expect(dets.size() == 16, fmt::format("{} detections", dets.size()));
  for (const auto& d : dets) c.expect(d.bbox.within(up.dims()), "detection exceeds 4096");
}

void metrics_oracle(Check& c) {
  Gen g(104);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = g.integer(1, 100);
    std::vector<metrics::Bucket> p, t;
    for (int i = 0; i < n; ++i) {
      p.push_back(g.coin() ? metrics::Bucket::kSevere : metrics::Bucket::kMinor);
      t.push_back(g.coin() ? metrics::Bucket::kSevere : metrics::Bucket::kMinor);
    }
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < n; ++i) {
      const bool ps = p[i] == metrics::Bucket::kSevere, ts = t[i] == metrics::Bucket::kSevere;
      tp += ps && ts;
      fp += ps && !ts;
      fn += !ps && ts;
      tn += !ps && !ts;
    }
    const auto r = metrics::classification_metrics(p, t);
    c.expect(r.counts == metrics::ConfusionCounts{tp, fp, fn, tn}, fmt::format("trial {} counts", trial));
    c.expect(r.accuracy == static_cast<double>(tp + tn) / n, "accuracy");
    c.expect(r.precision.has_value() == (tp + fp > 0), "precision definedness");
    c.expect(r.recall.has_value() == (tp + fn > 0), "recall definedness");
    if (tp + fp > 0) c.expect(*r.precision == double(tp) / (tp + fp), "precision");
    if (tp + fn > 0) c.expect(*r.recall == double(tp) / (tp + fn), "recall");
    c.expect(r.f1.has_value() == (tp + fp > 0 && tp + fn > 0), "f1 definedness");
    if (r.f1 && r.precision && r.recall) {
      const double pr = double(tp) / (tp + fp), rc = double(tp) / (tp + fn);
      c.expect(*r.f1 == (pr + rc == 0 ? 0.0 : 2 * pr * rc / (pr + rc)), fmt::format("trial {} f1", trial));
    }
  }
}

void jury_oracle(Check& c) {
  Gen g(105);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<jury::JuryVerdict> vs;
    std::map<std::string, std::pair<double, long>> groups;
    for (int i = g.integer(1, 80); i > 0; --i) {
      const std::string cand = fmt::format("cand{}", g.integer(0, 6));
      const double s = g.real(0, 100);
      vs.push_back({s, "", "", fmt::format("juror{}", g.integer(0, 3)), cand});
      groups[cand].first += s;
      ++groups[cand].second;
    }
    const auto r = jury::aggregate_rankings(vs);
    c.expect(r.entries.size() == groups.size(), "group count");
    for (const auto& e : r.entries) {
      const auto& [sum, n] = groups.at(e.candidate_model);
      c.expect(std::abs(e.mean - sum / n) <= 1e-12, fmt::format("{} mean", e.candidate_model));
    }
  }
  const std::map<double, jury::Band> grid{
      {0, jury::Band::kCriticalFailure}, {49, jury::Band::kCriticalFailure},
      {49.5, jury::Band::kCriticalFailure}, {50, jury::Band::kWeak},
      {74, jury::Band::kWeak}, {75, jury::Band::kGood},
      {89, jury::Band::kGood}, {90, jury::Band::kExcellent},
      {100, jury::Band::kExcellent}};
  for (const auto& [score, band] : grid) {
    c.expect(jury::band_of(score) == band, fmt::format("band_of({})", score));
  }
  for (int i = 0; i <= 1000000; ++i) {
    const double s = i / 10000.0;
    int hits = 0;
    for (const auto& b : jury::rubric()) {
      hits += s >= b.lo && (s < b.hi || (b.band == jury::Band::kExcellent && s <= b.hi));
    }
    if (hits != 1) c.expect(false, fmt::format("{} in {} bands", s, hits));
  }
}

// --- end to end -----------------------------------------------------------

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run_command(args, o, e);
  if (out) *out = o.str();
  return code;
}

std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string bytes = read_binary_file(entry.path());
    const std::string rel = fs::relative(entry.path(), root).generic_string();
    if (rel == "manifest.json") {
      auto doc = json::parse(bytes);
      doc.erase("created_at");
      doc.erase("timing_s");
      bytes = doc.dump();
    }
    files[rel] = std::move(bytes);
  }
  return files;
}

const char* kMockUrl = "mock://acceptance-e2e";

fs::path write_config(const TempDir& dir) {
  synthetic::write_dataset(dir / "dataset", {.pairs = 3, .buildings_per_pair = 3});
  const json cfg = {{"dataset_root", "dataset"},
                    {"run_id", "e2e"},
                    {"endpoints", {{"default", {{"base_url", kMockUrl}, {"model_name", "mock"}, {"backoff_s", 0}}}}}};
  write_binary_file(dir / "config.json", cfg.dump(2));
  return dir / "config.json";
}

void end_to_end(Check& c) {
  TempDir dir("acceptance-e2e");
  const std::string config = write_config(dir).string();
  std::vector<std::string> reports;
  for (const char* run_dir : {"run_a", "run_b"}) {
    const std::string set_dir = "run_dir=" + (dir / run_dir).string();
    for (const char* stage : {"assess", "eval-clip", "eval-jury", "metrics", "report"}) {
      std::string out;
      const int code = cli({stage, "--config", config, "--set", set_dir}, &out);
      c.expect(code == 0, fmt::format("{} in {} exited {}", stage, run_dir, code));
      if (std::string(stage) == "report") reports.push_back(out);
    }
  }
  const auto a = artifacts(dir / "run_a/runs/e2e");
  const auto b = artifacts(dir / "run_b/runs/e2e");
  c.expect(a.size() > 20, fmt::format("only {} artifacts", a.size()));
  for (const char* f : {"manifest.json", "clip_report.json", "jury_report.json", "metrics_report.json",
                        "term_frequencies.json"}) {
    c.expect(a.contains(f), fmt::format("missing {}", f));
  }
  c.expect(a.size() == b.size(), "artifact sets differ in size");
  for (const auto& [rel, bytes] : a) {
    auto it = b.find(rel);
    c.expect(it != b.end() && it->second == bytes, fmt::format("{} differs", rel));
  }
  c.expect(reports.size() == 2 && reports[0] == reports[1], "report output differs");

  auto mock = inference::shared_mock(kMockUrl);
  mock->reset_counters();
  const int again = cli({"assess", "--config", config, "--set", "run_dir=" + (dir / "run_a").string()});
  c.expect(again == 0, "re-run exit code");
  c.expect(mock->calls() == 0, fmt::format("re-run issued {} backend calls", mock->calls()));
}

void ablation(Check& c) {
  TempDir dir("acceptance-ablation");
  const std::string config = write_config(dir).string();
  const std::string run_dir = "run_dir=" + (dir / "out").string();
  c.expect(cli({"assess", "--config", config, "--set", run_dir, "--set", "run_id=sr_on"}) == 0, "sr on");
  c.expect(cli({"assess", "--config", config, "--set", run_dir, "--set", "run_id=sr_off", "--set",
                "super_resolution.enabled=false"}) == 0,
           "sr off");
  const RunLayout on(dir / "out", "sr_on"), off(dir / "out", "sr_off");
  for (const auto& cand : {"qwen3-vl:32b", "gemma3:12b"}) {
    const auto a_on = assess::load_assessments(on, cand);
    const auto a_off = assess::load_assessments(off, cand);
    std::set<std::pair<std::string, int>> keys_on, keys_off;
    for (const auto& [k, v] : a_on) keys_on.insert(k);
    for (const auto& [k, v] : a_off) keys_off.insert(k);
    c.expect(!keys_on.empty() && keys_on == keys_off, fmt::format("{}: assessment sets differ", cand));
  }
  for (const auto& entry : fs::directory_iterator(dir / "out/runs/sr_on/scenes")) {
    const auto s_on = assess::scene_from_json(read_json(entry.path()));
    const auto s_off = assess::scene_from_json(read_json(dir / "out/runs/sr_off/scenes" / entry.path().filename()));
    c.expect(s_on.scale == 4.0 && s_off.scale == 1.0, "scene scale");
    c.expect(s_on.buildings.size() == s_off.buildings.size(), "building count");
    for (std::size_t i = 0; i < std::min(s_on.buildings.size(), s_off.buildings.size()); ++i) {
      c.expect(geometry::scale_bbox(s_off.buildings[i].box, 4) == s_on.buildings[i].box,
               fmt::format("{} building {} coordinates", s_on.pair_id, i));
      c.expect(s_off.buildings[i].box.within(s_off.native_dims), "native box out of bounds");
    }
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"clip_score oracle (1000 unit-vector pairs)", 1.0, eq1_oracle},
      {"chunking law (n = 1..10000, limit 77)", 5.0, chunking_law},
      {"F1 of precision 0.8198 / recall 0.9342 is 0.8733", 0, f1_row},
      {"padding geometry (area 1.69x, clamped in bounds)", 0, padding},
      {"scale round trip and 1024 -> 4096 bounds", 0, scale_round_trip},
      {"classification metrics brute-force oracle (200 sets)", 0, metrics_oracle},
      {"jury aggregation oracle and band partition", 0, jury_oracle},
      {"end-to-end determinism and assess idempotence", 60.0, end_to_end},
      {"super-resolution ablation keeps assessments, coordinates x1", 0, ablation},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.expect(false, fmt::format("exception: {}", e.what()));
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.budget_s > 0) {
      check.expect(elapsed < cr.budget_s, fmt::format("took {:.2f} s, budget {:.0f} s", elapsed, cr.budget_s));
    }
    failed += !check.ok();
    std::cout << (check.ok() ? "PASS" : "FAIL") << "  " << cr.name << fmt::format("  ({:.3f} s)", elapsed);
    if (!check.ok()) std::cout << "  " << check.summary();
    std::cout << "\n";
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed;
}
