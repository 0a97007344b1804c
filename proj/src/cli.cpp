#include "damagepipe/cli.hpp"

#include <algorithm>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "damagepipe/assess.hpp"
#include "damagepipe/clip_eval.hpp"
#include "damagepipe/config.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/jury.hpp"
#include "damagepipe/metrics.hpp"
#include "damagepipe/mock_server.hpp"
#include "damagepipe/report.hpp"
#include "damagepipe/synthetic.hpp"
#include "damagepipe/xbd.hpp"

namespace damagepipe::cli {

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->required();
  cmd->add_option("--set", c.sets, "Override a config key by dotted path: key=value");
}

inference::Client client_for(const RunConfig& cfg, std::string_view capability) {
  const auto& ep = cfg.endpoint(capability);
  return inference::Client(ep, inference::connect(ep.base_url));
}

std::vector<xbd::ImagePairRecord> discover(const RunConfig& cfg, std::ostream& err) {
  if (cfg.dataset_root.empty()) throw ConfigError("dataset_root is required");
  auto found = xbd::discover_pairs(cfg.dataset_root);
  for (const auto& w : found.warnings) err << "warning: " << w << "\n";
  if (found.pairs.empty()) {
    throw ConfigError(fmt::format("no image pairs found under {}", cfg.dataset_root.string()));
  }
  return std::move(found.pairs);
}

void require_candidates(const RunConfig& cfg) {
  if (cfg.candidate_models.empty()) throw ConfigError("candidate_models must not be empty");
}

int cmd_assess(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_candidates(cfg);
  const auto pairs = discover(cfg, err);
  const RunLayout layout(cfg.run_dir, cfg.run_id);
  assess::Backends backends{client_for(cfg, "upscale"), client_for(cfg, "detect"),
                            client_for(cfg, "chat")};
  const auto m = assess::run_event(cfg.pipeline, snapshot(cfg), cfg.candidate_models, pairs,
                                   backends, layout);
  out << fmt::format("{} pairs, {} buildings ({} detections below threshold)\n", m.pairs,
                     m.detections, m.detections_below_threshold);
  bool partial = !m.pair_errors.empty();
  for (const auto& [pair_id, reason] : m.pair_errors) {
    err << fmt::format("pair {} skipped: {}\n", pair_id, reason);
  }
  for (const auto& [cand, c] : m.candidates) {
    out << fmt::format("{}: {} assessed, {} failed, {} repair re-prompts\n", cand, c.assessments,
                       c.failures, c.repair_retries);
    partial = partial || c.failures > 0;
  }
  out << "run directory: " << layout.root().string() << "\n";
  return partial ? kPartialFailure : kOk;
}

int cmd_eval_clip(const RunConfig& cfg, std::ostream& out) {
  require_candidates(cfg);
  const RunLayout layout(cfg.run_dir, cfg.run_id);
  const clip::ClipRunConfig run{cfg.candidate_models, cfg.score, cfg.pipeline.max_inflight};
  const auto stats = clip::run_clip(run, client_for(cfg, "embed"), layout);
  out << fmt::format("{} captions scored ({} reused), {} failed\n", stats.scored, stats.reused,
                     stats.failures);
  return stats.failures > 0 ? kPartialFailure : kOk;
}

int cmd_eval_jury(const RunConfig& cfg, std::ostream& out) {
  require_candidates(cfg);
  const RunLayout layout(cfg.run_dir, cfg.run_id);
  const jury::JuryConfig run{cfg.jury_models, cfg.candidate_models, cfg.pipeline.max_inflight,
                             cfg.pipeline.temperature, cfg.pipeline.seed};
  const auto stats = jury::run_jury(run, client_for(cfg, "chat"), layout);
  out << fmt::format("{} verdicts ({} reused), {} failed, {} chat calls\n", stats.verdicts,
                     stats.reused, stats.failures, stats.chat_calls);
  return stats.failures > 0 ? kPartialFailure : kOk;
}

int cmd_metrics(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_candidates(cfg);
  const RunLayout layout(cfg.run_dir, cfg.run_id);
  // Assessments are checked before the dataset so the ordering guard wins.
  bool any = false;
  for (const auto& c : cfg.candidate_models) any = any || !assess::load_assessments(layout, c).empty();
  if (!any) throw ConfigError("no assessments found; run assess first");
  const auto pairs = discover(cfg, err);
  const metrics::MetricsConfig run{cfg.candidate_models, cfg.positive_class, cfg.iou_threshold,
                                   cfg.top_k, cfg.stopwords};
  for (const auto& m : metrics::run_metrics(run, pairs, layout)) {
    const auto& r = m.report;
    out << fmt::format("{}: {} matched, f1 {}\n", r.candidate_model, m.matched,
                       r.f1 ? fmt::format("{:.4f}", *r.f1) : std::string("undefined"));
  }
  return kOk;
}

int cmd_mock_serve(const std::string& url, const std::string& host, int port, std::ostream& out) {
  inference::MockServer server(inference::shared_mock(url));
  const int bound = server.start(host, port);
  out << fmt::format("mock backend listening on http://{}:{}\n", host, bound) << std::flush;
  server.wait();
  return kOk;
}

int cmd_synth(const std::string& dir, const synthetic::DatasetOptions& opts, std::ostream& out) {
  synthetic::write_dataset(dir, opts);
  out << fmt::format("wrote {} pairs to {}\n", opts.pairs, dir);
  return kOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-disaster building damage assessment pipeline", "damagepipe"};
  app.require_subcommand(1);

  Common common;
  std::vector<CLI::App*> stages;
  auto* assess_cmd = app.add_subcommand("assess", "Detect, crop and classify buildings");
  auto* clip_cmd = app.add_subcommand("eval-clip", "Chunked CLIPScore of every assessment");
  auto* jury_cmd = app.add_subcommand("eval-jury", "Grade every assessment with the jury panel");
  auto* metrics_cmd = app.add_subcommand("metrics", "Compare assessments with ground-truth labels");
  auto* report_cmd = app.add_subcommand("report", "Print the result tables of a run");
  for (auto* c : {assess_cmd, clip_cmd, jury_cmd, metrics_cmd, report_cmd}) add_common(c, common);

  std::string mock_url = "mock://serve";
  std::string host = "127.0.0.1";
  int port = 8765;
  auto* serve_cmd = app.add_subcommand("mock-serve", "Serve the deterministic mock backend over HTTP");
  serve_cmd->add_option("--url", mock_url, "Mock backend options as a mock:// URL")->capture_default_str();
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port, "0 picks a free port")->capture_default_str();

  std::string synth_dir;
  synthetic::DatasetOptions synth;
  bool no_labels = false;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic xBD-style dataset for the mock");
  synth_cmd->add_option("--out", synth_dir)->required();
  synth_cmd->add_option("--event", synth.event)->capture_default_str();
  synth_cmd->add_option("--pairs", synth.pairs)->capture_default_str()->check(CLI::Range(1, 100000));
  synth_cmd->add_option("--buildings", synth.buildings_per_pair)->capture_default_str()->check(CLI::Range(0, 64));
  synth_cmd->add_option("--size", synth.size)->capture_default_str()->check(CLI::Range(32, 8192));
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_flag("--no-labels", no_labels);

  std::vector<std::string> argv_store{"damagepipe"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (serve_cmd->parsed()) return cmd_mock_serve(mock_url, host, port, out);
    if (synth_cmd->parsed()) {
      synth.with_labels = !no_labels;
      return cmd_synth(synth_dir, synth, out);
    }
    const RunConfig cfg = load_config(common.config, common.sets);
    if (assess_cmd->parsed()) return cmd_assess(cfg, out, err);
    if (clip_cmd->parsed()) return cmd_eval_clip(cfg, out);
    if (jury_cmd->parsed()) return cmd_eval_jury(cfg, out);
    if (metrics_cmd->parsed()) return cmd_metrics(cfg, out, err);
    if (report_cmd->parsed()) {
      out << report::render(RunLayout(cfg.run_dir, cfg.run_id));
      return kOk;
    }
  } catch (const BackendUnavailable& e) {
    err << "error: backend unavailable: " << e.what() << "\n";
    return kBackendUnavailable;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kPartialFailure;
  }
  return kConfigError;
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace damagepipe::cli
