#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "damagepipe/cli.hpp"
#include "damagepipe/clip_eval.hpp"
#include "damagepipe/config.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/geometry.hpp"
#include "damagepipe/jury.hpp"
#include "damagepipe/metrics.hpp"
#include "damagepipe/mock_backend.hpp"
#include "damagepipe/mock_server.hpp"
#include "damagepipe/synthetic.hpp"

namespace py = pybind11;
using namespace damagepipe;

namespace {

using Box = std::tuple<double, double, double, double>;

geometry::BBox to_box(const Box& b) {
  return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b)};
}
Box from_box(const geometry::BBox& b) { return {b.x_min(), b.y_min(), b.x_max(), b.y_max()}; }

py::object optional_float(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

std::vector<metrics::Bucket> buckets(const std::vector<std::string>& names) {
  std::vector<metrics::Bucket> out;
  for (const auto& n : names) out.push_back(metrics::bucket_from_name(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Building damage assessment pipeline: geometry, scoring, metrics and CLI.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<MappingError>(m, "MappingError", base.ptr());
  py::register_exception<LoadError>(m, "LoadError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<BackendUnavailable>(m, "BackendUnavailable", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());

  // Boxes cross the boundary as (x_min, y_min, x_max, y_max) tuples.
  m.def("parse_wkt_polygon", [](std::string_view wkt) {
    std::vector<std::pair<double, double>> out;
    const geometry::Polygon polygon = geometry::parse_wkt_polygon(wkt);
    for (const auto& p : polygon.ring()) out.emplace_back(p.x, p.y);
    return out;
  });
  m.def("polygon_to_bbox", [](const std::vector<std::pair<double, double>>& ring) {
    std::vector<geometry::PixelPoint> pts;
    for (const auto& [x, y] : ring) pts.push_back({x, y});
    return from_box(geometry::polygon_to_bbox(geometry::Polygon(pts)));
  });
  m.def("pad_bbox",
        [](const Box& b, double pad, int width, int height) {
          return from_box(geometry::pad_bbox(to_box(b), pad, geometry::ImageDims(width, height)));
        },
        py::arg("box"), py::arg("pad_fraction"), py::arg("width"), py::arg("height"));
  m.def("scale_bbox", [](const Box& b, double f) { return from_box(geometry::scale_bbox(to_box(b), f)); });
  m.def("iou", [](const Box& a, const Box& b) { return geometry::iou(to_box(a), to_box(b)); });
  m.def("match_detections",
        [](const std::vector<std::pair<Box, double>>& dets, const std::vector<Box>& truths, double threshold) {
          std::vector<geometry::ScoredBox> d;
          for (const auto& [b, conf] : dets) d.push_back({to_box(b), conf});
          std::vector<geometry::BBox> t;
          for (const auto& b : truths) t.push_back(to_box(b));
          std::vector<std::pair<std::size_t, std::size_t>> out;
          for (const auto& mt : geometry::match_detections(d, t, threshold)) {
            out.emplace_back(mt.det_index, mt.truth_index);
          }
          return out;
        },
        py::arg("detections"), py::arg("truths"), py::arg("threshold") = 0.5);

  m.def("chunk_tokens", [](const std::vector<std::int64_t>& ids, int limit) {
    return clip::chunk_tokens(ids, limit);
  }, py::arg("ids"), py::arg("limit") = 77);
  m.def("clip_score",
        [](std::vector<double> image, std::vector<double> text, double w) {
          return clip::clip_score({std::move(image), ""}, {std::move(text), ""}, {.w = w});
        },
        py::arg("image"), py::arg("text"), py::arg("w") = 2.5);

  m.def("f1_from", &metrics::f1_from);
  m.def("classification_metrics",
        [](const std::vector<std::string>& predicted, const std::vector<std::string>& truth,
           const std::string& positive) {
          const auto r = metrics::classification_metrics(buckets(predicted), buckets(truth),
                                                         metrics::bucket_from_name(positive));
          py::dict d;
          d["accuracy"] = optional_float(r.accuracy);
          d["precision"] = optional_float(r.precision);
          d["recall"] = optional_float(r.recall);
          d["f1"] = optional_float(r.f1);
          d["tp"] = r.counts.tp;
          d["fp"] = r.counts.fp;
          d["fn"] = r.counts.fn;
          d["tn"] = r.counts.tn;
          return d;
        },
        py::arg("predicted"), py::arg("truth"), py::arg("positive_class") = "severe");
  m.def("word_frequencies",
        [](const std::map<int, std::vector<std::string>>& texts, std::optional<std::vector<std::string>> stop,
           int top_k) {
          std::set<std::string, std::less<>> words;
          if (stop) words.insert(stop->begin(), stop->end());
          else words = metrics::builtin_stopwords();
          const auto t = metrics::word_frequencies(texts, words, top_k);
          std::map<int, std::vector<std::pair<std::string, long>>> out;
          for (int level = 1; level <= 4; ++level) out[level] = t.by_category[level - 1];
          return out;
        },
        py::arg("texts_by_category"), py::arg("stopwords") = py::none(), py::arg("top_k") = 25);

  m.def("band_of", [](double score) { return std::string(jury::band_label(jury::band_of(score))); });
  m.def("aggregate_rankings", [](const std::vector<std::pair<std::string, double>>& verdicts) {
    std::vector<jury::JuryVerdict> vs;
    for (const auto& [cand, score] : verdicts) vs.push_back({score, "", "", "", cand});
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : jury::aggregate_rankings(vs).entries) out.emplace_back(e.candidate_model, e.mean);
    return out;
  }, "Mean score per candidate, best first, from (candidate, score) pairs.");

  m.def("load_config_snapshot",
        [](const std::filesystem::path& path, const std::vector<std::string>& overrides) {
          return snapshot(load_config(path, overrides)).dump();
        },
        py::arg("path"), py::arg("overrides") = std::vector<std::string>{},
        "Validated, normalized configuration as a JSON string.");

  m.def("write_synthetic_dataset",
        [](const std::filesystem::path& root, int pairs, int buildings, int size, std::uint64_t seed,
           const std::string& event) {
          synthetic::write_dataset(root, {.event = event, .pairs = pairs, .buildings_per_pair = buildings,
                                          .size = size, .seed = seed});
        },
        py::arg("root"), py::arg("pairs") = 3, py::arg("buildings") = 2, py::arg("size") = 256,
        py::arg("seed") = 7, py::arg("event") = "moore-tornado");

  m.def("run_command",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code = 0;
          {
            py::gil_scoped_release release;
            code = cli::run_command(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI subcommand in-process; returns (exit_code, stdout, stderr).");

  py::class_<inference::MockServer>(m, "MockServer")
      .def(py::init([](const std::string& url) {
             return std::make_unique<inference::MockServer>(
                 std::make_shared<inference::MockBackend>(inference::parse_mock_url(url)));
           }),
           py::arg("url") = "mock://python")
      .def("start", &inference::MockServer::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0,
           py::call_guard<py::gil_scoped_release>())
      .def("stop", &inference::MockServer::stop, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("port", &inference::MockServer::port)
      .def_property_readonly("calls", [](inference::MockServer& s) { return s.backend().calls(); });
}
