#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "videoatlas/bench.hpp"
#include "videoatlas/config.hpp"
#include "videoatlas/error.hpp"
#include "videoatlas/media.hpp"
#include "videoatlas/metrics.hpp"
#include "videoatlas/orchestrator.hpp"
#include "videoatlas/templates.hpp"
#include "videoatlas/timeline.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace atlas;

namespace {

// Runs one episode described by a run-config document; returns the report as JSON text.
std::string run_config(const std::string& doc, const std::string& base_dir) {
    const auto parsed = nlohmann::json::parse(doc, nullptr, false);
    if (parsed.is_discarded()) throw ConfigError("config is not valid JSON");
    const config::RunConfig rc = config::parse_run_config(parsed, base_dir);

    orchestrator::EpisodeInput input;
    std::unique_ptr<policy::Policy> pol;
    if (rc.synthetic) {
        const auto ep = bench::make_needle_episode(*rc.synthetic);
        input = ep.input();
        if (rc.backend == config::Backend::Oracle) pol = std::make_unique<policy::OraclePolicy>(ep.knowledge(), rc.episode.tokens);
    } else {
        const auto& m = *rc.media;
        input.source = std::make_shared<media::DecoderSource>(
            m.video, timeline::VideoSpan::make(m.duration_s, m.fps), m.decoder, rc.episode.tile_px);
    }
    if (!rc.query.empty()) input.query = rc.query;
    if (!rc.candidates.empty()) input.candidates = rc.candidates;
    if (rc.answer) input.correct = rc.answer;
    if (input.query.empty()) throw ConfigError("no query");
    if (!pol) pol = std::make_unique<policy::RemotePolicy>(policy::EndpointConfig::from_env(rc.endpoint), rc.episode.tokens);

    std::string out;
    {
        py::gil_scoped_release release;
        auto report = orchestrator::run_episode(input, rc.episode, *pol).report_json();
        report["seed"] = rc.seed;
        report["policy"] = pol->name();
        out = report.dump();
    }
    return out;
}

py::list parse_srt(const std::string& text) {
    py::list cues;
    for (const auto& c : media::parse_srt(text).cues) {
        cues.append(py::dict("index"_a = c.index, "start_s"_a = c.start_s, "end_s"_a = c.end_s, "text"_a = c.text));
    }
    return cues;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hierarchical-grid video exploration core";

    auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<MediaError>(m, "MediaError", base.ptr());
    py::register_exception<TransportError>(m, "TransportError", base.ptr());

    m.def("depth_resolution", py::overload_cast<double, int, int>(&timeline::depth_resolution), "duration_s"_a,
          "k"_a = 8, "depth"_a = 0, "Per-cell span in seconds at a grid depth.");
    m.def(
        "max_depth",
        [](double duration_s, double fps, int k) { return timeline::max_depth(timeline::VideoSpan::make(duration_s, fps), k); },
        "duration_s"_a, "fps"_a = 25.0, "k"_a = 8);
    m.def("sub_second_depth", py::overload_cast<double, int>(&timeline::sub_second_depth), "duration_s"_a, "k"_a = 8);
    m.def(
        "cell_interval",
        [](double duration_s, std::vector<int> path, int k) {
            const auto iv = timeline::cell_interval(timeline::VideoSpan::make(duration_s, 25.0),
                                                    timeline::CellAddress(k, std::move(path)));
            return std::make_pair(iv.start_s, iv.end_s);
        },
        "duration_s"_a, "path"_a, "k"_a = 8);

    m.def("parse_srt", &parse_srt, "text"_a);
    m.def(
        "template_text",
        [](const std::string& role) {
            for (auto r : policy::kAllRoles) {
                if (role == policy::to_string(r)) return std::string(policy::template_text(r));
            }
            throw ConfigError("unknown role '" + role + "'");
        },
        "role"_a);
    m.def("captioner_tokens", [](double duration_s) { return metrics::captioner_tokens(duration_s); }, "duration_s"_a);
    m.def("run_config", &run_config, "doc"_a, "base_dir"_a = "",
          "Run one episode from a JSON run config and return the report as JSON text.");

    m.attr("__version__") = "0.1.0";
}
