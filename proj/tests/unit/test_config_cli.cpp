#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "fake_endpoint.hpp"
#include "test_util.hpp"
#include "videoatlas/config.hpp"
#include "videoatlas/error.hpp"

using namespace atlas;
using nlohmann::json;
using testutil::TempDir;

namespace {

json synthetic_doc() {
    return {{"version", 1},
            {"seed", 4},
            {"tile_px", 96},
            {"workers", 2},
            {"synthetic", {{"duration_s", 600.0}, {"events", 1}}},
            {"policy", {{"backend", "oracle"}}}};
}

std::string error_of(const json& doc) {
    try {
        config::parse_run_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = atlas::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parses and round trips") {
    const auto c = config::parse_run_config(synthetic_doc());
    CHECK(c.seed == 4);
    CHECK(c.episode.workers == 2);
    REQUIRE(c.synthetic);
    CHECK(c.synthetic->seed == 4);
    CHECK(c.synthetic->tile_px == 96);
    CHECK(c.backend == config::Backend::Oracle);
    const auto again = config::parse_run_config(config::to_json(c));
    CHECK(config::to_json(again) == config::to_json(c));
}

TEST_CASE("unknown and mistyped keys are named") {
    auto doc = synthetic_doc();
    doc["wrokers"] = 3;
    CHECK(error_of(doc).find("wrokers") != std::string::npos);

    doc = synthetic_doc();
    doc["synthetic"]["evnts"] = 2;
    CHECK(error_of(doc).find("synthetic.evnts") != std::string::npos);

    doc = synthetic_doc();
    doc["top_n"] = "four";
    CHECK(error_of(doc).find("top_n") != std::string::npos);

    doc = synthetic_doc();
    doc["traversal"] = "sideways";
    CHECK(error_of(doc).find("traversal") != std::string::npos);

    doc = synthetic_doc();
    doc.erase("version");
    CHECK(error_of(doc).find("version") != std::string::npos);
    doc["version"] = 7;
    CHECK(error_of(doc).find("version 7") != std::string::npos);
}

TEST_CASE("cross-field validation") {
    auto doc = synthetic_doc();
    doc["media"] = {{"video", "a.mp4"}, {"duration_s", 10.0}};
    CHECK(error_of(doc).find("both") != std::string::npos);

    doc = synthetic_doc();
    doc.erase("synthetic");
    CHECK(error_of(doc).find("needs") != std::string::npos);

    doc["media"] = {{"video", "a.mp4"}, {"duration_s", 10.0}};
    CHECK(error_of(doc).find("synthetic") != std::string::npos);  // oracle needs ground truth

    doc["policy"]["backend"] = "remote";
    CHECK(error_of(doc).empty());
    doc["media"]["duration_s"] = 0.0;
    CHECK(error_of(doc).find("media.duration_s") != std::string::npos);

    doc = synthetic_doc();
    doc["answer"] = -1;
    CHECK(error_of(doc).find("answer") != std::string::npos);
}

TEST_CASE("relative media paths resolve against the config directory") {
    json doc{{"version", 1},
             {"media", {{"video", "clips/a.mp4"}, {"subtitles", "a.srt"}, {"duration_s", 30.0}}},
             {"policy", {{"backend", "remote"}}}};
    const auto c = config::parse_run_config(doc, "/data/cfg");
    CHECK(c.media->video == std::filesystem::path("/data/cfg/clips/a.mp4"));
    CHECK(c.media->subtitles == std::filesystem::path("/data/cfg/a.srt"));
}

TEST_CASE("run writes artifacts and is deterministic") {
    TempDir dir("cli-run");
    testutil::write_file(dir / "run.json", synthetic_doc().dump());
    const auto a = invoke({"run", (dir / "run.json").string(), "--output-dir", (dir / "a").string()});
    REQUIRE(a.code == cli::kExitOk);
    CHECK(a.out.find("correct=true") != std::string::npos);
    for (const char* f : {"report.json", "trace.jsonl", "masked_root.png", "scratchpad.png"}) {
        CHECK(std::filesystem::exists(dir / "a" / f));
    }
    const auto b = invoke({"run", (dir / "run.json").string(), "--output-dir", (dir / "b").string()});
    REQUIRE(b.code == cli::kExitOk);
    CHECK(testutil::read_file(dir / "a" / "report.json") == testutil::read_file(dir / "b" / "report.json"));
    CHECK(testutil::read_file(dir / "a" / "trace.jsonl") == testutil::read_file(dir / "b" / "trace.jsonl"));

    const auto report = json::parse(testutil::read_file(dir / "a" / "report.json"));
    CHECK(report["seed"] == 4);
    CHECK(report["policy"] == "oracle");
}

TEST_CASE("run exit codes") {
    TempDir dir("cli-codes");
    CHECK(invoke({"run"}).code == cli::kExitConfig);
    CHECK(invoke({"run", (dir / "missing.json").string()}).code == cli::kExitConfig);
    CHECK(invoke({"bogus"}).code == cli::kExitConfig);

    auto doc = synthetic_doc();
    doc["extra"] = true;
    testutil::write_file(dir / "bad.json", doc.dump());
    const auto bad = invoke({"run", (dir / "bad.json").string()});
    CHECK(bad.code == cli::kExitConfig);
    CHECK(bad.err.find("extra") != std::string::npos);

    json media{{"version", 1},
               {"media", {{"video", (dir / "nope.mp4").string()}, {"duration_s", 30.0}}},
               {"policy", {{"backend", "remote"}, {"endpoint", "http://127.0.0.1:1/x"}}},
               {"query", "q"}};
    testutil::write_file(dir / "media.json", media.dump());
    CHECK(invoke({"run", (dir / "media.json").string()}).code == cli::kExitMedia);

    testutil::write_file(dir / "clip.mp4", "x");
    media["media"]["subtitles"] = (dir / "nope.srt").string();
    testutil::write_file(dir / "media.json", media.dump());
    const auto subs = invoke({"run", (dir / "media.json").string()});
    CHECK(subs.code == cli::kExitMedia);
}

TEST_CASE("run on decoded media against a remote backend") {
    TempDir dir("cli-remote");
    testutil::FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"text": "{\"action\": \"FINISHED\"}"})", "application/json");
    });
    testutil::write_file(dir / "clip.mp4", "x");
    testutil::write_file(dir / "clip.srt", "1\n00:00:01,000 --> 00:00:02,000\nhello\n\n");
    json doc{{"version", 1},
             {"tile_px", 96},
             {"workers", 1},
             {"max_rounds", 1},
             {"media",
              {{"video", "clip.mp4"}, {"subtitles", "clip.srt"}, {"duration_s", 60.0}, {"decoder", VIDEOATLAS_FAKE_DECODER}}},
             {"policy", {{"backend", "remote"}, {"endpoint", ep.url()}, {"backoff_ms", 1}}},
             {"query", "What happens?"},
             {"candidates", {"a", "b"}},
             {"output_dir", "out"}};
    testutil::write_file(dir / "run.json", doc.dump());
    const auto r = invoke({"run", (dir / "run.json").string(), "--output-dir", (dir / "out").string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(ep.hits > 0);
    const auto report = json::parse(testutil::read_file(dir / "out" / "report.json"));
    CHECK(report["policy"] == "remote");
    CHECK(std::filesystem::exists(dir / "out" / "masked_root.png"));
}

TEST_CASE("sweep-duration argument checks") {
    TempDir dir("cli-sweep");
    CHECK(invoke({"sweep-duration", "--trials", "0"}).code == cli::kExitConfig);
    const auto one = invoke({"sweep-duration", "--durations", "60", "--trials", "1", "--out", dir.path().string()});
    CHECK(one.code == cli::kExitConfig);
    CHECK(one.err.find("fit refused") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "scaling.csv"));
}

TEST_CASE("sweep-workers deduplicates worker counts") {
    const auto r = invoke({"sweep-workers", "--workers", "1,1,2", "--episodes", "1", "--duration", "600"});
    REQUIRE(r.code == cli::kExitOk);
    int rows = 0;
    std::istringstream lines(r.out);
    for (std::string line; std::getline(lines, line);) rows += line.find("/1") != std::string::npos;
    CHECK(rows == 2);
}

TEST_CASE("make-10h writes layout, merged subtitles and answer key") {
    TempDir dir("cli-10h");
    std::vector<std::string> inputs;
    for (int i = 0; i < 3; ++i) {
        const auto video = dir / ("v" + std::to_string(i) + ".mp4");
        const auto srt = dir / ("v" + std::to_string(i) + ".srt");
        testutil::write_file(video, "x");
        testutil::write_file(srt, "1\n00:00:01,000 --> 00:00:02,000\nseg " + std::to_string(i) + "\n\n");
        inputs.push_back(video.string() + "," + std::to_string(100 * (i + 1)) + "," + srt.string());
    }
    std::vector<std::string> args{"make-10h", "--inputs"};
    args.insert(args.end(), inputs.begin(), inputs.end());
    for (std::string a : {"--target-index", "1", "--seed", "3", "--event-time", "50", "--out"}) args.push_back(a);
    args.push_back((dir / "out").string());
    const auto r = invoke(args);
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);

    const auto layout = json::parse(testutil::read_file(dir / "out" / "concat.json"));
    const auto key = json::parse(testutil::read_file(dir / "out" / "answer_key.json"));
    CHECK(layout["total_s"] == doctest::Approx(600.0));
    double offset = 0.0;
    for (const auto& seg : layout["segments"]) {
        CHECK(seg["offset_s"].get<double>() == doctest::Approx(offset));
        offset += seg["duration_s"].get<double>();
    }
    const auto& target = layout["segments"][key["target_position"].get<std::size_t>()];
    CHECK(target["input_index"] == 1);
    CHECK(key["duration_s"] == doctest::Approx(200.0));
    CHECK(key["event_global_s"].get<double>() == doctest::Approx(target["offset_s"].get<double>() + 50.0));

    const auto merged = media::parse_srt(testutil::read_file(dir / "out" / "merged.srt"));
    REQUIRE(merged.cues.size() == 3);
    for (std::size_t pos = 0; pos < 3; ++pos) {
        const auto& seg = layout["segments"][pos];
        CHECK(merged.cues[pos].start_s == doctest::Approx(seg["offset_s"].get<double>() + 1.0));
        CHECK(merged.cues[pos].text == "seg " + std::to_string(seg["input_index"].get<int>()));
    }
}

TEST_CASE("make-10h input errors") {
    TempDir dir("cli-10h-bad");
    testutil::write_file(dir / "v.mp4", "x");
    const std::string ok = (dir / "v.mp4").string() + ",10";
    CHECK(invoke({"make-10h", "--inputs", "v.mp4", "--target-index", "0"}).code == cli::kExitConfig);
    CHECK(invoke({"make-10h", "--inputs", ok, "--target-index", "1"}).code == cli::kExitConfig);
    CHECK(invoke({"make-10h", "--inputs", (dir / "v.mp4").string() + ",ten", "--target-index", "0"}).code ==
          cli::kExitConfig);
    CHECK(invoke({"make-10h", "--inputs", ok, "--target-index", "0", "--event-time", "12", "--out",
               (dir / "o").string()})
              .code == cli::kExitConfig);
    CHECK(invoke({"make-10h", "--inputs", (dir / "gone.mp4").string() + ",10", "--target-index", "0"}).code ==
          cli::kExitMedia);
}

}
