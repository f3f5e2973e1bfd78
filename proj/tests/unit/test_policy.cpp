#include <doctest.h>

#include <atomic>

#include "fake_endpoint.hpp"
#include "videoatlas/error.hpp"
#include "videoatlas/parsers.hpp"
#include "videoatlas/policy.hpp"

using namespace atlas;
using namespace atlas::policy;
using nlohmann::json;
using testutil::FakeEndpoint;

namespace {

json cells_json(double start, double end, int k) {
    json cells = json::array();
    const double w = (end - start) / (k * k);
    for (int i = 0; i < k * k; ++i) cells.push_back({{"id", i}, {"start", start + i * w}, {"end", start + (i + 1) * w}});
    return cells;
}

OraclePolicy oracle_with(std::vector<media::PlantedEvent> events, double duration) {
    return OraclePolicy(OracleKnowledge{std::move(events), duration});
}

PolicyRequest small_request() {
    PolicyRequest r;
    r.role = Role::WorkerStep;
    r.text = "pick a cell";
    r.images.push_back(make_image(Raster(56, 28, kWhite)));
    return r;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("glyph descriptions round trip") {
    CHECK(describe_glyph(2) == "glyph C visible");
    CHECK(describe_glyph(std::nullopt) == "no glyph visible");
    for (int g = 0; g < 26; ++g) CHECK(glyph_from_description(describe_glyph(g)) == g);
    CHECK_FALSE(glyph_from_description("no glyph visible").has_value());
    CHECK_FALSE(glyph_from_description("glyph ? visible").has_value());
}

TEST_CASE("oracle probe ranks the cells holding open targets first") {
    auto oracle = oracle_with({{300.0, 1}, {2000.0, 2}}, 3600.0);
    PolicyRequest r;
    r.role = Role::MasterProbe;
    r.context = {{"cells", cells_json(0, 3600, 8)}, {"top_n", 3}};
    r.context["cells"][0]["blacked"] = true;
    const auto ids = parse_probe(oracle.decide_text(r), 3, 64);
    REQUIRE(ids);
    CHECK((*ids)[0] == 5);   // 300 / 56.25
    CHECK((*ids)[1] == 35);  // 2000 / 56.25
    CHECK((*ids)[2] == 1);   // first live filler
}

TEST_CASE("oracle worker expands toward the target, then zooms and commits") {
    auto oracle = oracle_with({{100.0, 4, {220, 40, 40}, 1.0}}, 3600.0);
    PolicyRequest r;
    r.role = Role::WorkerStep;
    r.context = {{"cells", cells_json(0, 3600, 8)},
                 {"available", {"EXPAND", "ZOOM", "INVESTIGATE", "ADD_TO_SCRATCHPAD", "FINISHED"}},
                 {"position", {0, 3600}},
                 {"owned", {0, 3600}},
                 {"k", 8}};
    CHECK(*parse_worker_action(oracle.decide_text(r)) == env::Action::expand(1));

    r.context["available"] = {"ZOOM", "INVESTIGATE", "ADD_TO_SCRATCHPAD", "FINISHED", "BACKTRACK"};
    CHECK(*parse_worker_action(oracle.decide_text(r)) == env::Action::zoom(1));

    media::SyntheticVideoSpec spec;
    spec.duration_s = 3600;
    spec.events = {{100.0, 4, {220, 40, 40}, 1.0}};
    r.images = {make_image(Raster(8, 8)), make_image(media::synth_frame(spec, 100.2).pixels)};
    r.context["last"] = {{"action", "ZOOM"}, {"cell", 1}, {"t", 100.2}};
    const auto add = parse_worker_action(oracle.decide_text(r));
    REQUIRE(add);
    REQUIRE(add->kind == env::ActionKind::AddToScratchpad);
    CHECK(add->items[0].description == "glyph E visible");

    r.context["evidence"] = {{{"label", "A"}, {"t", 100.2}, {"desc", "glyph E visible"}}};
    r.context.erase("last");
    CHECK(*parse_worker_action(oracle.decide_text(r)) == env::Action::finished());
}

TEST_CASE("oracle worker leaves a region without targets") {
    auto oracle = oracle_with({{3000.0, 1}}, 3600.0);
    PolicyRequest r;
    r.role = Role::WorkerStep;
    r.context = {{"cells", cells_json(0, 56.25, 8)},
                 {"available", {"BACKTRACK", "ZOOM", "FINISHED"}},
                 {"position", {0, 56.25}},
                 {"owned", {0, 3600}},
                 {"k", 8}};
    CHECK(*parse_worker_action(oracle.decide_text(r)) == env::Action::backtrack());
    r.context["owned"] = {0, 56.25};
    CHECK(*parse_worker_action(oracle.decide_text(r)) == env::Action::finished());
}

TEST_CASE("oracle uncertainty and final answer") {
    auto oracle = oracle_with({{100.0, 0}, {2000.0, 1}}, 3600.0);
    PolicyRequest r;
    r.role = Role::MasterUncertainty;
    r.context = {{"cells", cells_json(0, 3600, 8)},
                 {"evidence", {{{"label", "A"}, {"t", 100.0}, {"desc", "glyph A visible"}},
                               {{"label", "B"}, {"t", 900.0}, {"desc", "no glyph visible"}}}},
                 {"max_suggestions", 3}};
    auto d = parse_uncertainty(oracle.decide_text(r), 64, 3);
    REQUIRE(d);
    CHECK(d->kind == UncertaintyDecision::Kind::Continue);
    CHECK(d->explore_cells == std::vector<int>{35});
    CHECK(d->erase == std::vector<std::string>{"B"});

    // The open target's cell has been searched already: nothing left to explore.
    r.context["cells"][35]["blacked"] = true;
    d = parse_uncertainty(oracle.decide_text(r), 64, 3);
    REQUIRE(d);
    CHECK(d->kind == UncertaintyDecision::Kind::FinalDecision);
    r.context["cells"][35]["blacked"] = false;

    r.context["evidence"].push_back({{"label", "C"}, {"t", 2000.3}, {"desc", "glyph B visible"}});
    CHECK(parse_uncertainty(oracle.decide_text(r), 64, 3)->kind == UncertaintyDecision::Kind::FinalDecision);

    r.role = Role::MasterFinal;
    r.context["candidates"] = {"B, A", "A, B", "A, C"};
    CHECK(parse_final(oracle.decide_text(r), 3)->answer == 1);
}

TEST_CASE("oracle responses carry estimated usage") {
    auto oracle = oracle_with({}, 60.0);
    PolicyRequest r = small_request();
    r.role = Role::SearchTask;
    const auto resp = oracle.decide(r);
    CHECK(resp.usage_estimated);
    CHECK(resp.tokens_in == metrics::count_tokens(r));
    CHECK(resp.tokens_out == metrics::text_tokens(resp.raw_text));
}

TEST_CASE("remote request body shape") {
    EndpointConfig c;
    c.model = "m";
    c.max_tokens = 77;
    const auto body = RemotePolicy::request_body(small_request(), c);
    CHECK(body["model"] == "m");
    CHECK(body["max_tokens"] == 77);
    const auto& content = body["messages"][0]["content"];
    REQUIRE(content.size() == 2);
    CHECK(content[0]["type"] == "text");
    CHECK(content[0]["text"] == "pick a cell");
    CHECK(content[1]["type"] == "image");
    CHECK(content[1]["data_base64_png"].get<std::string>().rfind("iVBORw0KGgo", 0) == 0);
    CHECK_FALSE(body.dump().find("context") != std::string::npos);
}

TEST_CASE("remote success with reported usage") {
    std::string auth;
    FakeEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"text": "{\"action\": \"FINISHED\"}", "usage": {"input_tokens": 10, "output_tokens": 3}})",
                        "application/json");
    });
    RemotePolicy p(ep.config());
    const auto resp = p.decide(small_request());
    CHECK(resp.raw_text == R"({"action": "FINISHED"})");
    CHECK(resp.tokens_in == 10);
    CHECK(resp.tokens_out == 3);
    CHECK_FALSE(resp.usage_estimated);
    CHECK(auth == "Bearer secret");
}

TEST_CASE("remote falls back to estimated usage") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"text": "hello"})", "application/json");
    });
    RemotePolicy p(ep.config());
    const auto req = small_request();
    const auto resp = p.decide(req);
    CHECK(resp.usage_estimated);
    CHECK(resp.tokens_in == metrics::count_tokens(req));
}

TEST_CASE("remote retries server errors") {
    FakeEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
        static std::atomic<int> calls{0};
        if (calls++ == 0) {
            res.status = 500;
            return;
        }
        res.set_content(R"({"text": "ok"})", "application/json");
    });
    RemotePolicy p(ep.config());
    CHECK(p.decide(small_request()).raw_text == "ok");
    CHECK(ep.hits == 2);
}

TEST_CASE("remote does not retry client errors") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    RemotePolicy p(ep.config());
    CHECK_THROWS_AS(p.decide(small_request()), TransportError);
    CHECK(ep.hits == 1);
}

TEST_CASE("remote gives up after max attempts") {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
    auto c = ep.config();
    c.max_attempts = 3;
    RemotePolicy p(c);
    CHECK_THROWS_AS(p.decide(small_request()), TransportError);
    CHECK(ep.hits == 3);
}

TEST_CASE("remote endpoint validation") {
    EndpointConfig c;
    CHECK_THROWS_AS(RemotePolicy{c}, ConfigError);
    c.url = "https://example.com/v1";
    CHECK_THROWS_AS(RemotePolicy{c}, ConfigError);
    c.url = "ftp://example.com";
    CHECK_THROWS_AS(RemotePolicy{c}, ConfigError);
    c.url = "http://127.0.0.1:1/x";
    c.max_attempts = 0;
    CHECK_THROWS_AS(RemotePolicy{c}, ConfigError);
}

TEST_CASE("unreachable endpoint is a transport error") {
    EndpointConfig c;
    c.url = "http://127.0.0.1:1/x";
    c.max_attempts = 2;
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::seconds(1);
    RemotePolicy p(c);
    CHECK_THROWS_AS(p.decide(small_request()), TransportError);
}

}
