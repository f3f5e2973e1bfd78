#include <doctest.h>

#include <filesystem>

#include "test_util.hpp"
#include "videoatlas/error.hpp"
#include "videoatlas/templates.hpp"

using namespace atlas;
using namespace atlas::policy;

TEST_SUITE("templates") {

TEST_CASE("template text matches the golden files byte for byte") {
    for (Role role : kAllRoles) {
        const auto path = std::filesystem::path(VIDEOATLAS_GOLDEN_DIR) / "prompts" / (std::string(to_string(role)) + ".txt");
        REQUIRE(std::filesystem::exists(path));
        const std::string golden = testutil::read_file(path);
        INFO(to_string(role));
        CHECK(std::string(template_text(role)) == golden);
    }
}

TEST_CASE("placeholders") {
    CHECK(placeholders(template_text(Role::MasterProbe)) ==
          std::vector<std::string>{"query", "context_str", "top_n"});
    CHECK(placeholders(template_text(Role::WorkerStep)) ==
          std::vector<std::string>{"search_task", "query", "start", "end", "pct", "K", "context_str", "prev_summary"});
    CHECK(placeholders(template_text(Role::SearchTask)) == std::vector<std::string>{"query", "candidates"});
    CHECK(placeholders(R"({"top": [{"id": 1}]} {x} {x} {a_b2} { y } {})") == std::vector<std::string>{"x", "a_b2"});
}

TEST_CASE("filling substitutes every occurrence") {
    const auto out = fill_template(Role::MasterProbe, {{"query", "where?"}, {"context_str", "cells"}, {"top_n", "3"}});
    CHECK(out.find("{top_n}") == std::string::npos);
    CHECK(out.find("Pick EXACTLY 3 cells") != std::string::npos);
    CHECK(out.find("EXACTLY 3 entries") != std::string::npos);
    CHECK(out.find(R"({"top": [{"id": <cell_id>}, ...]})") != std::string::npos);
    CHECK(fill_template("a {x} b", {{"x", "{y}"}}) == "a {y} b");
}

TEST_CASE("a missing binding is named") {
    try {
        fill_template(Role::MasterProbe, {{"query", "q"}, {"context_str", "c"}});
        FAIL("expected TemplateError");
    } catch (const TemplateError& e) {
        CHECK(std::string(e.what()).find("top_n") != std::string::npos);
    }
}

}
