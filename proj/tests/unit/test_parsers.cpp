#include <doctest.h>

#include <random>

#include "videoatlas/parsers.hpp"

using namespace atlas;
using namespace atlas::policy;
using Code = ParseError::Code;

TEST_SUITE("parsers") {

TEST_CASE("json objects are found inside prose") {
    const auto objs = json_objects(R"(Sure! {"a": "}{"} then {"b": {"c": 1}} and {broken)");
    REQUIRE(objs.size() == 2);
    CHECK(objs[0]["a"] == "}{");
    CHECK(objs[1]["b"]["c"] == 1);
    CHECK(json_objects("no braces here").empty());
}

TEST_CASE("probe output") {
    auto ok = parse_probe(R"(```json
{"top": [{"id": 3}, {"id": 17}, {"id": 60}]}
```)", 3, 64);
    REQUIRE(ok);
    CHECK(*ok == std::vector<int>{3, 17, 60});
    CHECK(*parse_probe(R"({"top": [1, "2", 3.0]})", 3, 64) == std::vector<int>{1, 2, 3});

    CHECK(parse_probe("nothing", 3, 64).error().code == Code::NoJson);
    CHECK(parse_probe(R"({"top": [{"id": 1}]})", 3, 64).error().code == Code::Count);
    CHECK(parse_probe(R"({"top": [1, 2, 64]})", 3, 64).error().code == Code::Range);
    CHECK(parse_probe(R"({"top": [1, 1, 2]})", 3, 64).error().code == Code::Constraint);
    std::vector<bool> blacked(64, false);
    blacked[2] = true;
    CHECK(parse_probe(R"({"top": [1, 2, 3]})", 3, 64, blacked).error().code == Code::Constraint);
    CHECK(parse_probe(R"({"top": "1,2,3"})", 3, 64).error().code == Code::Schema);
    CHECK(parse_probe(R"({"top": [1.5, 2, 3]})", 3, 64).error().code == Code::Schema);
}

TEST_CASE("worker actions") {
    using env::Action;
    using env::Direction;
    CHECK(*parse_worker_action(R"({"action": "EXPAND", "cell": 12})") == Action::expand(12));
    CHECK(*parse_worker_action(R"({"action": "zoom", "cell_id": "5"})") == Action::zoom(5));
    CHECK(*parse_worker_action(R"({"action": "Back-track"})") == Action::backtrack());
    CHECK(*parse_worker_action(R"(I am done. {"action": "finished"})") == Action::finished());
    CHECK(*parse_worker_action(R"({"action": "INVESTIGATE", "cell": 4, "direction": "Before"})") ==
          Action::investigate(4, Direction::Before));
    CHECK(*parse_worker_action(R"({"action": "mark promising", "cells": [1, 2]})") ==
          Action::mark_promising({1, 2}));
    const auto add = parse_worker_action(
        R"({"action": "ADD_TO_SCRATCHPAD", "items": [{"t": 12.5, "desc": "red A", "conf": 0.9}]})");
    REQUIRE(add);
    REQUIRE(add->items.size() == 1);
    CHECK(add->items[0] == EvidenceDraft{12.5, "red A", 0.9});

    CHECK(parse_worker_action(R"({"action": "EXPAND"})").error().code == Code::MissingArgument);
    CHECK(parse_worker_action(R"({"action": "INVESTIGATE", "cell": 4, "direction": "up"})").error().code ==
          Code::Schema);
    CHECK(parse_worker_action(R"({"action": "JUMP", "cell": 1})").error().code == Code::UnknownAction);
    CHECK(parse_worker_action(R"({"act": "ZOOM"})").error().code == Code::Schema);
    CHECK(parse_worker_action(R"({"action": "ADD_TO_SCRATCHPAD", "items": []})").error().code ==
          Code::MissingArgument);
    CHECK(parse_worker_action(R"({"action": "ADD_TO_SCRATCHPAD", "items": [{"t": 1, "conf": 2}]})")
              .error()
              .code == Code::Range);
    CHECK(parse_worker_action(R"({"action": "ZOOM", "cell": -1})").error().code == Code::Range);
}

TEST_CASE("uncertainty decisions") {
    using Kind = UncertaintyDecision::Kind;
    const auto c = parse_uncertainty(
        R"({"action": "CONTINUE", "explore": [5, {"start": 100, "end": 130}, 9], "erase": ["[B]", "C"], "reasoning": "r"})",
        64, 3);
    REQUIRE(c);
    CHECK(c->kind == Kind::Continue);
    CHECK(c->explore_cells == std::vector<int>{5, 9});
    REQUIRE(c->explore_ranges.size() == 1);
    CHECK(c->explore_ranges[0].start_s == 100.0);
    CHECK(c->erase == std::vector<std::string>{"B", "C"});
    CHECK(c->reasoning == "r");

    const auto capped = parse_uncertainty(R"({"action": "CONTINUE", "explore": [1, 2, 3, 4]})", 64, 2);
    CHECK(capped->explore_cells == std::vector<int>{1, 2});

    CHECK(parse_uncertainty(R"({"action": "final_decision"})", 64, 3)->kind == Kind::FinalDecision);
    CHECK(parse_uncertainty(R"({"action": "CONTINUE_OR_FINAL_DECISION"})", 64, 3).error().code == Code::Ambiguous);
    CHECK(parse_uncertainty(R"({"action": "CONTINUE"} {"action": "FINAL_DECISION"})", 64, 3).error().code ==
          Code::Ambiguous);
    CHECK(parse_uncertainty(R"({"action": "CONTINUE", "explore": [{"start": 0, "end": 60}]})", 64, 3)
              .error()
              .code == Code::Constraint);
    CHECK(parse_uncertainty(R"({"action": "CONTINUE", "explore": [{"start": 5, "end": 5}]})", 64, 3).error().code ==
          Code::Range);
    CHECK(parse_uncertainty(R"({"action": "CONTINUE", "explore": [64]})", 64, 3).error().code == Code::Range);
    CHECK(parse_uncertainty(R"({"action": "STOP"})", 64, 3).error().code == Code::UnknownAction);
}

TEST_CASE("final answers") {
    const auto a = parse_final(R"({"answer": 2, "reasoning": "because"})", 4);
    REQUIRE(a);
    CHECK(a->answer == 2);
    CHECK(a->reasoning == "because");
    CHECK(parse_final(R"({"answer": 4})", 4).error().code == Code::Range);
    CHECK(parse_final(R"({"answer": "B"})", 4).error().code == Code::Schema);
    CHECK(parse_final("The answer is 2", 4).error().code == Code::NoJson);
}

TEST_CASE("name normalization") {
    CHECK(normalize_name("add-to scratchpad") == "ADDTOSCRATCHPAD");
    CHECK(normalize_name("Final_Decision") == "FINALDECISION");
}

TEST_CASE("parsers never throw on arbitrary input") {
    std::mt19937_64 rng(2024);
    const std::string alphabet = R"({}[]":,0123456789.-eE abcdefxyz\ntopidactionCONTINUEFINAL_DECISIONexplorestartend)";
    const std::vector<std::string> seeds = {
        R"({"top": [{"id": 1}, {"id": 2}, {"id": 3}]})",
        R"({"action": "ADD_TO_SCRATCHPAD", "items": [{"t": 1.5, "desc": "x", "conf": 0.5}]})",
        R"({"action": "CONTINUE", "explore": [1, {"start": 3, "end": 9}], "erase": ["A"]})",
        R"({"answer": 1, "reasoning": "r"})",
    };
    int ok = 0;
    for (int i = 0; i < 100000; ++i) {
        std::string s = seeds[static_cast<std::size_t>(i) % seeds.size()];
        const int edits = 1 + static_cast<int>(rng() % 6);
        for (int e = 0; e < edits; ++e) {
            const std::size_t pos = s.empty() ? 0 : rng() % s.size();
            const char c = alphabet[rng() % alphabet.size()];
            switch (rng() % 3) {
                case 0: s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), c); break;
                case 1: if (!s.empty()) s.erase(pos, 1); break;
                default: if (!s.empty()) s[pos] = c; break;
            }
        }
        bool threw = false;
        try {
            ok += parse_probe(s, 3, 64).ok();
            ok += parse_worker_action(s).ok();
            ok += parse_uncertainty(s, 64, 3).ok();
            ok += parse_final(s, 4).ok();
        } catch (...) {
            threw = true;
        }
        if (threw) FAIL("parser threw on: " << s);
    }
    CHECK(ok > 0);
}

}
