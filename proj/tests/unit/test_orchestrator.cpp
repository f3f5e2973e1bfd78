#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "videoatlas/bench.hpp"
#include "videoatlas/error.hpp"
#include "videoatlas/orchestrator.hpp"

using namespace atlas;
using namespace atlas::orchestrator;
using nlohmann::json;

namespace {

Target cell(int i, double T = 3600.0) {
    return env::cell_target(timeline::VideoSpan::make(T, 25.0), timeline::CellAddress(8, {i}));
}

EpisodeConfig fast_config() {
    EpisodeConfig c;
    c.tile_px = 96;
    return c;
}

bench::NeedleEpisode needle(double T, std::uint64_t seed, int events = 1, bool disjoint = false) {
    bench::NeedleSpec s;
    s.duration_s = T;
    s.seed = seed;
    s.events = events;
    s.disjoint = disjoint;
    s.tile_px = 96;
    return bench::make_needle_episode(s);
}

/// Oracle everywhere except the final decision, which is scripted.
class ScriptedFinal final : public policy::Policy {
public:
    ScriptedFinal(policy::OracleKnowledge k, std::vector<std::string> finals)
        : oracle_(std::move(k)), finals_(std::move(finals)) {}
    policy::PolicyResponse decide(const policy::PolicyRequest& r) override {
        if (r.role != policy::Role::MasterFinal) return oracle_.decide(r);
        policy::PolicyResponse resp;
        resp.raw_text = finals_.at(std::min(calls_++, finals_.size() - 1));
        return resp;
    }
    std::string name() const override { return "scripted"; }
    std::size_t calls_ = 0;

private:
    policy::OraclePolicy oracle_;
    std::vector<std::string> finals_;
};

class Unreachable final : public policy::Policy {
public:
    explicit Unreachable(policy::Role fail_on) : fail_on_(fail_on), oracle_({}) {}
    policy::PolicyResponse decide(const policy::PolicyRequest& r) override {
        if (r.role == fail_on_) throw TransportError("connection refused");
        return oracle_.decide(r);
    }
    std::string name() const override { return "unreachable"; }

private:
    policy::Role fail_on_;
    policy::OraclePolicy oracle_;
};

}  // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("frontier hands out distinct entries by priority") {
    FrontierQueue q;
    q.push(cell(0), 0.9);
    q.push(cell(1), 0.8);
    const auto two = q.assign(2);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == cell(0));
    CHECK(two[1] == cell(1));
    CHECK(q.assign(2).empty());

    FrontierQueue small;
    small.push(cell(3), 0.5);
    small.push(cell(4), 0.4);
    CHECK(small.assign(3).size() == 2);
}

TEST_CASE("virtual loss deprioritizes an assigned entry") {
    FrontierQueue q(1.0);
    q.push(cell(0), 0.9);
    q.push(cell(1), 0.8);
    CHECK(q.assign(1) == std::vector<Target>{cell(0)});
    q.push(cell(0), 0.95);  // re-probe ranks it first again
    CHECK(q.effective_priority(cell(0).key()) == doctest::Approx(-0.05));
    CHECK(q.assign(1) == std::vector<Target>{cell(1)});
    q.complete(cell(0).key());
    CHECK(q.size() == 1);
    CHECK_THROWS_AS(q.effective_priority(cell(0).key()), Error);
    CHECK_THROWS_AS(q.push(cell(2), std::nan("")), Error);
}

TEST_CASE("ties go to the earlier insert") {
    FrontierQueue q;
    q.push(cell(9), 0.5);
    q.push(cell(2), 0.5);
    CHECK(q.assign(1) == std::vector<Target>{cell(9)});
}

TEST_CASE("blacked entries are dropped unless in flight") {
    FrontierQueue q;
    q.push(cell(0), 0.9);
    q.push(cell(1), 0.8);
    q.assign(1);
    env::DeadZoneSet dead;
    dead.add({0, 112.5}, 0);
    q.remove_if_blacked(dead, 0.95);
    REQUIRE(q.size() == 1);
    CHECK(q.entries()[0].target == cell(0));
}

TEST_CASE("no double assignment: randomized") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        FrontierQueue q(1.0);
        std::set<std::string> in_flight;
        for (int op = 0; op < 30; ++op) {
            const int kind = static_cast<int>(rng() % 3);
            if (kind == 0) {
                q.push(cell(static_cast<int>(rng() % 64)), static_cast<double>(rng() % 1000) / 1000.0);
            } else if (kind == 1) {
                const auto got = q.assign(1 + static_cast<int>(rng() % 7));
                std::set<std::string> keys;
                for (const auto& t : got) {
                    CHECK(keys.insert(t.key()).second);
                    CHECK(in_flight.insert(t.key()).second);
                }
            } else if (!in_flight.empty()) {
                auto it = in_flight.begin();
                std::advance(it, static_cast<long>(rng() % in_flight.size()));
                q.complete(*it);
                in_flight.erase(it);
            }
        }
    }
}

TEST_CASE("traversal classifier") {
    CHECK(classify_traversal("How many yellow cards are shown in the match?") == Mode::DFS);
    CHECK(classify_traversal("Summarize the sequence of scenes") == Mode::BFS);
    CHECK(classify_traversal("In what ORDER do the speakers appear?") == Mode::BFS);
    CHECK(classify_traversal("What colour is the car?") == Mode::DFS);
}

TEST_CASE("rank priorities") {
    CHECK(rank_priority(0, 3) == 1.0);
    CHECK(rank_priority(1, 4) == 0.75);
    CHECK(rank_priority(0, 0) == 0.0);
}

TEST_CASE("explore ranges become targets") {
    const auto ep = needle(3600.0, 1);
    policy::OraclePolicy oracle(ep.knowledge());

    Episode capped(ep.input(), fast_config(), oracle);  // cap: sub-second depth 1
    const auto t = capped.range_target({100, 130});
    CHECK(t.depth == 1);
    CHECK(t.interval.width() == doctest::Approx(56.25));
    CHECK(t.interval.contains(Interval{100, 130}));
    CHECK_FALSE(t.address.has_value());

    auto deep = fast_config();
    deep.max_depth = 3;
    Episode uncapped(ep.input(), deep, oracle);
    const auto u = uncapped.range_target({100, 130});
    CHECK(u.interval == Interval{100, 130});
    CHECK(u.depth == 1);
    const auto v = uncapped.range_target({3590, 3650});
    CHECK(v.interval.end_s == doctest::Approx(3600.0));
    const auto w = uncapped.range_target({200, 100});
    CHECK(w.interval.width() == doctest::Approx(1.0));
}

TEST_CASE("oracle finds a single needle in an hour within two rounds") {
    const auto ep = needle(3600.0, 4);
    const auto r = bench::run_oracle(ep, fast_config());
    CHECK(r.correct == true);
    CHECK(r.rounds <= 2);
    CHECK(r.stop_reason == StopReason::Sufficiency);
    CHECK(bench::localized(ep, r.evidence));
    CHECK(r.max_state_depth <= timeline::sub_second_depth(3600.0, 8));
    CHECK(r.total_tokens == r.master_tokens + r.worker_tokens);
    CHECK(r.cache_total_tokens > 0);
}

TEST_CASE("zero rounds abstains") {
    const auto ep = needle(600.0, 2);
    auto c = fast_config();
    c.max_rounds = 0;
    const auto r = bench::run_oracle(ep, c);
    CHECK(r.stop_reason == StopReason::WorkerBudget);
    CHECK_FALSE(r.answer.has_value());
    CHECK(r.correct == false);
    CHECK(r.note.find("abstain") != std::string::npos);
}

TEST_CASE("a zero token budget stops before the first round") {
    const auto ep = needle(600.0, 2);
    auto c = fast_config();
    c.global_token_budget = 0;
    const auto r = bench::run_oracle(ep, c);
    CHECK(r.stop_reason == StopReason::GlobalBudget);
    CHECK(r.rounds == 0);
}

TEST_CASE("running out of rounds is a worker budget stop") {
    const auto ep = needle(3600.0, 3, 3, true);
    auto c = fast_config();
    c.workers = 1;
    c.max_rounds = 1;
    const auto r = bench::run_oracle(ep, c);
    CHECK(r.rounds == 1);
    CHECK(r.stop_reason == StopReason::WorkerBudget);
}

TEST_CASE("trace records are numbered and complete") {
    const auto ep = needle(600.0, 6);
    const auto r = bench::run_oracle(ep, fast_config());
    REQUIRE_FALSE(r.trace.empty());
    std::ostringstream out;
    write_trace_jsonl(out, r.trace);
    std::istringstream in(out.str());
    std::string line;
    int expected = 0;
    std::set<std::string> actors;
    while (std::getline(in, line)) {
        const auto j = json::parse(line);
        CHECK(j["step"] == expected++);
        for (const char* key : {"round", "actor", "action", "args", "tokens_in", "tokens_out", "state_hash"}) {
            CHECK(j.contains(key));
        }
        CHECK(j["state_hash"].get<std::string>().size() == 16);
        actors.insert(j["actor"].get<std::string>());
    }
    CHECK(expected == static_cast<int>(r.trace.size()));
    CHECK(actors.contains("master"));
    CHECK(actors.contains("worker:0"));
    CHECK(r.trace.front().action == "SEARCH_TASK");
}

TEST_CASE("report fields") {
    const auto ep = needle(600.0, 8);
    const auto j = bench::run_oracle(ep, fast_config()).report_json();
    for (const char* key : {"answer", "correct", "rounds", "stop_reason", "master_tokens", "worker_tokens",
                            "total_tokens", "cache_hit_rate", "evidence_count"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["evidence_count"] == j["evidence"].size());
}

TEST_CASE("merge is deterministic across worker counts") {
    for (std::uint64_t seed : {1u, 2u}) {
        const auto ep = needle(3600.0, seed, 3, true);
        std::optional<std::vector<std::pair<double, std::string>>> first;
        std::optional<int> rounds_w1;
        for (int w : {1, 3, 7}) {
            auto c = fast_config();
            c.workers = w;
            const auto r = bench::run_oracle(ep, c);
            CHECK(r.correct == true);
            const auto set = bench::evidence_set(r.evidence);
            if (!first) {
                first = set;
                rounds_w1 = r.rounds;
            }
            CHECK(set == *first);
            CHECK(r.rounds <= *rounds_w1);
        }
    }
}

TEST_CASE("parallel and sequential scheduling agree byte for byte") {
    const auto ep = needle(3600.0, 5, 3, true);
    auto c = fast_config();
    c.parallel = true;
    const auto a = bench::run_oracle(ep, c).report_json();
    c.parallel = false;
    const auto b = bench::run_oracle(ep, c).report_json();
    CHECK(a.dump() == b.dump());
}

TEST_CASE("sequence questions run breadth first") {
    auto ep = needle(3600.0, 7, 3, true);
    ep.query = "List the glyph markers in the order they appear.";
    const auto r = bench::run_oracle(ep, fast_config());
    CHECK(r.mode == Mode::BFS);
    CHECK(r.correct == true);
}

TEST_CASE("an invalid final reply falls back to candidate mentions") {
    const auto ep = needle(600.0, 3);
    const std::string right = ep.candidates[static_cast<std::size_t>(ep.correct)];
    ScriptedFinal p(ep.knowledge(), {json{{"answer", 99}, {"reasoning", "clearly " + right}}.dump()});
    const auto r = run_episode(ep.input(), fast_config(), p);
    CHECK(p.calls_ == 2);
    CHECK(r.answer == ep.correct);
    CHECK(r.note.find("candidate mentions") != std::string::npos);
    CHECK(r.trace.back().action == "FINAL_FALLBACK");
}

TEST_CASE("an unusable final reply abstains") {
    const auto ep = needle(600.0, 3);
    ScriptedFinal p(ep.knowledge(), {"I cannot tell."});
    const auto r = run_episode(ep.input(), fast_config(), p);
    CHECK_FALSE(r.answer.has_value());
    CHECK(r.note.find("abstained") != std::string::npos);
}

TEST_CASE("a single candidate is answered directly") {
    auto ep = needle(600.0, 3);
    ep.candidates = {ep.candidates[static_cast<std::size_t>(ep.correct)]};
    ep.correct = 0;
    const auto r = bench::run_oracle(ep, fast_config());
    CHECK(r.answer == 0);
}

TEST_CASE("transport failures end the episode without an answer") {
    const auto ep = needle(600.0, 3);
    Unreachable master(policy::Role::MasterProbe);
    const auto r = run_episode(ep.input(), fast_config(), master);
    CHECK_FALSE(r.answer.has_value());

    Unreachable workers(policy::Role::WorkerStep);
    auto c = fast_config();
    c.max_rounds = 2;
    const auto w = run_episode(ep.input(), c, workers);
    CHECK_FALSE(w.answer.has_value());
    const bool logged = std::any_of(w.trace.begin(), w.trace.end(),
                                    [](const TraceRecord& t) { return t.action == "WORKER_FAILED"; });
    CHECK(logged);

    Unreachable task(policy::Role::SearchTask);
    const auto s = run_episode(ep.input(), fast_config(), task);
    CHECK(s.search_task == ep.query);
    CHECK(s.note.find("search task") != std::string::npos);
}

TEST_CASE("configuration is validated") {
    const auto ep = needle(60.0, 1);
    policy::OraclePolicy oracle(ep.knowledge());
    auto c = fast_config();
    c.workers = 0;
    CHECK_THROWS_AS(Episode(ep.input(), c, oracle), ConfigError);
    auto in = ep.input();
    in.query = "  ";
    CHECK_THROWS_AS(Episode(in, fast_config(), oracle), ConfigError);
}

}
