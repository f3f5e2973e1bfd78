#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "videoatlas/env.hpp"
#include "videoatlas/error.hpp"

namespace atlas::policy {

/// Balanced {...} substrings of `text` that parse as JSON objects, in order of
/// their opening brace. Braces inside JSON strings are respected.
std::vector<nlohmann::json> json_objects(std::string_view text);

/// Probe output {"top": [{"id": n}, ...]}. Requires exactly top_n distinct ids
/// in [0, cell_count) none of which is blacked.
Parsed<std::vector<int>> parse_probe(std::string_view text, int top_n, int cell_count,
                                     const std::vector<bool>& blacked = {});

/// Worker output {"action": NAME, ...}. Names are matched ignoring case,
/// underscores, hyphens and spaces.
Parsed<env::Action> parse_worker_action(std::string_view text);

struct UncertaintyDecision {
    enum class Kind { Continue, FinalDecision };
    Kind kind = Kind::Continue;
    std::vector<int> explore_cells;
    std::vector<timeline::Interval> explore_ranges;
    std::vector<std::string> erase;
    std::string reasoning;
};

inline constexpr double kMaxExploreRangeS = 60.0;

/// Uncertainty output: CONTINUE with explore targets (cell ids or
/// {"start","end"} ranges narrower than 60 s) and erase labels, or
/// FINAL_DECISION. At most max_suggestions targets are kept.
Parsed<UncertaintyDecision> parse_uncertainty(std::string_view text, int cell_count, int max_suggestions);

struct FinalAnswer {
    int answer = -1;
    std::string reasoning;
};

/// Final output {"answer": i, "reasoning": "..."} with i in [0, num_candidates).
Parsed<FinalAnswer> parse_final(std::string_view text, int num_candidates);

/// Upper-cased name with '_', '-' and ' ' removed.
std::string normalize_name(std::string_view name);

}  // namespace atlas::policy
