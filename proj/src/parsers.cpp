#include "videoatlas/parsers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>

namespace atlas::policy {

using nlohmann::json;

namespace {

ParseError fail(ParseError::Code code, std::string message, std::string_view raw) {
    return ParseError{code, std::move(message), std::string(raw)};
}

// End (one past the closing brace) of the balanced object starting at `open`.
std::optional<std::size_t> match_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::nullopt;
}

std::optional<long long> as_int(const json& v) {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && std::floor(d) == d && std::abs(d) < 1e15) return static_cast<long long>(d);
        return std::nullopt;
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s.empty() || s.size() > 15) return std::nullopt;
        std::size_t i = (s[0] == '-') ? 1 : 0;
        if (i == s.size()) return std::nullopt;
        for (std::size_t j = i; j < s.size(); ++j) {
            if (!std::isdigit(static_cast<unsigned char>(s[j]))) return std::nullopt;
        }
        return std::stoll(s);
    }
    return std::nullopt;
}

std::optional<double> as_number(const json& v) {
    if (v.is_number()) {
        const double d = v.get<double>();
        if (std::isfinite(d)) return d;
        return std::nullopt;
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        char* end = nullptr;
        const double d = std::strtod(s.c_str(), &end);
        if (!s.empty() && end == s.c_str() + s.size() && std::isfinite(d)) return d;
    }
    return std::nullopt;
}

const json* field(const json& obj, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        auto it = obj.find(n);
        if (it != obj.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// First parsed object that has `key`; the other objects only matter for the
// error message.
const json* first_with(const std::vector<json>& objs, const char* key) {
    for (const auto& o : objs) {
        if (o.contains(key)) return &o;
    }
    return nullptr;
}

Parsed<int> cell_arg(const json& obj, std::string_view raw) {
    const json* v = field(obj, {"cell", "cell_id", "id"});
    if (!v) return fail(ParseError::Code::MissingArgument, "missing 'cell'", raw);
    auto n = as_int(*v);
    if (!n) return fail(ParseError::Code::Schema, "'cell' is not an integer", raw);
    if (*n < 0 || *n > 1'000'000) return fail(ParseError::Code::Range, fmt::format("cell {} out of range", *n), raw);
    return static_cast<int>(*n);
}

Parsed<EvidenceDraft> evidence_arg(const json& item, std::string_view raw) {
    if (!item.is_object()) return fail(ParseError::Code::Schema, "evidence item is not an object", raw);
    const json* t = field(item, {"t", "timestamp", "time", "t_s"});
    if (!t) return fail(ParseError::Code::MissingArgument, "evidence item without timestamp", raw);
    auto ts = as_number(*t);
    if (!ts) return fail(ParseError::Code::Schema, "evidence timestamp is not a number", raw);
    if (*ts < 0.0) return fail(ParseError::Code::Range, "negative evidence timestamp", raw);
    EvidenceDraft d;
    d.t_s = *ts;
    if (const json* desc = field(item, {"desc", "description", "text"})) {
        if (!desc->is_string()) return fail(ParseError::Code::Schema, "description is not a string", raw);
        d.description = desc->get<std::string>();
    }
    if (const json* c = field(item, {"conf", "confidence"})) {
        auto cv = as_number(*c);
        if (!cv) return fail(ParseError::Code::Schema, "confidence is not a number", raw);
        if (*cv < 0.0 || *cv > 1.0) return fail(ParseError::Code::Range, "confidence outside [0, 1]", raw);
        d.confidence = *cv;
    }
    return d;
}

Parsed<env::Action> worker_action(const json& obj, std::string_view raw) {
    using env::Action;
    const json& a = obj.at("action");
    if (!a.is_string()) return fail(ParseError::Code::Schema, "'action' is not a string", raw);
    const std::string name = normalize_name(a.get<std::string>());

    if (name == "EXPAND" || name == "ZOOM") {
        auto c = cell_arg(obj, raw);
        if (!c) return c.error();
        return name == "EXPAND" ? Action::expand(*c) : Action::zoom(*c);
    }
    if (name == "BACKTRACK") return Action::backtrack();
    if (name == "FINISHED") return Action::finished();
    if (name == "INVESTIGATE") {
        auto c = cell_arg(obj, raw);
        if (!c) return c.error();
        const json* d = field(obj, {"direction", "dir"});
        if (!d) return fail(ParseError::Code::MissingArgument, "missing 'direction'", raw);
        if (!d->is_string()) return fail(ParseError::Code::Schema, "'direction' is not a string", raw);
        const std::string dir = lower(d->get<std::string>());
        if (dir == "before") return Action::investigate(*c, env::Direction::Before);
        if (dir == "after") return Action::investigate(*c, env::Direction::After);
        return fail(ParseError::Code::Schema, "direction must be before or after", raw);
    }
    if (name == "MARKPROMISING") {
        std::vector<int> cells;
        if (const json* cs = field(obj, {"cells"})) {
            if (!cs->is_array()) return fail(ParseError::Code::Schema, "'cells' is not an array", raw);
            for (const auto& v : *cs) {
                auto n = as_int(v);
                if (!n) return fail(ParseError::Code::Schema, "cell id is not an integer", raw);
                if (*n < 0 || *n > 1'000'000) return fail(ParseError::Code::Range, "cell id out of range", raw);
                cells.push_back(static_cast<int>(*n));
            }
        } else {
            auto c = cell_arg(obj, raw);
            if (!c) return c.error();
            cells.push_back(*c);
        }
        if (cells.empty()) return fail(ParseError::Code::MissingArgument, "no cells to mark", raw);
        return Action::mark_promising(std::move(cells));
    }
    if (name == "ADDTOSCRATCHPAD") {
        std::vector<EvidenceDraft> items;
        if (const json* arr = field(obj, {"items", "evidence"})) {
            if (!arr->is_array()) return fail(ParseError::Code::Schema, "'items' is not an array", raw);
            for (const auto& it : *arr) {
                auto d = evidence_arg(it, raw);
                if (!d) return d.error();
                items.push_back(*d);
            }
        } else if (field(obj, {"t", "timestamp", "time", "t_s"})) {
            auto d = evidence_arg(obj, raw);
            if (!d) return d.error();
            items.push_back(*d);
        }
        if (items.empty()) return fail(ParseError::Code::MissingArgument, "no evidence items", raw);
        return Action::add(std::move(items));
    }
    return fail(ParseError::Code::UnknownAction, fmt::format("unknown action '{}'", a.get<std::string>()), raw);
}

}  // namespace

std::string normalize_name(std::string_view name) {
    std::string out;
    for (char c : name) {
        if (c == '_' || c == '-' || c == ' ') continue;
        out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return out;
}

std::vector<json> json_objects(std::string_view text) {
    std::vector<json> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        const auto end = match_brace(text, i);
        if (end) {
            json j = json::parse(text.substr(i, *end - i), nullptr, false);
            if (!j.is_discarded() && j.is_object()) {
                out.push_back(std::move(j));
                i = *end;
                continue;
            }
        }
        ++i;
    }
    return out;
}

Parsed<std::vector<int>> parse_probe(std::string_view text, int top_n, int cell_count,
                                     const std::vector<bool>& blacked) {
    try {
        const auto objs = json_objects(text);
        if (objs.empty()) return fail(ParseError::Code::NoJson, "no JSON object found", text);
        const json* obj = first_with(objs, "top");
        if (!obj) return fail(ParseError::Code::Schema, "no 'top' field", text);
        const json& top = obj->at("top");
        if (!top.is_array()) return fail(ParseError::Code::Schema, "'top' is not an array", text);
        std::vector<int> ids;
        for (const auto& e : top) {
            const json* v = e.is_object() ? field(e, {"id", "cell", "cell_id"}) : &e;
            if (!v) return fail(ParseError::Code::Schema, "entry without 'id'", text);
            auto n = as_int(*v);
            if (!n) return fail(ParseError::Code::Schema, "cell id is not an integer", text);
            if (*n < 0 || *n >= cell_count) {
                return fail(ParseError::Code::Range, fmt::format("cell {} outside [0, {})", *n, cell_count), text);
            }
            const int id = static_cast<int>(*n);
            if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
                return fail(ParseError::Code::Constraint, fmt::format("cell {} listed twice", id), text);
            }
            if (static_cast<std::size_t>(id) < blacked.size() && blacked[static_cast<std::size_t>(id)]) {
                return fail(ParseError::Code::Constraint, fmt::format("cell {} is blacked out", id), text);
            }
            ids.push_back(id);
        }
        if (static_cast<int>(ids.size()) != top_n) {
            return fail(ParseError::Code::Count, fmt::format("expected {} entries, got {}", top_n, ids.size()), text);
        }
        return ids;
    } catch (const std::exception& e) {
        return fail(ParseError::Code::Schema, e.what(), text);
    }
}

Parsed<env::Action> parse_worker_action(std::string_view text) {
    try {
        const auto objs = json_objects(text);
        if (objs.empty()) return fail(ParseError::Code::NoJson, "no JSON object found", text);
        const json* obj = first_with(objs, "action");
        if (!obj) return fail(ParseError::Code::Schema, "no 'action' field", text);
        return worker_action(*obj, text);
    } catch (const std::exception& e) {
        return fail(ParseError::Code::Schema, e.what(), text);
    }
}

Parsed<UncertaintyDecision> parse_uncertainty(std::string_view text, int cell_count, int max_suggestions) {
    using Kind = UncertaintyDecision::Kind;
    try {
        const auto objs = json_objects(text);
        if (objs.empty()) return fail(ParseError::Code::NoJson, "no JSON object found", text);

        const json* chosen = nullptr;
        std::optional<Kind> kind;
        for (const auto& o : objs) {
            auto it = o.find("action");
            if (it == o.end()) continue;
            if (!it->is_string()) return fail(ParseError::Code::Schema, "'action' is not a string", text);
            const std::string name = normalize_name(it->get<std::string>());
            const bool cont = name.find("CONTINUE") != std::string::npos;
            const bool fin = name.find("FINALDECISION") != std::string::npos;
            if (cont && fin) return fail(ParseError::Code::Ambiguous, "both CONTINUE and FINAL_DECISION", text);
            if (!cont && !fin) {
                return fail(ParseError::Code::UnknownAction, fmt::format("unknown action '{}'", it->get<std::string>()),
                            text);
            }
            if (cont && name != "CONTINUE") return fail(ParseError::Code::UnknownAction, "unknown action", text);
            if (fin && name != "FINALDECISION") return fail(ParseError::Code::UnknownAction, "unknown action", text);
            const Kind k = cont ? Kind::Continue : Kind::FinalDecision;
            if (kind && *kind != k) return fail(ParseError::Code::Ambiguous, "both CONTINUE and FINAL_DECISION", text);
            if (!chosen) {
                chosen = &o;
                kind = k;
            }
        }
        if (!chosen) return fail(ParseError::Code::Schema, "no 'action' field", text);

        UncertaintyDecision d;
        d.kind = *kind;
        if (const json* r = field(*chosen, {"reasoning"}); r && r->is_string()) d.reasoning = r->get<std::string>();
        if (d.kind == Kind::FinalDecision) return d;

        int kept = 0;
        if (const json* ex = field(*chosen, {"explore"})) {
            if (!ex->is_array()) return fail(ParseError::Code::Schema, "'explore' is not an array", text);
            for (const auto& e : *ex) {
                const bool is_range = e.is_object() && e.contains("start") && e.contains("end");
                if (is_range) {
                    auto s = as_number(e.at("start"));
                    auto t = as_number(e.at("end"));
                    if (!s || !t) return fail(ParseError::Code::Schema, "range bounds are not numbers", text);
                    if (*s < 0.0 || *t <= *s) {
                        return fail(ParseError::Code::Range, fmt::format("bad range [{}, {})", *s, *t), text);
                    }
                    if (*t - *s >= kMaxExploreRangeS) {
                        return fail(ParseError::Code::Constraint,
                                    fmt::format("range [{}, {}) is not shorter than 60 s", *s, *t), text);
                    }
                    if (kept++ < max_suggestions) d.explore_ranges.push_back({*s, *t});
                    continue;
                }
                const json* v = e.is_object() ? field(e, {"cell", "id", "cell_id"}) : &e;
                if (!v) return fail(ParseError::Code::Schema, "explore entry is neither a cell nor a range", text);
                auto n = as_int(*v);
                if (!n) return fail(ParseError::Code::Schema, "explore cell is not an integer", text);
                if (*n < 0 || *n >= cell_count) {
                    return fail(ParseError::Code::Range, fmt::format("cell {} outside [0, {})", *n, cell_count), text);
                }
                if (kept++ < max_suggestions) d.explore_cells.push_back(static_cast<int>(*n));
            }
        }
        if (const json* er = field(*chosen, {"erase"})) {
            if (!er->is_array()) return fail(ParseError::Code::Schema, "'erase' is not an array", text);
            for (const auto& e : *er) {
                if (!e.is_string()) return fail(ParseError::Code::Schema, "erase label is not a string", text);
                std::string l;
                for (char c : e.get<std::string>()) {
                    if (c != '[' && c != ']' && c != ' ') l.push_back(c);
                }
                if (!l.empty()) d.erase.push_back(std::move(l));
            }
        }
        return d;
    } catch (const std::exception& e) {
        return fail(ParseError::Code::Schema, e.what(), text);
    }
}

Parsed<FinalAnswer> parse_final(std::string_view text, int num_candidates) {
    try {
        const auto objs = json_objects(text);
        if (objs.empty()) return fail(ParseError::Code::NoJson, "no JSON object found", text);
        const json* obj = first_with(objs, "answer");
        if (!obj) return fail(ParseError::Code::Schema, "no 'answer' field", text);
        auto n = as_int(obj->at("answer"));
        if (!n) return fail(ParseError::Code::Schema, "'answer' is not an integer", text);
        if (*n < 0 || *n >= num_candidates) {
            return fail(ParseError::Code::Range, fmt::format("answer {} outside [0, {})", *n, num_candidates), text);
        }
        FinalAnswer a;
        a.answer = static_cast<int>(*n);
        if (const json* r = field(*obj, {"reasoning"}); r && r->is_string()) a.reasoning = r->get<std::string>();
        return a;
    } catch (const std::exception& e) {
        return fail(ParseError::Code::Schema, e.what(), text);
    }
}

}  // namespace atlas::policy
