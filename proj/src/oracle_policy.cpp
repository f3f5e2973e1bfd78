#include "videoatlas/policy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <fmt/format.h>

#include "videoatlas/error.hpp"

namespace atlas::policy {

using nlohmann::json;

namespace {

char glyph_letter(int g) { return static_cast<char>('A' + g); }

struct Committed {
    std::string label;
    double t = 0.0;
    std::string desc;
};

std::vector<Committed> read_evidence(const json& ctx) {
    std::vector<Committed> out;
    if (!ctx.contains("evidence")) return out;
    for (const auto& e : ctx.at("evidence")) {
        out.push_back({e.value("label", std::string()), e.at("t").get<double>(), e.value("desc", std::string())});
    }
    return out;
}

bool visible_at(const media::PlantedEvent& e, double t) { return std::abs(t - e.t_s) <= 0.5 * e.width_s + 1e-9; }

bool covered(const media::PlantedEvent& e, const std::vector<Committed>& ev) {
    return std::any_of(ev.begin(), ev.end(), [&](const Committed& c) {
        return visible_at(e, c.t) && glyph_from_description(c.desc) == e.glyph;
    });
}

struct CellView {
    int id = 0;
    double start = 0.0;
    double end = 0.0;
    bool blacked = false;
    bool in_scope = true;
    double mid() const { return start + 0.5 * (end - start); }
    bool contains(double t) const { return t >= start && t < end; }
};

std::vector<CellView> read_cells(const json& ctx) {
    std::vector<CellView> out;
    for (const auto& c : ctx.at("cells")) {
        out.push_back({c.at("id").get<int>(), c.at("start").get<double>(), c.at("end").get<double>(),
                       c.value("blacked", false), c.value("in_scope", true)});
    }
    return out;
}

const CellView* cell_containing(const std::vector<CellView>& cells, double t) {
    for (const auto& c : cells) {
        if (c.contains(t)) return &c;
    }
    return nullptr;
}

std::optional<int> perceive_tile(const ImagePtr& grid, int cell, int k) {
    const int tile = grid->width() / k;
    const Raster crop = grid->raster().crop((cell % k) * tile, (cell / k) * tile, tile, tile);
    return media::detect_glyph(crop);
}

}  // namespace

std::string describe_glyph(std::optional<int> glyph) {
    if (!glyph) return "no glyph visible";
    return fmt::format("glyph {} visible", glyph_letter(*glyph));
}

std::optional<int> glyph_from_description(const std::string& description) {
    const std::string prefix = "glyph ";
    const auto pos = description.find(prefix);
    if (pos == std::string::npos || pos + prefix.size() >= description.size()) return std::nullopt;
    const char c = description[pos + prefix.size()];
    if (c < 'A' || c > 'Z') return std::nullopt;
    if (description.find(" visible", pos) == std::string::npos) return std::nullopt;
    return c - 'A';
}

OraclePolicy::OraclePolicy(OracleKnowledge knowledge, metrics::TokenModel tokens)
    : know_(std::move(knowledge)), tokens_(tokens) {
    std::sort(know_.events.begin(), know_.events.end(),
              [](const media::PlantedEvent& a, const media::PlantedEvent& b) { return a.t_s < b.t_s; });
}

PolicyResponse OraclePolicy::decide(const PolicyRequest& request) {
    PolicyResponse r;
    r.raw_text = decide_text(request);
    r.tokens_in = metrics::count_tokens(request, tokens_);
    r.tokens_out = metrics::text_tokens(r.raw_text, tokens_);
    r.usage_estimated = true;
    return r;
}

std::string OraclePolicy::decide_text(const PolicyRequest& request) const {
    switch (request.role) {
        case Role::SearchTask: return search_task(request);
        case Role::MasterProbe: return probe(request);
        case Role::WorkerStep: return worker(request);
        case Role::MasterUncertainty: return uncertainty(request);
        case Role::MasterFinal: return final_answer(request);
    }
    throw Error("oracle: unknown role");
}

std::string OraclePolicy::search_task(const PolicyRequest&) const {
    if (know_.events.empty()) return "Look for any glyph marker.";
    std::string out = "Locate ";
    for (std::size_t i = 0; i < know_.events.size(); ++i) {
        const auto& e = know_.events[i];
        if (i > 0) out += ", ";
        out += fmt::format("glyph {} near {:.1f} s", glyph_letter(e.glyph), e.t_s);
    }
    return out + ".";
}

std::string OraclePolicy::probe(const PolicyRequest& r) const {
    const auto cells = read_cells(r.context);
    const auto ev = read_evidence(r.context);
    const int top_n = r.context.at("top_n").get<int>();
    std::vector<std::pair<int, int>> ranked;  // (rank class, id)
    for (const auto& c : cells) {
        if (c.blacked) continue;
        const bool wanted = std::any_of(know_.events.begin(), know_.events.end(), [&](const media::PlantedEvent& e) {
            return c.contains(e.t_s) && !covered(e, ev);
        });
        ranked.emplace_back(wanted ? 0 : 1, c.id);
    }
    std::sort(ranked.begin(), ranked.end());
    json top = json::array();
    for (int i = 0; i < top_n && i < static_cast<int>(ranked.size()); ++i) top.push_back({{"id", ranked[static_cast<std::size_t>(i)].second}});
    return json{{"top", top}}.dump();
}

std::string OraclePolicy::worker(const PolicyRequest& r) const {
    const json& ctx = r.context;
    const auto cells = read_cells(ctx);
    const auto ev = read_evidence(ctx);
    std::set<std::string> avail;
    for (const auto& a : ctx.at("available")) avail.insert(a.get<std::string>());
    const double pos_start = ctx.at("position").at(0).get<double>();
    const double pos_end = ctx.at("position").at(1).get<double>();
    const double own_start = ctx.at("owned").at(0).get<double>();
    const double own_end = ctx.at("owned").at(1).get<double>();
    const bool bfs = ctx.value("mode", std::string("DFS")) == "BFS";
    const int k = ctx.at("k").get<int>();

    auto in_owned = [&](double t) { return t >= own_start && t < own_end; };
    auto handled = [&](const media::PlantedEvent& e) {
        if (covered(e, ev)) return true;
        // Already looked at this resolution: some commit lies in the event's cell.
        const CellView* c = cell_containing(cells, e.t_s);
        return c && std::any_of(ev.begin(), ev.end(), [&](const Committed& x) { return c->contains(x.t); });
    };

    std::vector<const media::PlantedEvent*> here;
    bool elsewhere = false;
    for (const auto& e : know_.events) {
        if (!in_owned(e.t_s) || handled(e)) continue;
        const CellView* c = cell_containing(cells, e.t_s);
        if (e.t_s >= pos_start && e.t_s < pos_end && c && c->in_scope && !c->blacked) {
            here.push_back(&e);
        } else if (!(e.t_s >= pos_start && e.t_s < pos_end)) {
            elsewhere = true;
        }
    }

    if (here.empty()) {
        if (elsewhere && avail.contains("BACKTRACK")) return json{{"action", "BACKTRACK"}}.dump();
        return json{{"action", "FINISHED"}}.dump();
    }

    const auto* target = here.front();
    const CellView* cell = cell_containing(cells, target->t_s);
    const bool can_expand = avail.contains("EXPAND");

    if (bfs) {
        if (can_expand && avail.contains("MARK_PROMISING")) {
            std::vector<int> ids;
            std::set<std::pair<double, double>> queued;
            if (ctx.contains("queued")) {
                for (const auto& q : ctx.at("queued")) queued.insert({q.at(0).get<double>(), q.at(1).get<double>()});
            }
            for (const auto* e : here) {
                const CellView* c = cell_containing(cells, e->t_s);
                if (queued.contains({c->start, c->end})) continue;
                if (std::find(ids.begin(), ids.end(), c->id) == ids.end()) ids.push_back(c->id);
            }
            if (ids.empty()) return json{{"action", "FINISHED"}}.dump();
            return json{{"action", "MARK_PROMISING"}, {"cells", ids}}.dump();
        }
        // Finest level: read the tile straight off the grid.
        const auto g = perceive_tile(r.images.front(), cell->id, k);
        json item{{"t", cell->mid()}, {"desc", describe_glyph(g)}, {"conf", g ? 0.9 : 0.1}};
        return json{{"action", "ADD_TO_SCRATCHPAD"}, {"items", json::array({item})}}.dump();
    }

    const json last = ctx.value("last", json());
    if (last.is_object() && last.value("action", std::string()) == "ZOOM" && last.value("cell", -1) == cell->id &&
        r.images.size() >= 2) {
        const auto g = media::detect_glyph(r.images.back()->raster());
        json item{{"t", last.at("t").get<double>()}, {"desc", describe_glyph(g)}, {"conf", g ? 0.9 : 0.1}};
        return json{{"action", "ADD_TO_SCRATCHPAD"}, {"items", json::array({item})}}.dump();
    }
    if (can_expand) return json{{"action", "EXPAND"}, {"cell", cell->id}}.dump();
    return json{{"action", "ZOOM"}, {"cell", cell->id}}.dump();
}

std::string OraclePolicy::uncertainty(const PolicyRequest& r) const {
    const json& ctx = r.context;
    const auto cells = read_cells(ctx);
    const auto ev = read_evidence(ctx);
    const int n = ctx.value("max_suggestions", 3);

    json erase = json::array();
    for (const auto& c : ev) {
        if (!glyph_from_description(c.desc)) erase.push_back(c.label);
    }

    std::vector<const media::PlantedEvent*> open;
    for (const auto& e : know_.events) {
        if (!covered(e, ev)) open.push_back(&e);
    }
    if (open.empty()) {
        return json{{"action", "FINAL_DECISION"}, {"reasoning", "every target glyph is on the scratchpad"}}.dump();
    }

    json explore = json::array();
    std::set<int> used;
    for (const auto* e : open) {
        if (static_cast<int>(explore.size()) >= n) break;
        const CellView* c = cell_containing(cells, e->t_s);
        if (!c) {
            const double start = std::max(0.0, e->t_s - 20.0);
            const double end = std::min(know_.duration_s, e->t_s + 20.0);
            explore.push_back({{"start", start}, {"end", end}});
            continue;
        }
        // A blacked cell was already searched down to the depth cap.
        if (!c->blacked && used.insert(c->id).second) explore.push_back(c->id);
    }
    if (explore.empty()) {
        return json{{"action", "FINAL_DECISION"},
                    {"reasoning", fmt::format("{} target(s) lie in regions already searched", open.size())}}
            .dump();
    }
    return json{{"action", "CONTINUE"},
                {"reasoning", fmt::format("{} target(s) still without evidence", open.size())},
                {"explore", explore},
                {"erase", erase}}
        .dump();
}

std::string OraclePolicy::final_answer(const PolicyRequest& r) const {
    const auto ev = read_evidence(r.context);
    std::vector<std::pair<double, int>> seen;
    for (const auto& c : ev) {
        if (auto g = glyph_from_description(c.desc)) seen.emplace_back(c.t, *g);
    }
    std::sort(seen.begin(), seen.end());
    std::string sequence;
    std::vector<std::pair<double, int>> distinct;
    for (const auto& s : seen) {
        // Two sightings of one glyph less than a second apart are the same event.
        if (!distinct.empty() && distinct.back().second == s.second && s.first - distinct.back().first < 1.0) continue;
        distinct.push_back(s);
        if (!sequence.empty()) sequence += ", ";
        sequence += glyph_letter(s.second);
    }
    const auto& cands = r.context.at("candidates");
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i].get<std::string>() == sequence) {
            return json{{"answer", static_cast<int>(i)},
                        {"reasoning", fmt::format("evidence shows {}", sequence)}}
                .dump();
        }
    }
    return json{{"answer", -1}, {"reasoning", "no choice matches the evidence"}}.dump();
}

}  // namespace atlas::policy
