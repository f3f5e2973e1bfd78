#include "videoatlas/templates.hpp"

#include <algorithm>
#include <cctype>
#include <fmt/format.h>

#include "videoatlas/error.hpp"

namespace atlas::policy {

namespace {

constexpr std::string_view kSearchTask = R"tmpl(Convert this question + choices into 
a concrete SEARCH TASK for exploring a video.

Question: "{query}"
Choices:
{candidates}

Describe EXACTLY what to look for visually.
Be specific about scenes, objects, 
text overlays, or transitions 
that would confirm each choice.
Output only the search task, no preamble.)tmpl";

constexpr std::string_view kMasterProbe = R"tmpl(You are analyzing a KxK grid of frames sampled
from a SINGLE video in chronological order
(left-to-right, top-to-bottom).

**QUERY:** "{query}"

**GRID CELLS:**
{context_str}

Pick EXACTLY {top_n} cells (no more, no fewer)
most likely to help answer the query.

**OUTPUT (raw JSON, EXACTLY {top_n} entries):**
{"top": [{"id": <cell_id>}, ...]})tmpl";

constexpr std::string_view kMasterUncertainty = R"tmpl(**UNCERTAINTY ANALYSIS**

You are the MASTER coordinator analyzing 
search progress for a video question.

**QUERY:** "{query}"
**ANSWER CHOICES:**
{candidates}
**EVIDENCE COLLECTED SO FAR:**
{evidence_text}
**EXPLORATION PROGRESS:**
{progress_text}
**NAVIGATION GRID (blacked-out = explored):**
{context_str}

**YOUR 3 TASKS (do all in one response):**

1. **UNCERTAINTY CHECK:** For each answer choice,
   do you have sufficient evidence?
2. **EXPLORE SUGGESTIONS:** Suggest up to {N}
   regions. ONLY suggest non-blacked-out cells.
   - Cell IDs from the grid
   - Custom time ranges {"start","end"} (<60s)
3. **ERASE NOISE:** ONLY erase evidence completely
   unrelated to query, task, and ALL choices.
   Keep partial evidence. When in doubt, keep it.

**If sufficient:** {"action": "FINAL_DECISION",...}
**Otherwise:** {"action": "CONTINUE",
  "reasoning": "...", "explore": [...],
  "erase": [...]})tmpl";

constexpr std::string_view kWorkerStep = R"tmpl(SEARCH TASK: "{search_task}"
QUERY: "{query}"

You are exploring [{start}-{end}s]
({pct}
Grid: {K}x{K}, chronological L-to-R, T-to-B.

**CELLS:**
{context_str}

**PREVIOUS:** {prev_summary}

**RULES:**
- EXPAND into promising cells to zoom in
- Use ZOOM only when you found a relevant scene
  and need a closer high-resolution look
- Use INVESTIGATE only when you found the anchor
  scene and need to check what happens before/after
- ADD_TO_SCRATCHPAD with timestamp, description,
  and confidence when you find evidence
- FINISHED when region has no relevant content

Pick ONE action. Be precise with timestamps.)tmpl";

constexpr std::string_view kMasterFinal = R"tmpl(You are making a FINAL DECISION based on all
collected visual evidence.

QUERY: "{query}"
ANSWER CHOICES:
{candidates}

EVIDENCE (see grid image with burned-in labels):
{evidence_descriptions}

For EACH choice: state which evidence supports
or contradicts it. Then select the best-supported
answer.

**OUTPUT:**
{"answer": <choice index>, "reasoning": "..."})tmpl";

}  // namespace

const char* to_string(Role role) {
    switch (role) {
        case Role::SearchTask: return "search_task";
        case Role::MasterProbe: return "master_probe";
        case Role::MasterUncertainty: return "master_uncertainty";
        case Role::WorkerStep: return "worker_step";
        case Role::MasterFinal: return "master_final";
    }
    return "?";
}

std::string_view template_text(Role role) {
    switch (role) {
        case Role::SearchTask: return kSearchTask;
        case Role::MasterProbe: return kMasterProbe;
        case Role::MasterUncertainty: return kMasterUncertainty;
        case Role::WorkerStep: return kWorkerStep;
        case Role::MasterFinal: return kMasterFinal;
    }
    throw TemplateError("unknown role");
}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Length of "{identifier}" starting at pos, or 0.
std::size_t placeholder_len(std::string_view s, std::size_t pos) {
    if (s[pos] != '{' || pos + 2 >= s.size() || !ident_start(s[pos + 1])) return 0;
    std::size_t i = pos + 2;
    while (i < s.size() && ident_char(s[i])) ++i;
    if (i < s.size() && s[i] == '}') return i - pos + 1;
    return 0;
}

}  // namespace

std::vector<std::string> placeholders(std::string_view tmpl) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const auto n = placeholder_len(tmpl, i);
        if (n == 0) continue;
        std::string name(tmpl.substr(i + 1, n - 2));
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
        i += n - 1;
    }
    return out;
}

std::string fill_template(std::string_view tmpl, const Bindings& bindings) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const auto n = placeholder_len(tmpl, i);
        if (n == 0) {
            out.push_back(tmpl[i++]);
            continue;
        }
        const auto name = tmpl.substr(i + 1, n - 2);
        auto it = bindings.find(name);
        if (it == bindings.end()) throw TemplateError(fmt::format("no binding for placeholder {{{}}}", name));
        out += it->second;
        i += n;
    }
    return out;
}

std::string fill_template(Role role, const Bindings& bindings) { return fill_template(template_text(role), bindings); }

}  // namespace atlas::policy
