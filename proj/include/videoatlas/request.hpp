#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "videoatlas/image.hpp"

namespace atlas::policy {

enum class Role {
    SearchTask,
    MasterProbe,
    MasterUncertainty,
    WorkerStep,
    MasterFinal,
};

inline constexpr Role kAllRoles[] = {Role::SearchTask, Role::MasterProbe, Role::MasterUncertainty, Role::WorkerStep,
                                     Role::MasterFinal};

/// "search_task", "master_probe", ...
const char* to_string(Role role);

/// One call to a decision backend. `text` is the filled template and `images`
/// are attached after it in order. `context` carries the same state in
/// structured form; the oracle reads it, remote backends never send it.
struct PolicyRequest {
    Role role = Role::WorkerStep;
    std::string text;
    std::vector<ImagePtr> images;
    nlohmann::json context = nlohmann::json::object();
};

struct PolicyResponse {
    std::string raw_text;
    long long tokens_in = 0;
    long long tokens_out = 0;
    bool usage_estimated = true;  // false when the provider reported usage
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyResponse decide(const PolicyRequest& request) = 0;
    virtual std::string name() const = 0;
};

}  // namespace atlas::policy
