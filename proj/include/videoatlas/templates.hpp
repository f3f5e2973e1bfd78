#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "videoatlas/request.hpp"

namespace atlas::policy {

/// Prompt text for a role, byte for byte, with `{name}` placeholders.
std::string_view template_text(Role role);

/// Placeholder names in order of first appearance. Only `{identifier}` counts;
/// literal JSON such as {"top": ...} is left alone.
std::vector<std::string> placeholders(std::string_view tmpl);

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Substitutes every placeholder. Throws TemplateError naming the first
/// placeholder without a binding.
std::string fill_template(std::string_view tmpl, const Bindings& bindings);
std::string fill_template(Role role, const Bindings& bindings);

}  // namespace atlas::policy
