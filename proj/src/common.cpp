#include <fmt/format.h>

#include "videoatlas/error.hpp"
#include "videoatlas/hash.hpp"

namespace atlas {

std::string to_hex(std::uint64_t h) { return fmt::format("{:016x}", h); }

const char* to_string(ParseError::Code code) {
    switch (code) {
        case ParseError::Code::NoJson: return "no-json";
        case ParseError::Code::Schema: return "schema";
        case ParseError::Code::Count: return "count";
        case ParseError::Code::Range: return "range";
        case ParseError::Code::Constraint: return "constraint";
        case ParseError::Code::Ambiguous: return "ambiguous";
        case ParseError::Code::UnknownAction: return "unknown-action";
        case ParseError::Code::MissingArgument: return "missing-argument";
    }
    return "unknown";
}

}  // namespace atlas
