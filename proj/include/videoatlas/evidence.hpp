#pragma once

#include <string>
#include <vector>

#include "videoatlas/image.hpp"

namespace atlas {

/// What a policy asks to commit: a timestamp plus its own reading of it.
struct EvidenceDraft {
    double t_s = 0.0;
    std::string description;
    double confidence = 0.5;
    friend bool operator==(const EvidenceDraft&, const EvidenceDraft&) = default;
};

/// One scratchpad entry: image, subtitle, timestamp, confidence and a
/// description relating it to the query. Labels are spreadsheet-style (A, B,
/// ..., Z, AA, ...) and never reused once assigned.
struct EvidenceItem {
    std::string label;
    ImagePtr image;
    std::string subtitle;
    double timestamp_s = 0.0;
    double confidence = 0.0;
    std::string description;
};

}  // namespace atlas
