#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "cxr/labeler.hpp"

namespace cxr {

// Positive -> bit set; Uncertain, Negative and Absent all clear.
uint16_t binarize(const LabelVector& lv);

struct ClinicalScores {
    double precision = 0.0; // micro-averaged
    double recall = 0.0;    // micro-averaged
    double macro_f1 = 0.0;  // mean of included per-class F1
    std::array<std::optional<double>, kCategoryCount> per_class{};
};

// Per-class F1 from corpus-level confusion counts; classes with no support
// on either side are excluded from the macro mean unless count_empty_classes
// is set, in which case they score 0.
ClinicalScores clinical_eval(const std::vector<LabelVector>& cands,
                             const std::vector<LabelVector>& refs,
                             bool count_empty_classes = false);

} // namespace cxr
