#include "cxr/clinical_metrics.hpp"

#include "cxr/errors.hpp"

namespace cxr {

uint16_t binarize(const LabelVector& lv) {
    uint16_t mask = 0;
    for (int c = 0; c < kCategoryCount; ++c)
        if (lv.states[c] == LabelState::Positive) mask |= static_cast<uint16_t>(1u << c);
    return mask;
}

ClinicalScores clinical_eval(const std::vector<LabelVector>& cands,
                             const std::vector<LabelVector>& refs,
                             bool count_empty_classes) {
    if (cands.size() != refs.size())
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(cands.size()) + " candidates vs " +
                        std::to_string(refs.size()) + " references");
    for (size_t i = 0; i < cands.size(); ++i) {
        if (cands[i].report_id != refs[i].report_id)
            throw Error(ErrorCode::IdMismatch, "pair " + std::to_string(i) + ": '" +
                                                   cands[i].report_id + "' vs '" +
                                                   refs[i].report_id + "'");
    }

    std::array<long, kCategoryCount> tp{}, fp{}, fn{};
    for (size_t i = 0; i < cands.size(); ++i) {
        const uint16_t c = binarize(cands[i]);
        const uint16_t r = binarize(refs[i]);
        for (int k = 0; k < kCategoryCount; ++k) {
            const bool cb = c & (1u << k), rb = r & (1u << k);
            if (cb && rb) ++tp[k];
            else if (cb) ++fp[k];
            else if (rb) ++fn[k];
        }
    }

    ClinicalScores scores;
    long tp_sum = 0, fp_sum = 0, fn_sum = 0;
    double f1_sum = 0.0;
    int f1_count = 0;
    for (int k = 0; k < kCategoryCount; ++k) {
        tp_sum += tp[k];
        fp_sum += fp[k];
        fn_sum += fn[k];
        if (tp[k] + fp[k] + fn[k] == 0) {
            if (count_empty_classes) {
                scores.per_class[k] = 0.0;
                ++f1_count;
            }
            continue;
        }
        const double f1 = 2.0 * tp[k] / (2.0 * tp[k] + fp[k] + fn[k]);
        scores.per_class[k] = f1;
        f1_sum += f1;
        ++f1_count;
    }
    scores.macro_f1 = f1_count > 0 ? f1_sum / f1_count : 0.0;
    scores.precision = (tp_sum + fp_sum) > 0 ? static_cast<double>(tp_sum) / (tp_sum + fp_sum) : 0.0;
    scores.recall = (tp_sum + fn_sum) > 0 ? static_cast<double>(tp_sum) / (tp_sum + fn_sum) : 0.0;
    return scores;
}

} // namespace cxr
