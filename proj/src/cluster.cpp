#include "cxr/cluster.hpp"

#include <algorithm>

#include "cxr/errors.hpp"

namespace cxr {

const std::array<std::string, kClusterCount>& cluster_names() {
    static const std::array<std::string, kClusterCount> names = {
        "No Finding",
        "Enlarged Cardiomediastinum",
        "Cardiomegaly",
        "Lung Opacity",
        "Lung Lesion",
        "Edema",
        "Consolidation",
        "Pneumonia",
        "Atelectasis",
        "Pneumothorax",
        "Pleural Effusion Or Other",
        "Fracture",
        "Support Devices",
    };
    return names;
}

int category_to_cluster(int category) {
    // Categories 10 (Pleural Effusion) and 11 (Pleural Other) merge into
    // cluster 10; Fracture and Support Devices shift down by one.
    if (category <= 10) return category;
    return category - 1;
}

namespace {

// Per-cluster state folded over the constituent categories.
struct ClusterStates {
    std::array<bool, kClusterCount> positive{};
    std::array<bool, kClusterCount> uncertain{};
};

ClusterStates fold_states(const LabelVector& lv) {
    ClusterStates cs;
    for (int cat = 1; cat < kCategoryCount; ++cat) {
        const int cl = category_to_cluster(cat);
        if (lv.states[cat] == LabelState::Positive) cs.positive[cl] = true;
        if (lv.states[cat] == LabelState::Uncertain) cs.uncertain[cl] = true;
    }
    return cs;
}

} // namespace

ClusterPriority cluster_priority(const Corpus& corpus, const Lexicons& lexicons) {
    if (corpus.reports.empty())
        throw Error(ErrorCode::EmptyCorpus, "cluster priority needs a non-empty corpus");

    ClusterPriority priority;
    for (const Report& report : corpus.reports) {
        const LabelVector lv = label_report(report, SectionMode::ImpressionFallback, lexicons);
        const ClusterStates cs = fold_states(lv);
        for (int cl = 1; cl < kClusterCount; ++cl)
            if (cs.positive[cl]) ++priority.positive_counts[cl];
    }

    std::array<int, kClusterCount - 1> disease{};
    for (int cl = 1; cl < kClusterCount; ++cl) disease[cl - 1] = cl;
    std::stable_sort(disease.begin(), disease.end(), [&](int a, int b) {
        if (priority.positive_counts[a] != priority.positive_counts[b])
            return priority.positive_counts[a] < priority.positive_counts[b];
        return a < b;
    });
    std::copy(disease.begin(), disease.end(), priority.order.begin());
    priority.order[kClusterCount - 1] = 0;
    return priority;
}

int assign_cluster(const Report& report, const ClusterPriority& priority,
                   const Lexicons& lexicons, bool uncertain_fallback) {
    const LabelVector lv = label_report(report, SectionMode::ImpressionFallback, lexicons);
    const ClusterStates cs = fold_states(lv);

    for (int cl : priority.order)
        if (cl != 0 && cs.positive[cl]) return cl;
    if (uncertain_fallback) {
        for (int cl : priority.order)
            if (cl != 0 && cs.uncertain[cl]) return cl;
    }
    return 0;
}

} // namespace cxr
