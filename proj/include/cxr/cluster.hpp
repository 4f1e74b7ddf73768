#pragma once

#include <array>
#include <string>

#include "cxr/corpus.hpp"
#include "cxr/labeler.hpp"

namespace cxr {

// 13 clusters: the 14 categories with Pleural Effusion and Pleural Other
// merged into one pleural cluster.
inline constexpr int kClusterCount = 13;

const std::array<std::string, kClusterCount>& cluster_names();

// Category index 0..13 -> cluster index 0..12.
int category_to_cluster(int category);

// Total order over clusters: rarest Positive cluster first, ties by
// canonical index, No Finding always last.
struct ClusterPriority {
    std::array<int, kClusterCount> order{};
    std::array<long, kClusterCount> positive_counts{};
};

ClusterPriority cluster_priority(const Corpus& corpus, const Lexicons& lexicons);

// Labels the impression (falling back to the first findings sentence) and
// picks the highest-priority Positive cluster, then Uncertain when enabled,
// then No Finding.
int assign_cluster(const Report& report, const ClusterPriority& priority,
                   const Lexicons& lexicons, bool uncertain_fallback = true);

} // namespace cxr
