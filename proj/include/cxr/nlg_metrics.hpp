#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cxr/textproc.hpp"

namespace cxr {

// One candidate report scored against its single reference.
struct EvalPair {
    std::string id;
    TokenSeq candidate;
    TokenSeq reference;
};

struct NlgScores {
    std::array<double, 4> bleu{}; // BLEU-1..4
    double rouge_l = 0.0;
    double meteor = 0.0;
    std::optional<double> cider; // unset when fewer than two pairs
};

// Corpus-level clipped n-gram counts; exposed so accumulation stays
// checkable in isolation.
struct BleuStats {
    std::array<long, 4> matched{};
    std::array<long, 4> total{};
    long cand_len = 0;
    long ref_len = 0;
};

BleuStats bleu_stats(const std::vector<EvalPair>& pairs, int max_n);

// Corpus BLEU-N with uniform 1/N weights and no smoothing: any zero
// precision gives a zero score.
double bleu(const std::vector<EvalPair>& pairs, int max_n);

// Mean per-pair LCS F-score with beta = 1.2.
double rouge_l(const std::vector<EvalPair>& pairs);

// Exact + stem unigram matching, fragmentation penalty; alpha = 0.9,
// beta = 3, gamma = 0.5 (METEOR 1.0 defaults).
double meteor(const std::vector<EvalPair>& pairs);

// CIDEr-D with sigma = 6, x10 scaling, IDF floored at zero.
double cider(const std::vector<EvalPair>& pairs);
std::vector<double> cider_scores(const std::vector<EvalPair>& pairs); // per pair

NlgScores evaluate_nlg(const std::vector<EvalPair>& pairs);

} // namespace cxr
