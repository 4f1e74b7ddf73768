#include "cxr/nlg_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/errors.hpp"

namespace cxr {

namespace {

void require_pairs(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no candidate/reference pairs");
}

} // namespace

BleuStats bleu_stats(const std::vector<EvalPair>& pairs, int max_n) {
    BleuStats stats;
    for (const EvalPair& pair : pairs) {
        stats.cand_len += static_cast<long>(pair.candidate.size());
        stats.ref_len += static_cast<long>(pair.reference.size());
        for (int n = 1; n <= max_n; ++n) {
            const NgramCounts cand = ngrams(pair.candidate, n);
            const NgramCounts ref = ngrams(pair.reference, n);
            for (const auto& [gram, count] : cand.counts) {
                stats.total[n - 1] += count;
                const auto it = ref.counts.find(gram);
                if (it != ref.counts.end())
                    stats.matched[n - 1] += std::min(count, it->second);
            }
        }
    }
    return stats;
}

double bleu(const std::vector<EvalPair>& pairs, int max_n) {
    require_pairs(pairs);
    const BleuStats stats = bleu_stats(pairs, max_n);
    if (stats.cand_len == 0) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        if (stats.matched[n - 1] == 0) return 0.0;
        const double p = static_cast<double>(stats.matched[n - 1]) / stats.total[n - 1];
        log_sum += std::log(p) / max_n;
    }
    const double bp = stats.cand_len > stats.ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(stats.ref_len) / stats.cand_len);
    return bp * std::exp(log_sum);
}

double rouge_l(const std::vector<EvalPair>& pairs) {
    require_pairs(pairs);
    constexpr double beta_sq = 1.2 * 1.2;
    double sum = 0.0;
    for (const EvalPair& pair : pairs) {
        const int l = lcs_length(pair.candidate, pair.reference);
        if (l == 0) continue;
        const double p = static_cast<double>(l) / pair.candidate.size();
        const double r = static_cast<double>(l) / pair.reference.size();
        sum += (1.0 + beta_sq) * p * r / (r + beta_sq * p);
    }
    return sum / pairs.size();
}

namespace {

struct MatchResult {
    std::vector<std::pair<int, int>> matches; // (candidate pos, reference pos)
};

// Stage 1 exact, stage 2 stem; leftmost-greedy one-to-one in both stages.
MatchResult meteor_align(const TokenSeq& cand, const TokenSeq& ref) {
    MatchResult result;
    std::vector<bool> cand_used(cand.size(), false), ref_used(ref.size(), false);

    for (size_t i = 0; i < cand.size(); ++i) {
        for (size_t j = 0; j < ref.size(); ++j) {
            if (!ref_used[j] && ref[j] == cand[i]) {
                result.matches.push_back({static_cast<int>(i), static_cast<int>(j)});
                cand_used[i] = ref_used[j] = true;
                break;
            }
        }
    }
    std::vector<std::string> cand_stem(cand.size()), ref_stem(ref.size());
    for (size_t i = 0; i < cand.size(); ++i) cand_stem[i] = stem(cand[i]);
    for (size_t j = 0; j < ref.size(); ++j) ref_stem[j] = stem(ref[j]);
    for (size_t i = 0; i < cand.size(); ++i) {
        if (cand_used[i]) continue;
        for (size_t j = 0; j < ref.size(); ++j) {
            if (!ref_used[j] && ref_stem[j] == cand_stem[i]) {
                result.matches.push_back({static_cast<int>(i), static_cast<int>(j)});
                cand_used[i] = ref_used[j] = true;
                break;
            }
        }
    }
    std::sort(result.matches.begin(), result.matches.end());
    return result;
}

int chunk_count(const std::vector<std::pair<int, int>>& matches) {
    int chunks = 0;
    for (size_t k = 0; k < matches.size(); ++k) {
        if (k == 0 || matches[k].first != matches[k - 1].first + 1 ||
            matches[k].second != matches[k - 1].second + 1)
            ++chunks;
    }
    return chunks;
}

} // namespace

double meteor(const std::vector<EvalPair>& pairs) {
    require_pairs(pairs);
    constexpr double alpha = 0.9, beta = 3.0, gamma = 0.5;
    double sum = 0.0;
    for (const EvalPair& pair : pairs) {
        const MatchResult aligned = meteor_align(pair.candidate, pair.reference);
        const double m = static_cast<double>(aligned.matches.size());
        if (m == 0) continue;
        const double p = m / pair.candidate.size();
        const double r = m / pair.reference.size();
        const double f = p * r / (alpha * p + (1.0 - alpha) * r);
        const double ch = chunk_count(aligned.matches);
        const double penalty = gamma * std::pow(ch / m, beta);
        sum += f * (1.0 - penalty);
    }
    return sum / pairs.size();
}

namespace {

constexpr int kCiderMaxN = 4;
constexpr double kCiderSigma = 6.0;

using TfIdf = std::unordered_map<std::string, double>;

} // namespace

std::vector<double> cider_scores(const std::vector<EvalPair>& pairs) {
    require_pairs(pairs);
    if (pairs.size() < 2)
        throw Error(ErrorCode::TooFewPairs, "CIDEr needs at least two pairs for IDF");

    const double num_pairs = static_cast<double>(pairs.size());

    // Document frequency over reference sides, per n-gram order.
    std::array<std::unordered_map<std::string, int>, kCiderMaxN> df;
    for (const EvalPair& pair : pairs) {
        for (int n = 1; n <= kCiderMaxN; ++n)
            for (const auto& [gram, _] : ngrams(pair.reference, n).counts)
                ++df[n - 1][gram];
    }
    auto idf = [&](const std::string& gram, int n) {
        const auto it = df[n - 1].find(gram);
        const int d = it == df[n - 1].end() ? 0 : it->second;
        return std::max(0.0, std::log(num_pairs / (1.0 + d)));
    };
    auto tfidf_vector = [&](const TokenSeq& tokens, int n, double* norm) {
        TfIdf vec;
        double sq = 0.0;
        for (const auto& [gram, count] : ngrams(tokens, n).counts) {
            const double w = count * idf(gram, n);
            vec[gram] = w;
            sq += w * w;
        }
        *norm = std::sqrt(sq);
        return vec;
    };

    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const EvalPair& pair : pairs) {
        const double delta =
            static_cast<double>(pair.candidate.size()) - static_cast<double>(pair.reference.size());
        const double length_penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));

        double pair_sum = 0.0;
        for (int n = 1; n <= kCiderMaxN; ++n) {
            double cand_norm = 0.0, ref_norm = 0.0;
            const TfIdf cand_vec = tfidf_vector(pair.candidate, n, &cand_norm);
            const TfIdf ref_vec = tfidf_vector(pair.reference, n, &ref_norm);
            if (cand_norm == 0.0 || ref_norm == 0.0) continue; // 0/0 cosine is 0
            double dot = 0.0;
            for (const auto& [gram, wc] : cand_vec) {
                const auto it = ref_vec.find(gram);
                if (it != ref_vec.end()) dot += std::min(wc, it->second) * it->second;
            }
            pair_sum += 10.0 * length_penalty * dot / (cand_norm * ref_norm);
        }
        scores.push_back(pair_sum / kCiderMaxN);
    }
    return scores;
}

double cider(const std::vector<EvalPair>& pairs) {
    const std::vector<double> scores = cider_scores(pairs);
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum / scores.size();
}

NlgScores evaluate_nlg(const std::vector<EvalPair>& pairs) {
    require_pairs(pairs);
    NlgScores scores;
    for (int n = 1; n <= 4; ++n) scores.bleu[n - 1] = bleu(pairs, n);
    scores.rouge_l = rouge_l(pairs);
    scores.meteor = meteor(pairs);
    try {
        scores.cider = cider(pairs);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::TooFewPairs) throw;
        scores.cider = std::nullopt;
    }
    return scores;
}

} // namespace cxr
