#include "cxr/textproc.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace cxr {

namespace {

bool is_word_byte(unsigned char c) {
    // Multi-byte UTF-8 sequences are kept intact.
    return std::isalnum(c) || c >= 0x80;
}

bool is_digit(unsigned char c) { return std::isdigit(c); }

const std::unordered_set<std::string>& abbreviations() {
    static const std::unordered_set<std::string> abbrev = {
        "dr.", "mr.", "mrs.", "ms.", "st.", "vs.", "etc.",
        "e.g.", "i.e.", "a.m.", "p.m.", "approx.", "cf.",
    };
    return abbrev;
}

} // namespace

TokenSeq tokenize(std::string_view text) {
    TokenSeq tokens;
    std::string cur;
    const size_t n = text.size();
    for (size_t i = 0; i < n; ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_word_byte(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
            continue;
        }
        // "1.5" and "10,000" stay single tokens.
        if ((c == '.' || c == ',') && i > 0 && i + 1 < n &&
            is_digit(static_cast<unsigned char>(text[i - 1])) &&
            is_digit(static_cast<unsigned char>(text[i + 1]))) {
            cur.push_back(static_cast<char>(c));
            continue;
        }
        if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    auto trim = [](std::string_view s) -> std::string {
        size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return std::string(s.substr(b, e - b));
    };

    size_t start = 0;
    const size_t n = text.size();
    for (size_t i = 0; i < n; ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        const bool at_end = (i + 1 == n);
        if (!at_end && !std::isspace(static_cast<unsigned char>(text[i + 1]))) continue;
        if (c == '.') {
            // Word ending here, dots included, e.g. "a.m." at its final dot.
            size_t j = i;
            while (j > start) {
                const unsigned char p = static_cast<unsigned char>(text[j - 1]);
                if (std::isalpha(p) || p == '.') --j; else break;
            }
            std::string word(text.substr(j, i - j + 1));
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char ch) { return std::tolower(ch); });
            if (abbreviations().count(word)) continue;
        }
        std::string sentence = trim(text.substr(start, i - start + 1));
        if (!sentence.empty()) sentences.push_back(std::move(sentence));
        start = i + 1;
    }
    if (start < n) {
        std::string tail = trim(text.substr(start));
        if (!tail.empty()) sentences.push_back(std::move(tail));
    }
    return sentences;
}

std::string stem(std::string_view token) {
    static constexpr std::array<std::string_view, 4> suffixes = {"ing", "es", "ed", "s"};
    constexpr size_t min_stem = 3;
    for (const auto& suf : suffixes) {
        if (token.size() >= suf.size() + min_stem &&
            token.substr(token.size() - suf.size()) == suf) {
            return std::string(token.substr(0, token.size() - suf.size()));
        }
    }
    return std::string(token);
}

NgramCounts ngrams(const TokenSeq& seq, int n) {
    NgramCounts out;
    out.n = n;
    if (n < 1 || seq.size() < static_cast<size_t>(n)) return out;
    for (size_t i = 0; i + n <= seq.size(); ++i) {
        std::string key = seq[i];
        for (int j = 1; j < n; ++j) {
            key.push_back(' ');
            key += seq[i + j];
        }
        ++out.counts[key];
    }
    return out;
}

int lcs_length(const TokenSeq& a, const TokenSeq& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                            : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace cxr
