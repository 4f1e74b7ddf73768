#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cxr {

// Lowercase tokens, no whitespace or empty entries.
using TokenSeq = std::vector<std::string>;

// Lowercases, splits punctuation off and drops it. Decimal points and commas
// flanked by digits stay inside the token so numerals survive as one token.
TokenSeq tokenize(std::string_view text);

// Splits on '.', '!' or '?' followed by whitespace or end of text. Known
// abbreviations ("vs.", "a.m.", ...) do not end a sentence.
std::vector<std::string> split_sentences(std::string_view text);

// Light suffix stripper: removes one of "ing", "es", "ed", "s" when the
// remaining stem keeps at least 3 characters. Input is a lowercase token.
std::string stem(std::string_view token);

// Contiguous n-grams with multiplicity. Keys are tokens joined by a single
// space (tokens never contain whitespace).
struct NgramCounts {
    int n = 1;
    std::unordered_map<std::string, int> counts;
};

NgramCounts ngrams(const TokenSeq& seq, int n);

// Longest common subsequence length, O(|a|*|b|).
int lcs_length(const TokenSeq& a, const TokenSeq& b);

} // namespace cxr
