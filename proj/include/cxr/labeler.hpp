#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cxr/corpus.hpp"
#include "cxr/textproc.hpp"

namespace cxr {

inline constexpr int kCategoryCount = 14;

enum class LabelState : uint8_t { Positive, Negative, Uncertain, Absent };

std::string_view label_state_name(LabelState state);
LabelState parse_label_state(std::string_view name);

// The 14 observation categories plus the phrase lexicon that detects them.
// Both come from data files; nothing about the category list is baked in
// beyond its size.
struct CategorySet {
    std::vector<std::string> names; // size kCategoryCount, canonical order
    struct Phrase {
        TokenSeq tokens;
        int category = 0;
    };
    std::vector<Phrase> phrases;

    int index_of(std::string_view name) const; // -1 when unknown
};

// Cue phrases are stored tokenized; windows count tokens before the mention.
struct CueLexicons {
    std::vector<TokenSeq> negation;
    std::vector<TokenSeq> uncertainty;
    int window = 6;
};

struct ModifierLexicon {
    std::unordered_set<std::string> tokens;
    int window = 3;
};

struct Lexicons {
    CategorySet categories;
    CueLexicons cues;
    ModifierLexicon modifiers;
    std::string version;

    // Reads categories.txt, category_phrases.tsv, negation.txt,
    // uncertainty.txt and modifiers.txt from the directory.
    static Lexicons load(const std::string& dir);
};

struct Mention {
    int category = 0;
    int sentence = 0;
    int begin = 0; // token span [begin, end) within the sentence
    int end = 0;
};

struct LabelVector {
    std::string report_id;
    std::array<LabelState, kCategoryCount> states;

    LabelVector() { states.fill(LabelState::Absent); }
};

struct FineLabel {
    std::string surface; // "<modifier> <disease phrase>" or the bare phrase
    int category = 0;

    bool operator<(const FineLabel& o) const {
        return surface != o.surface ? surface < o.surface : category < o.category;
    }
    bool operator==(const FineLabel& o) const {
        return surface == o.surface && category == o.category;
    }
};

struct FineGrainedVocab {
    // Descending count, then lexicographic surface; stable indices.
    std::vector<std::pair<std::string, long>> entries;
    long threshold = 1;
};

// All maximal non-overlapping lexicon matches, longest first, left to right.
std::vector<Mention> find_mentions(const TokenSeq& sentence, const CategorySet& categories);

// Negation beats uncertainty when both cues appear in the window.
LabelState classify_mention(const TokenSeq& sentence, const Mention& mention,
                            const CueLexicons& cues);

// Aggregation per category: Positive > Uncertain > Negative > Absent. The
// first category (No Finding) is set by rule, not by mentions.
LabelVector label_text(std::string_view text, const Lexicons& lexicons,
                       std::string report_id = "");
LabelVector label_report(const Report& report, SectionMode mode, const Lexicons& lexicons);

// Sorted, deduplicated fine labels from Positive mentions only.
std::vector<FineLabel> extract_fine_grained(const Report& report, SectionMode mode,
                                            const Lexicons& lexicons);

FineGrainedVocab build_vocab(const Corpus& corpus, long threshold, const Lexicons& lexicons);

} // namespace cxr
