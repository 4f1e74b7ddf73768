#include "cxr/labeler.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "cxr/errors.hpp"

namespace cxr {

namespace {

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> read_lines(const std::string& path, std::string* version) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open lexicon file " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            if (version && version->empty()) {
                const size_t v = t.find('v');
                if (v != std::string::npos) *version = t.substr(v);
            }
            continue;
        }
        lines.push_back(std::move(t));
    }
    return lines;
}

// True when `phrase` matches `tokens` starting at `pos`.
bool match_at(const TokenSeq& tokens, size_t pos, const TokenSeq& phrase) {
    if (pos + phrase.size() > tokens.size()) return false;
    for (size_t i = 0; i < phrase.size(); ++i)
        if (tokens[pos + i] != phrase[i]) return false;
    return true;
}

bool any_cue_at(const TokenSeq& tokens, size_t pos, const std::vector<TokenSeq>& cues) {
    for (const auto& cue : cues)
        if (match_at(tokens, pos, cue)) return true;
    return false;
}

// Does any cue phrase lie fully inside [win_begin, win_end)?
bool cue_in_window(const TokenSeq& tokens, size_t win_begin, size_t win_end,
                   const std::vector<TokenSeq>& cues) {
    for (size_t p = win_begin; p < win_end; ++p) {
        for (const auto& cue : cues) {
            if (p + cue.size() <= win_end && match_at(tokens, p, cue)) return true;
        }
    }
    return false;
}

} // namespace

std::string_view label_state_name(LabelState state) {
    switch (state) {
        case LabelState::Positive: return "positive";
        case LabelState::Negative: return "negative";
        case LabelState::Uncertain: return "uncertain";
        case LabelState::Absent: return "absent";
    }
    return "absent";
}

LabelState parse_label_state(std::string_view name) {
    if (name == "positive") return LabelState::Positive;
    if (name == "negative") return LabelState::Negative;
    if (name == "uncertain") return LabelState::Uncertain;
    if (name == "absent") return LabelState::Absent;
    throw Error(ErrorCode::BadLexicon, "unknown label state '" + std::string(name) + "'");
}

int CategorySet::index_of(std::string_view name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

Lexicons Lexicons::load(const std::string& dir) {
    Lexicons lex;

    const auto cat_lines = read_lines(dir + "/categories.txt", &lex.version);
    if (cat_lines.size() != kCategoryCount)
        throw Error(ErrorCode::BadLexicon,
                    "categories.txt must list exactly 14 categories, got " +
                        std::to_string(cat_lines.size()));
    lex.categories.names = cat_lines;

    std::set<std::string> seen_phrases;
    for (const std::string& line : read_lines(dir + "/category_phrases.tsv", nullptr)) {
        const size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error(ErrorCode::BadLexicon, "category_phrases.tsv line missing tab: " + line);
        const std::string phrase = trim(line.substr(0, tab));
        const std::string category = trim(line.substr(tab + 1));
        const int idx = lex.categories.index_of(category);
        if (idx < 0)
            throw Error(ErrorCode::BadLexicon, "unknown category '" + category + "'");
        TokenSeq tokens = tokenize(phrase);
        if (tokens.empty())
            throw Error(ErrorCode::BadLexicon, "empty phrase for category '" + category + "'");
        std::string key;
        for (const auto& t : tokens) { key += t; key.push_back(' '); }
        if (!seen_phrases.insert(key).second)
            throw Error(ErrorCode::BadLexicon, "phrase '" + phrase + "' mapped twice");
        lex.categories.phrases.push_back({std::move(tokens), idx});
    }

    for (const std::string& line : read_lines(dir + "/negation.txt", nullptr))
        lex.cues.negation.push_back(tokenize(line));
    for (const std::string& line : read_lines(dir + "/uncertainty.txt", nullptr))
        lex.cues.uncertainty.push_back(tokenize(line));
    for (const std::string& line : read_lines(dir + "/modifiers.txt", nullptr)) {
        const TokenSeq toks = tokenize(line);
        if (toks.size() == 1) lex.modifiers.tokens.insert(toks[0]);
    }
    if (lex.version.empty()) lex.version = "unversioned";
    return lex;
}

std::vector<Mention> find_mentions(const TokenSeq& sentence, const CategorySet& categories) {
    // Longest phrases win; ties keep lexicon order.
    std::map<std::string, std::vector<const CategorySet::Phrase*>> by_first;
    for (const auto& phrase : categories.phrases)
        by_first[phrase.tokens.front()].push_back(&phrase);
    for (auto& [_, list] : by_first) {
        std::stable_sort(list.begin(), list.end(),
                         [](const CategorySet::Phrase* a, const CategorySet::Phrase* b) {
                             return a->tokens.size() > b->tokens.size();
                         });
    }

    std::vector<Mention> mentions;
    size_t pos = 0;
    while (pos < sentence.size()) {
        const auto it = by_first.find(sentence[pos]);
        const CategorySet::Phrase* hit = nullptr;
        if (it != by_first.end()) {
            for (const CategorySet::Phrase* phrase : it->second) {
                if (match_at(sentence, pos, phrase->tokens)) {
                    hit = phrase;
                    break;
                }
            }
        }
        if (hit) {
            Mention m;
            m.category = hit->category;
            m.begin = static_cast<int>(pos);
            m.end = static_cast<int>(pos + hit->tokens.size());
            mentions.push_back(m);
            pos += hit->tokens.size();
        } else {
            ++pos;
        }
    }
    return mentions;
}

LabelState classify_mention(const TokenSeq& sentence, const Mention& mention,
                            const CueLexicons& cues) {
    const size_t begin = static_cast<size_t>(mention.begin);
    const size_t win_begin =
        begin >= static_cast<size_t>(cues.window) ? begin - cues.window : 0;

    if (cue_in_window(sentence, win_begin, begin, cues.negation))
        return LabelState::Negative;
    if (cue_in_window(sentence, win_begin, begin, cues.uncertainty))
        return LabelState::Uncertain;
    // A multi-token uncertainty cue ending exactly at the mention also fires
    // when the window is too small to contain it.
    for (const auto& cue : cues.uncertainty) {
        if (cue.size() <= begin && match_at(sentence, begin - cue.size(), cue))
            return LabelState::Uncertain;
    }
    return LabelState::Positive;
}

namespace {

struct SentenceAnalysis {
    TokenSeq tokens;
    std::vector<Mention> mentions;
    std::vector<LabelState> states;
};

std::vector<SentenceAnalysis> analyze(std::string_view text, const Lexicons& lexicons) {
    std::vector<SentenceAnalysis> out;
    const auto sentences = split_sentences(text);
    for (size_t s = 0; s < sentences.size(); ++s) {
        SentenceAnalysis sa;
        sa.tokens = tokenize(sentences[s]);
        sa.mentions = find_mentions(sa.tokens, lexicons.categories);
        for (Mention& m : sa.mentions) {
            m.sentence = static_cast<int>(s);
            sa.states.push_back(classify_mention(sa.tokens, m, lexicons.cues));
        }
        out.push_back(std::move(sa));
    }
    return out;
}

} // namespace

LabelVector label_text(std::string_view text, const Lexicons& lexicons, std::string report_id) {
    LabelVector lv;
    lv.report_id = std::move(report_id);

    std::array<bool, kCategoryCount> positive{}, uncertain{}, negative{};
    for (const auto& sa : analyze(text, lexicons)) {
        for (size_t i = 0; i < sa.mentions.size(); ++i) {
            const int c = sa.mentions[i].category;
            switch (sa.states[i]) {
                case LabelState::Positive: positive[c] = true; break;
                case LabelState::Uncertain: uncertain[c] = true; break;
                case LabelState::Negative: negative[c] = true; break;
                case LabelState::Absent: break;
            }
        }
    }

    bool any_disease_positive_or_uncertain = false;
    for (int c = 1; c < kCategoryCount; ++c) {
        if (positive[c]) lv.states[c] = LabelState::Positive;
        else if (uncertain[c]) lv.states[c] = LabelState::Uncertain;
        else if (negative[c]) lv.states[c] = LabelState::Negative;
        else lv.states[c] = LabelState::Absent;
        if (positive[c] || uncertain[c]) any_disease_positive_or_uncertain = true;
    }
    lv.states[0] = any_disease_positive_or_uncertain ? LabelState::Absent : LabelState::Positive;
    return lv;
}

LabelVector label_report(const Report& report, SectionMode mode, const Lexicons& lexicons) {
    return label_text(effective_text(report, mode), lexicons, report.id);
}

std::vector<FineLabel> extract_fine_grained(const Report& report, SectionMode mode,
                                            const Lexicons& lexicons) {
    std::set<FineLabel> labels;
    const std::string text = effective_text(report, mode);

    std::vector<TokenSeq> all_cues = lexicons.cues.negation;
    all_cues.insert(all_cues.end(), lexicons.cues.uncertainty.begin(),
                    lexicons.cues.uncertainty.end());

    for (const auto& sa : analyze(text, lexicons)) {
        for (size_t i = 0; i < sa.mentions.size(); ++i) {
            if (sa.states[i] != LabelState::Positive) continue;
            const Mention& m = sa.mentions[i];

            std::string phrase = sa.tokens[m.begin];
            for (int t = m.begin + 1; t < m.end; ++t) {
                phrase.push_back(' ');
                phrase += sa.tokens[t];
            }
            labels.insert({phrase, m.category});

            // Nearest-first scan of the modifier window; a cue token ends it.
            const int lo = std::max(0, m.begin - lexicons.modifiers.window);
            for (int q = m.begin - 1; q >= lo; --q) {
                if (any_cue_at(sa.tokens, static_cast<size_t>(q), all_cues)) break;
                if (lexicons.modifiers.tokens.count(sa.tokens[q]))
                    labels.insert({sa.tokens[q] + " " + phrase, m.category});
            }
        }
    }
    return {labels.begin(), labels.end()};
}

FineGrainedVocab build_vocab(const Corpus& corpus, long threshold, const Lexicons& lexicons) {
    if (corpus.reports.empty())
        throw Error(ErrorCode::EmptyCorpus, "cannot build a vocabulary from an empty corpus");

    std::map<std::string, long> counts;
    for (const Report& report : corpus.reports) {
        if (!report.findings) continue;
        for (const FineLabel& fl : extract_fine_grained(report, SectionMode::Findings, lexicons))
            ++counts[fl.surface];
    }

    FineGrainedVocab vocab;
    vocab.threshold = threshold;
    for (const auto& [surface, count] : counts)
        if (count >= threshold) vocab.entries.push_back({surface, count});
    std::sort(vocab.entries.begin(), vocab.entries.end(),
              [](const auto& a, const auto& b) {
                  return a.second != b.second ? a.second > b.second : a.first < b.first;
              });
    return vocab;
}

} // namespace cxr
