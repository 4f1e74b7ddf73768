#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cxr {

// One radiology study, already segmented into sections.
struct Report {
    std::string id;
    std::optional<std::string> background;
    std::optional<std::string> findings;
    std::optional<std::string> impression;
};

struct Corpus {
    std::vector<Report> reports;
    std::string source_path;
    size_t skipped = 0; // malformed input lines, tolerated unless all fail
};

enum class SectionMode { Findings, Impression, ImpressionFallback };

SectionMode parse_section_mode(std::string_view name);
std::string_view section_mode_name(SectionMode mode);

// Where a recognized heading routes its text.
enum class HeadingTarget { Findings, Impression, Background, Discard };

struct HeadingConfig {
    // Heading token (uppercase, without the colon) -> destination section.
    std::map<std::string, HeadingTarget> headings;
    static const HeadingConfig& defaults();
};

// Splits raw report text on uppercase "HEADING:" tokens. Text before the
// first heading (or all text when no heading is present) goes to findings.
Report parse_report(std::string_view raw, std::string id,
                    const HeadingConfig& config = HeadingConfig::defaults());

// Line-delimited JSON, {"id","text"} or pre-split
// {"id","findings","impression","background"}. Malformed lines are counted,
// not fatal unless every line fails.
Corpus load_corpus(const std::string& path,
                   const HeadingConfig& config = HeadingConfig::defaults());

// Pre-split JSONL, loadable by load_corpus with an exact round trip.
void save_corpus(const Corpus& corpus, const std::string& path);

std::string effective_text(const Report& report, SectionMode mode);

} // namespace cxr
