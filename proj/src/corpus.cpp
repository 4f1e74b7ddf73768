#include "cxr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "cxr/errors.hpp"
#include "cxr/jsonl.hpp"
#include "cxr/textproc.hpp"

namespace cxr {

namespace {

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

struct HeadingHit {
    size_t begin;       // first char of the heading token
    size_t content_pos; // first char after the colon
    HeadingTarget target;
};

std::vector<HeadingHit> find_headings(std::string_view raw, const HeadingConfig& config) {
    std::vector<HeadingHit> hits;
    for (const auto& [name, target] : config.headings) {
        size_t pos = 0;
        while ((pos = raw.find(name, pos)) != std::string_view::npos) {
            const size_t end = pos + name.size();
            const bool starts_token =
                pos == 0 || !std::isalnum(static_cast<unsigned char>(raw[pos - 1]));
            if (starts_token && end < raw.size() && raw[end] == ':') {
                hits.push_back({pos, end + 1, target});
                pos = end + 1;
            } else {
                pos += 1;
            }
        }
    }
    std::sort(hits.begin(), hits.end(),
              [](const HeadingHit& a, const HeadingHit& b) { return a.begin < b.begin; });
    return hits;
}

void append_section(std::string& buf, std::string_view piece) {
    const std::string p = trim(piece);
    if (p.empty()) return;
    if (!buf.empty()) buf.push_back(' ');
    buf += p;
}

} // namespace

const HeadingConfig& HeadingConfig::defaults() {
    static const HeadingConfig config{{
        {"FINDINGS", HeadingTarget::Findings},
        {"IMPRESSION", HeadingTarget::Impression},
        {"INDICATION", HeadingTarget::Background},
        {"HISTORY", HeadingTarget::Background},
        {"COMPARISON", HeadingTarget::Discard},
        {"TECHNIQUE", HeadingTarget::Discard},
    }};
    return config;
}

SectionMode parse_section_mode(std::string_view name) {
    if (name == "findings") return SectionMode::Findings;
    if (name == "impression") return SectionMode::Impression;
    if (name == "impression_fallback") return SectionMode::ImpressionFallback;
    throw Error(ErrorCode::SectionMissing, "unknown section mode '" + std::string(name) + "'");
}

std::string_view section_mode_name(SectionMode mode) {
    switch (mode) {
        case SectionMode::Findings: return "findings";
        case SectionMode::Impression: return "impression";
        case SectionMode::ImpressionFallback: return "impression_fallback";
    }
    return "findings";
}

Report parse_report(std::string_view raw, std::string id, const HeadingConfig& config) {
    if (trim(raw).empty())
        throw Error(ErrorCode::EmptyReport, "report '" + id + "' has no content");

    std::string findings, impression, background;
    const auto hits = find_headings(raw, config);

    // Headingless text belongs to findings, including a preamble before the
    // first heading.
    const size_t first = hits.empty() ? raw.size() : hits.front().begin;
    append_section(findings, raw.substr(0, first));

    for (size_t i = 0; i < hits.size(); ++i) {
        const size_t end = (i + 1 < hits.size()) ? hits[i + 1].begin : raw.size();
        const std::string_view piece = raw.substr(hits[i].content_pos, end - hits[i].content_pos);
        switch (hits[i].target) {
            case HeadingTarget::Findings: append_section(findings, piece); break;
            case HeadingTarget::Impression: append_section(impression, piece); break;
            case HeadingTarget::Background: append_section(background, piece); break;
            case HeadingTarget::Discard: break;
        }
    }

    if (findings.empty() && impression.empty())
        throw Error(ErrorCode::NoUsableSection,
                    "report '" + id + "' has neither findings nor impression");

    Report report;
    report.id = std::move(id);
    if (!background.empty()) report.background = std::move(background);
    if (!findings.empty()) report.findings = std::move(findings);
    if (!impression.empty()) report.impression = std::move(impression);
    return report;
}

Corpus load_corpus(const std::string& path, const HeadingConfig& config) {
    Corpus corpus;
    corpus.source_path = path;
    std::set<std::string> seen_ids;

    corpus.skipped = for_each_jsonl(path, [&](size_t, const nlohmann::json& obj) {
        if (!obj.contains("id") || !obj["id"].is_string()) return false;
        std::string id = obj["id"].get<std::string>();
        if (id.empty() || seen_ids.count(id)) return false;

        const bool presplit =
            obj.contains("findings") || obj.contains("impression") || obj.contains("background");
        Report report;
        if (presplit) {
            report.id = id;
            auto pick = [&](const char* key) -> std::optional<std::string> {
                if (!obj.contains(key) || !obj[key].is_string()) return std::nullopt;
                std::string v = trim(obj[key].get<std::string>());
                if (v.empty()) return std::nullopt;
                return v;
            };
            report.background = pick("background");
            report.findings = pick("findings");
            report.impression = pick("impression");
            if (!report.findings && !report.impression) return false;
        } else {
            if (!obj.contains("text") || !obj["text"].is_string()) return false;
            try {
                report = parse_report(obj["text"].get<std::string>(), id, config);
            } catch (const Error&) {
                return false;
            }
        }
        seen_ids.insert(std::move(id));
        corpus.reports.push_back(std::move(report));
        return true;
    });

    if (corpus.reports.empty())
        throw Error(ErrorCode::AllRecordsInvalid, "no usable records in " + path);
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ostringstream out;
    for (const Report& r : corpus.reports) {
        nlohmann::json obj;
        obj["id"] = r.id;
        if (r.background) obj["background"] = *r.background;
        if (r.findings) obj["findings"] = *r.findings;
        if (r.impression) obj["impression"] = *r.impression;
        out << obj.dump() << '\n';
    }
    atomic_write(path, out.str());
}

std::string effective_text(const Report& report, SectionMode mode) {
    switch (mode) {
        case SectionMode::Findings:
            if (report.findings) return *report.findings;
            throw Error(ErrorCode::SectionMissing, "report '" + report.id + "' has no findings");
        case SectionMode::Impression:
            if (report.impression) return *report.impression;
            throw Error(ErrorCode::SectionMissing, "report '" + report.id + "' has no impression");
        case SectionMode::ImpressionFallback:
            if (report.impression) return *report.impression;
            if (report.findings) {
                const auto sentences = split_sentences(*report.findings);
                if (!sentences.empty()) return sentences.front();
            }
            throw Error(ErrorCode::SectionMissing,
                        "report '" + report.id + "' has no impression or findings");
    }
    throw Error(ErrorCode::SectionMissing, "invalid section mode");
}

} // namespace cxr
