// cxrkit — radiology report labeling, clustering, metric and CCVE toolkit.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cxr/ccve.hpp"
#include "cxr/clinical_metrics.hpp"
#include "cxr/cluster.hpp"
#include "cxr/corpus.hpp"
#include "cxr/errors.hpp"
#include "cxr/jsonl.hpp"
#include "cxr/labeler.hpp"
#include "cxr/nlg_metrics.hpp"
#include "cxr/version.hpp"

namespace {

using nlohmann::json;

#ifndef CXRKIT_DEFAULT_LEXICONS
#define CXRKIT_DEFAULT_LEXICONS "data/lexicons"
#endif

std::string resolve_lexicon_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("CXRKIT_LEXICONS")) return env;
    return CXRKIT_DEFAULT_LEXICONS;
}

void log_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << "config: command=" << command;
    for (const auto& [k, v] : kv) os << ' ' << k << '=' << v;
    std::cerr << os.str() << '\n';
}

// ---------------------------------------------------------------- label ---

int cmd_label(const std::string& corpus_path, const std::string& section,
              const std::string& out_path, const std::string& lexicon_dir) {
    log_config("label", {{"corpus", corpus_path}, {"section", section},
                         {"out", out_path}, {"lexicons", lexicon_dir}});
    const cxr::Lexicons lex = cxr::Lexicons::load(lexicon_dir);
    const cxr::SectionMode mode = cxr::parse_section_mode(section);
    const cxr::Corpus corpus = cxr::load_corpus(corpus_path);
    if (corpus.skipped > 0)
        std::cerr << "skipped " << corpus.skipped << " malformed record(s)\n";

    std::ostringstream out;
    size_t labeled = 0;
    for (const cxr::Report& report : corpus.reports) {
        cxr::LabelVector lv;
        std::vector<cxr::FineLabel> fine;
        try {
            lv = cxr::label_report(report, mode, lex);
            fine = cxr::extract_fine_grained(report, mode, lex);
        } catch (const cxr::Error& e) {
            if (e.code() != cxr::ErrorCode::SectionMissing) throw;
            std::cerr << "skipping '" << report.id << "': " << e.what() << '\n';
            continue;
        }
        json obj;
        obj["id"] = report.id;
        json states = json::array();
        for (const cxr::LabelState s : lv.states) states.push_back(cxr::label_state_name(s));
        obj["states"] = std::move(states);
        json fine_arr = json::array();
        for (const cxr::FineLabel& fl : fine) fine_arr.push_back(fl.surface);
        obj["fine"] = std::move(fine_arr);
        out << obj.dump() << '\n';
        ++labeled;
    }
    if (labeled == 0)
        throw cxr::Error(cxr::ErrorCode::AllRecordsInvalid,
                         "no report had the requested section");
    cxr::atomic_write(out_path, out.str());
    std::cerr << "labeled " << labeled << " report(s)\n";
    return 0;
}

// ---------------------------------------------------------------- vocab ---

int cmd_vocab(const std::string& corpus_path, long threshold, const std::string& out_path,
              const std::string& lexicon_dir) {
    log_config("vocab", {{"corpus", corpus_path}, {"threshold", std::to_string(threshold)},
                         {"out", out_path}, {"lexicons", lexicon_dir}});
    const cxr::Lexicons lex = cxr::Lexicons::load(lexicon_dir);
    const cxr::Corpus corpus = cxr::load_corpus(corpus_path);
    const cxr::FineGrainedVocab vocab = cxr::build_vocab(corpus, threshold, lex);

    std::ostringstream out;
    for (const auto& [surface, count] : vocab.entries)
        out << surface << '\t' << count << '\n';
    cxr::atomic_write(out_path, out.str());
    std::cerr << "retained " << vocab.entries.size() << " class(es) at threshold "
              << threshold << '\n';
    return 0;
}

// -------------------------------------------------------------- cluster ---

int cmd_cluster(const std::string& corpus_path, const std::string& out_path,
                const std::string& lexicon_dir, bool no_uncertain_fallback) {
    log_config("cluster", {{"corpus", corpus_path}, {"out", out_path},
                           {"lexicons", lexicon_dir},
                           {"uncertain_fallback", no_uncertain_fallback ? "off" : "on"}});
    const cxr::Lexicons lex = cxr::Lexicons::load(lexicon_dir);
    const cxr::Corpus corpus = cxr::load_corpus(corpus_path);
    const cxr::ClusterPriority priority = cxr::cluster_priority(corpus, lex);

    std::ostringstream out;
    std::array<long, cxr::kClusterCount> counts{};
    for (const cxr::Report& report : corpus.reports) {
        const int cl = cxr::assign_cluster(report, priority, lex, !no_uncertain_fallback);
        ++counts[cl];
        json obj;
        obj["id"] = report.id;
        obj["cluster"] = cl;
        obj["cluster_name"] = cxr::cluster_names()[cl];
        out << obj.dump() << '\n';
    }
    cxr::atomic_write(out_path, out.str());

    std::cout << "cluster  count  name\n";
    for (int cl = 0; cl < cxr::kClusterCount; ++cl)
        std::cout << cl << '\t' << counts[cl] << '\t' << cxr::cluster_names()[cl] << '\n';
    std::cout << "priority (rarest first):";
    for (int cl : priority.order) std::cout << ' ' << cl;
    std::cout << '\n';
    return 0;
}

// ----------------------------------------------------------------- eval ---

std::vector<std::pair<std::string, std::string>> load_id_text(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> records;
    std::set<std::string> seen;
    const size_t skipped = cxr::for_each_jsonl(path, [&](size_t, const json& obj) {
        if (!obj.contains("id") || !obj["id"].is_string() || !obj.contains("text") ||
            !obj["text"].is_string())
            return false;
        std::string id = obj["id"].get<std::string>();
        if (id.empty() || !seen.insert(id).second) return false;
        records.push_back({std::move(id), obj["text"].get<std::string>()});
        return true;
    });
    if (records.empty())
        throw cxr::Error(cxr::ErrorCode::AllRecordsInvalid, "no usable records in " + path);
    if (skipped > 0)
        std::cerr << "skipped " << skipped << " malformed record(s) in " << path << '\n';
    return records;
}

int cmd_eval(const std::string& cand_path, const std::string& ref_path,
             const std::string& out_path, const std::string& format, bool per_class,
             bool count_empty_classes, const std::string& lexicon_dir) {
    log_config("eval", {{"candidates", cand_path}, {"references", ref_path},
                        {"out", out_path}, {"format", format},
                        {"per_class", per_class ? "true" : "false"},
                        {"count_empty_classes", count_empty_classes ? "true" : "false"},
                        {"lexicons", lexicon_dir}});
    const cxr::Lexicons lex = cxr::Lexicons::load(lexicon_dir);
    const auto cands = load_id_text(cand_path);
    const auto refs = load_id_text(ref_path);

    std::map<std::string, std::string> ref_by_id(refs.begin(), refs.end());
    if (cands.size() != ref_by_id.size())
        throw cxr::Error(cxr::ErrorCode::LengthMismatch,
                         std::to_string(cands.size()) + " candidates vs " +
                             std::to_string(ref_by_id.size()) + " references");

    std::vector<cxr::EvalPair> pairs;
    std::vector<cxr::LabelVector> cand_labels, ref_labels;
    for (const auto& [id, text] : cands) {
        const auto it = ref_by_id.find(id);
        if (it == ref_by_id.end())
            throw cxr::Error(cxr::ErrorCode::IdMismatch, "candidate '" + id + "' has no reference");
        pairs.push_back({id, cxr::tokenize(text), cxr::tokenize(it->second)});
        cand_labels.push_back(cxr::label_text(text, lex, id));
        ref_labels.push_back(cxr::label_text(it->second, lex, id));
    }

    const cxr::NlgScores nlg = cxr::evaluate_nlg(pairs);
    const cxr::ClinicalScores clinical =
        cxr::clinical_eval(cand_labels, ref_labels, count_empty_classes);

    json result;
    result["pairs"] = pairs.size();
    result["bleu_1"] = nlg.bleu[0];
    result["bleu_2"] = nlg.bleu[1];
    result["bleu_3"] = nlg.bleu[2];
    result["bleu_4"] = nlg.bleu[3];
    result["rouge_l"] = nlg.rouge_l;
    result["meteor"] = nlg.meteor;
    if (nlg.cider) result["cider"] = *nlg.cider;
    else result["cider"] = nullptr;
    result["precision"] = clinical.precision;
    result["recall"] = clinical.recall;
    result["macro_f1"] = clinical.macro_f1;
    if (per_class) {
        json pc;
        for (int c = 0; c < cxr::kCategoryCount; ++c) {
            const std::string& name = lex.categories.names[c];
            if (clinical.per_class[c]) pc[name] = *clinical.per_class[c];
            else pc[name] = nullptr;
        }
        result["per_class_f1"] = std::move(pc);
    }

    std::string content;
    if (format == "json") {
        content = result.dump(2) + "\n";
    } else if (format == "csv") {
        std::ostringstream header, row;
        bool first = true;
        for (const auto& [key, value] : result.items()) {
            if (key == "per_class_f1") continue;
            if (!first) { header << ','; row << ','; }
            first = false;
            header << key;
            row << (value.is_null() ? json("") : value).dump();
        }
        if (per_class) {
            for (const auto& [key, value] : result["per_class_f1"].items()) {
                header << ",f1:" << key;
                row << ',' << (value.is_null() ? json("") : value).dump();
            }
        }
        content = header.str() + "\n" + row.str() + "\n";
    } else {
        throw CLI::ValidationError("--format must be json or csv");
    }
    cxr::atomic_write(out_path, content);
    std::cerr << "evaluated " << pairs.size() << " pair(s)\n";
    return 0;
}

// ----------------------------------------------------------- ccve-synth ---

json image_to_json(const cxr::GrayImage& image) {
    json obj;
    obj["id"] = image.id;
    obj["height"] = image.height;
    obj["width"] = image.width;
    obj["pixels"] = image.pixels;
    return obj;
}

cxr::GrayImage image_from_json(const json& obj) {
    cxr::GrayImage image;
    image.id = obj.at("id").get<std::string>();
    image.height = obj.at("height").get<int>();
    image.width = obj.at("width").get<int>();
    image.pixels = obj.at("pixels").get<std::vector<double>>();
    if (image.height < 1 || image.width < 1 ||
        image.pixels.size() != static_cast<size_t>(image.height) * image.width)
        throw cxr::Error(cxr::ErrorCode::InvalidRecord,
                         "image '" + image.id + "' has inconsistent dimensions");
    return image;
}

int cmd_ccve_synth(int clusters, int per_cluster, int size, uint64_t seed,
                   const std::string& out_prefix) {
    log_config("ccve-synth", {{"clusters", std::to_string(clusters)},
                              {"per_cluster", std::to_string(per_cluster)},
                              {"size", std::to_string(size)},
                              {"seed", std::to_string(seed)},
                              {"out", out_prefix}});
    cxr::SynthConfig cfg;
    cfg.clusters = clusters;
    cfg.per_cluster = per_cluster;
    cfg.size = size;
    cfg.seed = seed;
    const cxr::SynthData data = cxr::synth_dataset(cfg);

    std::ostringstream images, reports, clusters_out;
    for (size_t i = 0; i < data.samples.size(); ++i) {
        const cxr::TrainSample& s = data.samples[i];
        images << image_to_json(s.image).dump() << '\n';
        json report;
        report["id"] = s.image.id;
        report["impression"] = data.impressions[i];
        reports << report.dump() << '\n';
        json cl;
        cl["id"] = s.image.id;
        cl["cluster"] = s.cluster;
        cl["cluster_name"] = cxr::cluster_names()[s.cluster];
        clusters_out << cl.dump() << '\n';
    }
    cxr::atomic_write(out_prefix + ".images.jsonl", images.str());
    cxr::atomic_write(out_prefix + ".reports.jsonl", reports.str());
    cxr::atomic_write(out_prefix + ".clusters.jsonl", clusters_out.str());
    std::cerr << "wrote " << data.samples.size() << " samples to " << out_prefix
              << ".{images,reports,clusters}.jsonl\n";
    return 0;
}

// ----------------------------------------------------------- ccve-train ---

struct CcveTrainArgs {
    std::string corpus, clusters, images, out, section = "impression_fallback";
    std::string history;
    cxr::CcveConfig cfg;
    cxr::TrainConfig train;
    bool cve = false;
};

int cmd_ccve_train(const CcveTrainArgs& args) {
    log_config("ccve-train",
               {{"corpus", args.corpus}, {"clusters", args.clusters}, {"images", args.images},
                {"out", args.out}, {"section", args.section},
                {"k", std::to_string(args.cve ? 1 : args.cfg.clusters)},
                {"filter_size", std::to_string(args.cfg.filter_size)},
                {"channels", std::to_string(args.cfg.channels)},
                {"embed_dim", std::to_string(args.cfg.embed_dim)},
                {"steps", std::to_string(args.train.steps)},
                {"batch_size", std::to_string(args.train.batch_size)},
                {"learning_rate", std::to_string(args.train.learning_rate)},
                {"seed", std::to_string(args.train.seed)},
                {"cve", args.cve ? "true" : "false"}});

    const cxr::SectionMode mode = cxr::parse_section_mode(args.section);
    const cxr::Corpus corpus = cxr::load_corpus(args.corpus);

    std::map<std::string, int> cluster_by_id;
    cxr::for_each_jsonl(args.clusters, [&](size_t, const json& obj) {
        if (!obj.contains("id") || !obj.contains("cluster")) return false;
        cluster_by_id[obj["id"].get<std::string>()] = obj["cluster"].get<int>();
        return true;
    });
    std::map<std::string, cxr::GrayImage> image_by_id;
    cxr::for_each_jsonl(args.images, [&](size_t, const json& obj) {
        cxr::GrayImage img = image_from_json(obj);
        image_by_id[img.id] = std::move(img);
        return true;
    });

    cxr::CcveConfig cfg = args.cfg;
    cxr::TrainConfig tc = args.train;
    if (args.cve) {
        cfg.clusters = 1;
        tc.freeze_filters = true;
    }

    std::set<std::string> vocab_set;
    std::vector<cxr::TrainSample> samples;
    size_t missing = 0;
    for (const cxr::Report& report : corpus.reports) {
        const auto cl = cluster_by_id.find(report.id);
        const auto img = image_by_id.find(report.id);
        if (cl == cluster_by_id.end() || img == image_by_id.end()) {
            ++missing;
            continue;
        }
        cxr::TrainSample sample;
        sample.image = img->second;
        sample.tokens = cxr::tokenize(cxr::effective_text(report, mode));
        sample.cluster = args.cve ? 0 : cl->second;
        if (sample.cluster < 0 || sample.cluster >= cfg.clusters)
            throw cxr::Error(cxr::ErrorCode::InvalidRecord,
                             "report '" + report.id + "' has cluster " +
                                 std::to_string(cl->second) + " outside 0.." +
                                 std::to_string(cfg.clusters - 1));
        for (const std::string& t : sample.tokens) vocab_set.insert(t);
        samples.push_back(std::move(sample));
    }
    if (samples.empty())
        throw cxr::Error(cxr::ErrorCode::EmptyInput,
                         "no report joined with both a cluster and an image");
    if (missing > 0)
        std::cerr << "skipped " << missing << " report(s) without cluster or image\n";

    cxr::CcveModel model = cxr::CcveModel::init(
        cfg, std::vector<std::string>(vocab_set.begin(), vocab_set.end()), tc.seed);
    const cxr::TrainResult result = cxr::train(model, samples, tc);
    cxr::save_model(model, args.out);

    if (!args.history.empty()) {
        json hist = result.loss_history;
        cxr::atomic_write(args.history, hist.dump() + "\n");
    }
    if (!result.loss_history.empty())
        std::cerr << "trained " << result.loss_history.size() << " step(s), first loss "
                  << result.loss_history.front() << ", final loss "
                  << result.loss_history.back() << '\n';
    return 0;
}

// ----------------------------------------------------------- ccve-embed ---

int cmd_ccve_embed(const std::string& model_path, const std::string& image_path,
                   const std::string& out_path) {
    log_config("ccve-embed",
               {{"model", model_path}, {"image", image_path}, {"out", out_path}});
    const cxr::CcveModel model = cxr::load_model(model_path);

    std::vector<cxr::GrayImage> images;
    cxr::for_each_jsonl(image_path, [&](size_t, const json& obj) {
        images.push_back(image_from_json(obj));
        return true;
    });
    if (images.empty())
        throw cxr::Error(cxr::ErrorCode::AllRecordsInvalid, "no images in " + image_path);

    std::ostringstream out;
    for (const cxr::GrayImage& image : images) {
        const cxr::Mat emb = cxr::embed_all(model, image);
        json obj;
        obj["id"] = image.id;
        obj["shape"] = {emb.rows, emb.cols};
        json rows = json::array();
        for (int r = 0; r < emb.rows; ++r) {
            json row = json::array();
            for (int c = 0; c < emb.cols; ++c) row.push_back(emb.at(r, c));
            rows.push_back(std::move(row));
        }
        obj["embedding"] = std::move(rows);
        if (images.size() == 1) {
            cxr::atomic_write(out_path, obj.dump(2) + "\n");
            std::cerr << "embedded 1 image as " << emb.rows << "x" << emb.cols << '\n';
            return 0;
        }
        out << obj.dump() << '\n';
    }
    cxr::atomic_write(out_path, out.str());
    std::cerr << "embedded " << images.size() << " images\n";
    return 0;
}

// ------------------------------------------------------------ gradcheck ---

cxr::CcveModel random_model(uint64_t seed) {
    cxr::CcveConfig cfg;
    cfg.clusters = 4;
    cfg.channels = 4;
    cfg.embed_dim = 8;
    cfg.text_dim = 8;
    std::vector<std::string> vocab;
    for (const std::string& name : cxr::cluster_names())
        for (const std::string& tok : cxr::tokenize(name)) vocab.push_back(tok);
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    return cxr::CcveModel::init(cfg, std::move(vocab), seed);
}

std::vector<cxr::TrainSample> random_batch(const cxr::CcveModel& model, int batch_size,
                                           uint64_t seed) {
    cxr::Rng rng(seed);
    const int side = std::max(10, model.cfg.filter_size + model.cfg.conv_size + 3);
    std::vector<cxr::TrainSample> batch;
    for (int i = 0; i < batch_size; ++i) {
        cxr::TrainSample s;
        s.cluster = static_cast<int>(rng.below(model.cfg.clusters));
        s.image.id = "rand-" + std::to_string(i);
        s.image.height = side;
        s.image.width = side;
        s.image.pixels.resize(static_cast<size_t>(side) * side);
        for (double& x : s.image.pixels) x = rng.uniform(0.0, 1.0);
        const int ntok = 1 + static_cast<int>(rng.below(3));
        for (int t = 0; t < ntok; ++t)
            s.tokens.push_back(model.vocab[rng.below(model.vocab.size())]);
        batch.push_back(std::move(s));
    }
    return batch;
}

int cmd_gradcheck(const std::string& model_path, uint64_t seed, double epsilon,
                  int batch_size, double tolerance) {
    log_config("gradcheck", {{"model", model_path.empty() ? "<random>" : model_path},
                             {"seed", std::to_string(seed)},
                             {"epsilon", std::to_string(epsilon)},
                             {"batch_size", std::to_string(batch_size)},
                             {"tolerance", std::to_string(tolerance)}});
    const cxr::CcveModel model =
        model_path.empty() ? random_model(seed) : cxr::load_model(model_path);
    const auto batch = random_batch(model, batch_size, seed + 1);
    const cxr::GradCheckResult result = cxr::grad_check(model, batch, epsilon);
    std::cout << "max relative error " << result.max_rel_error << " at "
              << (result.worst_param.empty() ? "<none>" : result.worst_param) << '\n';
    if (result.max_rel_error >= tolerance) {
        std::cerr << "gradient check FAILED\n";
        return 1;
    }
    std::cerr << "gradient check passed\n";
    return 0;
}

std::string version_string(const std::string& lexicon_dir) {
    std::string lexicon_version = "unavailable";
    try {
        lexicon_version = cxr::Lexicons::load(lexicon_dir).version;
    } catch (const cxr::Error&) {
    }
    return std::string("cxrkit ") + cxr::kVersion + " (lexicons " + lexicon_version + ")";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chest X-ray report labeling, clustering, evaluation and CCVE toolkit"};
    app.require_subcommand(1);

    std::string lexicon_flag;
    app.add_option("--lexicons", lexicon_flag,
                   "Lexicon directory (default: $CXRKIT_LEXICONS or built-in path)");

    app.set_version_flag("--version", [&lexicon_flag]() {
        return version_string(resolve_lexicon_dir(lexicon_flag));
    });

    // label
    auto* label = app.add_subcommand("label", "Label reports with the 14 categories");
    std::string label_corpus, label_section = "findings", label_out;
    label->add_option("--corpus", label_corpus, "Input reports JSONL")->required();
    label->add_option("--section", label_section, "findings|impression|impression_fallback")
        ->check(CLI::IsMember({"findings", "impression", "impression_fallback"}));
    label->add_option("--out", label_out, "Output JSONL")->required();

    // vocab
    auto* vocab = app.add_subcommand("vocab", "Build the fine-grained label vocabulary");
    std::string vocab_corpus, vocab_out;
    long vocab_threshold = 100;
    vocab->add_option("--corpus", vocab_corpus, "Input reports JSONL")->required();
    vocab->add_option("--threshold", vocab_threshold, "Minimum corpus count (default 100)")
        ->check(CLI::PositiveNumber);
    vocab->add_option("--out", vocab_out, "Output TSV")->required();

    // cluster
    auto* cluster = app.add_subcommand("cluster", "Assign impressions to the 13 clusters");
    std::string cluster_corpus, cluster_out;
    bool no_uncertain_fallback = false;
    cluster->add_option("--corpus", cluster_corpus, "Input reports JSONL")->required();
    cluster->add_option("--out", cluster_out, "Output JSONL")->required();
    cluster->add_flag("--no-uncertain-fallback", no_uncertain_fallback,
                      "Send uncertain-only impressions to No Finding");

    // eval
    auto* eval = app.add_subcommand("eval", "NLG + clinical metrics for generated reports");
    std::string eval_cands, eval_refs, eval_out, eval_format = "json";
    bool eval_per_class = false;
    eval->add_option("--candidates", eval_cands, "Candidate reports JSONL")->required();
    eval->add_option("--references", eval_refs, "Reference reports JSONL")->required();
    eval->add_option("--out", eval_out, "Output file")->required();
    eval->add_option("--format", eval_format, "json|csv")
        ->check(CLI::IsMember({"json", "csv"}));
    eval->add_flag("--per-class", eval_per_class, "Include per-class F1 breakdown");
    bool eval_count_empty = false;
    eval->add_flag("--count-empty-classes", eval_count_empty,
                   "Score zero-support classes as 0 instead of excluding them");

    // ccve-synth
    auto* synth = app.add_subcommand("ccve-synth", "Generate the planted-pattern dataset");
    int synth_clusters = 13, synth_per_cluster = 50, synth_size = 16;
    uint64_t synth_seed = 7;
    std::string synth_out;
    synth->add_option("--clusters", synth_clusters, "Cluster count (default 13)");
    synth->add_option("--per-cluster", synth_per_cluster, "Images per cluster");
    synth->add_option("--size", synth_size, "Image side length");
    synth->add_option("--seed", synth_seed, "RNG seed")->required();
    synth->add_option("--out", synth_out, "Output file prefix")->required();

    // ccve-train
    auto* ctrain = app.add_subcommand("ccve-train", "Train the cluster CLIP visual encoder");
    CcveTrainArgs targs;
    ctrain->add_option("--corpus", targs.corpus, "Reports JSONL")->required();
    ctrain->add_option("--clusters", targs.clusters, "Cluster assignments JSONL")->required();
    ctrain->add_option("--images", targs.images, "Images JSONL")->required();
    ctrain->add_option("--out", targs.out, "Output model file")->required();
    ctrain->add_option("--section", targs.section, "Text section mode");
    ctrain->add_option("--history", targs.history, "Optional loss history JSON");
    ctrain->add_option("--k", targs.cfg.clusters, "Filter count (default 13)");
    ctrain->add_option("--filter-size", targs.cfg.filter_size, "Cluster filter size");
    ctrain->add_option("--channels", targs.cfg.channels, "Shared conv channels");
    ctrain->add_option("--conv-size", targs.cfg.conv_size, "Shared conv kernel size");
    ctrain->add_option("--embed-dim", targs.cfg.embed_dim, "Shared embedding dimension");
    ctrain->add_option("--text-dim", targs.cfg.text_dim, "Token embedding width");
    ctrain->add_option("--steps", targs.train.steps, "Training steps");
    ctrain->add_option("--batch-size", targs.train.batch_size, "Mini-batch size");
    ctrain->add_option("--learning-rate", targs.train.learning_rate, "Learning rate");
    ctrain->add_option("--seed", targs.train.seed, "RNG seed")->required();
    ctrain->add_flag("--cve", targs.cve, "CVE baseline: K=1, frozen identity filter");

    // ccve-embed
    auto* cembed = app.add_subcommand("ccve-embed", "K x d embeddings for images");
    std::string embed_model, embed_image, embed_out;
    cembed->add_option("--model", embed_model, "Model file")->required();
    cembed->add_option("--image", embed_image, "Images JSONL")->required();
    cembed->add_option("--out", embed_out, "Output JSON")->required();

    // gradcheck
    auto* gcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::string gc_model;
    uint64_t gc_seed = 1;
    double gc_eps = 1e-5;
    int gc_batch = 4;
    gcheck->add_option("--model", gc_model, "Model file (random tiny model when omitted)");
    gcheck->add_option("--seed", gc_seed, "RNG seed")->required();
    gcheck->add_option("--eps", gc_eps, "Finite-difference step");
    gcheck->add_option("--batch-size", gc_batch, "Synthetic batch size");
    double gc_tolerance = 1e-4;
    gcheck->add_option("--tolerance", gc_tolerance,
                       "Maximum accepted relative error (default 1e-4)");

    // Global options like --lexicons stay usable after a subcommand name.
    for (CLI::App* sub : {label, vocab, cluster, eval, synth, ctrain, cembed, gcheck})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        std::cout << e.what() << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n' << app.help();
        return 2;
    }

    const std::string lexicon_dir = resolve_lexicon_dir(lexicon_flag);
    try {
        if (app.got_subcommand(label))
            return cmd_label(label_corpus, label_section, label_out, lexicon_dir);
        if (app.got_subcommand(vocab))
            return cmd_vocab(vocab_corpus, vocab_threshold, vocab_out, lexicon_dir);
        if (app.got_subcommand(cluster))
            return cmd_cluster(cluster_corpus, cluster_out, lexicon_dir, no_uncertain_fallback);
        if (app.got_subcommand(eval))
            return cmd_eval(eval_cands, eval_refs, eval_out, eval_format, eval_per_class,
                            eval_count_empty, lexicon_dir);
        if (app.got_subcommand(synth))
            return cmd_ccve_synth(synth_clusters, synth_per_cluster, synth_size, synth_seed,
                                  synth_out);
        if (app.got_subcommand(ctrain)) return cmd_ccve_train(targs);
        if (app.got_subcommand(cembed)) return cmd_ccve_embed(embed_model, embed_image, embed_out);
        if (app.got_subcommand(gcheck))
            return cmd_gradcheck(gc_model, gc_seed, gc_eps, gc_batch, gc_tolerance);
    } catch (const cxr::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
