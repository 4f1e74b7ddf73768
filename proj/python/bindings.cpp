#include <algorithm>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cxr/ccve.hpp"
#include "cxr/clinical_metrics.hpp"
#include "cxr/cluster.hpp"
#include "cxr/corpus.hpp"
#include "cxr/errors.hpp"
#include "cxr/labeler.hpp"
#include "cxr/nlg_metrics.hpp"
#include "cxr/textproc.hpp"
#include "cxr/version.hpp"

namespace py = pybind11;

namespace {

py::dict report_to_dict(const cxr::Report& report) {
    py::dict d;
    d["id"] = report.id;
    if (report.background) d["background"] = *report.background;
    if (report.findings) d["findings"] = *report.findings;
    if (report.impression) d["impression"] = *report.impression;
    return d;
}

cxr::GrayImage image_from_rows(const std::vector<std::vector<double>>& rows,
                               const std::string& id) {
    cxr::GrayImage image;
    image.id = id;
    image.height = static_cast<int>(rows.size());
    image.width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != image.width)
            throw cxr::Error(cxr::ErrorCode::KernelTooLarge, "ragged image rows");
        image.pixels.insert(image.pixels.end(), row.begin(), row.end());
    }
    return image;
}

std::vector<std::vector<double>> mat_to_rows(const cxr::Mat& m) {
    std::vector<std::vector<double>> rows(m.rows, std::vector<double>(m.cols));
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) rows[r][c] = m.at(r, c);
    return rows;
}

py::dict evaluate_corpus(const std::vector<std::string>& candidates,
                         const std::vector<std::string>& references,
                         const cxr::Lexicons& lexicons) {
    if (candidates.size() != references.size())
        throw cxr::Error(cxr::ErrorCode::LengthMismatch, "candidates vs references");
    std::vector<cxr::EvalPair> pairs;
    std::vector<cxr::LabelVector> cand_labels, ref_labels;
    for (size_t i = 0; i < candidates.size(); ++i) {
        const std::string id = std::to_string(i);
        pairs.push_back({id, cxr::tokenize(candidates[i]), cxr::tokenize(references[i])});
        cand_labels.push_back(cxr::label_text(candidates[i], lexicons, id));
        ref_labels.push_back(cxr::label_text(references[i], lexicons, id));
    }
    const cxr::NlgScores nlg = cxr::evaluate_nlg(pairs);
    const cxr::ClinicalScores clinical = cxr::clinical_eval(cand_labels, ref_labels);

    py::dict d;
    d["bleu_1"] = nlg.bleu[0];
    d["bleu_2"] = nlg.bleu[1];
    d["bleu_3"] = nlg.bleu[2];
    d["bleu_4"] = nlg.bleu[3];
    d["rouge_l"] = nlg.rouge_l;
    d["meteor"] = nlg.meteor;
    d["cider"] = nlg.cider ? py::cast(*nlg.cider) : py::none();
    d["precision"] = clinical.precision;
    d["recall"] = clinical.recall;
    d["macro_f1"] = clinical.macro_f1;
    return d;
}

} // namespace

PYBIND11_MODULE(cxrkit, m) {
    m.doc() = "Radiology report labeling, clustering, NLG/clinical metrics and the "
              "cluster CLIP visual encoder";
    m.attr("__version__") = cxr::kVersion;

    py::register_exception<cxr::Error>(m, "CxrError");

    // text primitives
    m.def("tokenize", &cxr::tokenize, py::arg("text"));
    m.def("split_sentences", &cxr::split_sentences, py::arg("text"));
    m.def("stem", &cxr::stem, py::arg("token"));
    m.def("lcs_length", &cxr::lcs_length, py::arg("a"), py::arg("b"));
    m.def(
        "ngrams",
        [](const cxr::TokenSeq& seq, int n) { return cxr::ngrams(seq, n).counts; },
        py::arg("tokens"), py::arg("n"));

    // corpus
    m.def(
        "parse_report",
        [](const std::string& raw, const std::string& id) {
            return report_to_dict(cxr::parse_report(raw, id));
        },
        py::arg("raw"), py::arg("id"));

    // labeling
    py::class_<cxr::Lexicons>(m, "Lexicons")
        .def_static("load", &cxr::Lexicons::load, py::arg("directory"))
        .def_property_readonly("version", [](const cxr::Lexicons& l) { return l.version; })
        .def_property_readonly("categories",
                               [](const cxr::Lexicons& l) { return l.categories.names; });

    m.def(
        "label_text",
        [](const std::string& text, const cxr::Lexicons& lex) {
            std::vector<std::string> states;
            for (const cxr::LabelState s : cxr::label_text(text, lex).states)
                states.emplace_back(cxr::label_state_name(s));
            return states;
        },
        py::arg("text"), py::arg("lexicons"));
    m.def(
        "fine_labels",
        [](const std::string& text, const cxr::Lexicons& lex) {
            cxr::Report report;
            report.id = "inline";
            report.findings = text;
            std::vector<std::string> out;
            for (const cxr::FineLabel& fl :
                 cxr::extract_fine_grained(report, cxr::SectionMode::Findings, lex))
                out.push_back(fl.surface);
            return out;
        },
        py::arg("text"), py::arg("lexicons"));

    m.def("cluster_names", []() { return cxr::cluster_names(); });

    // metrics
    m.def("evaluate", &evaluate_corpus, py::arg("candidates"), py::arg("references"),
          py::arg("lexicons"));

    // ccve
    py::class_<cxr::SynthData>(m, "SynthData")
        .def_property_readonly("size",
                               [](const cxr::SynthData& d) { return d.samples.size(); })
        .def_property_readonly("impressions",
                               [](const cxr::SynthData& d) { return d.impressions; })
        .def("cluster_of", [](const cxr::SynthData& d, size_t i) {
            return d.samples.at(i).cluster;
        });

    m.def(
        "synth_dataset",
        [](int clusters, int per_cluster, int size, uint64_t seed) {
            cxr::SynthConfig cfg;
            cfg.clusters = clusters;
            cfg.per_cluster = per_cluster;
            cfg.size = size;
            cfg.seed = seed;
            return cxr::synth_dataset(cfg);
        },
        py::arg("clusters") = 13, py::arg("per_cluster") = 50, py::arg("size") = 16,
        py::arg("seed") = 7);

    py::class_<cxr::CcveModel>(m, "CcveModel")
        .def_property_readonly("clusters",
                               [](const cxr::CcveModel& m_) { return m_.cfg.clusters; })
        .def_property_readonly("embed_dim",
                               [](const cxr::CcveModel& m_) { return m_.cfg.embed_dim; })
        .def_property_readonly("vocab", [](const cxr::CcveModel& m_) { return m_.vocab; })
        .def(
            "encode_image",
            [](const cxr::CcveModel& m_, const std::vector<std::vector<double>>& rows, int k) {
                return cxr::encode_image(m_, image_from_rows(rows, "py"), k);
            },
            py::arg("image"), py::arg("cluster"))
        .def(
            "encode_text",
            [](const cxr::CcveModel& m_, const cxr::TokenSeq& tokens) {
                return cxr::encode_text(m_, tokens);
            },
            py::arg("tokens"))
        .def(
            "embed_all",
            [](const cxr::CcveModel& m_, const std::vector<std::vector<double>>& rows) {
                return mat_to_rows(cxr::embed_all(m_, image_from_rows(rows, "py")));
            },
            py::arg("image"))
        .def("save", &cxr::save_model, py::arg("path"))
        .def_static("load", &cxr::load_model, py::arg("path"));

    m.def(
        "train_synth",
        [](const cxr::SynthData& data, long steps, int batch_size, double learning_rate,
           uint64_t seed, bool cve) {
            int max_cluster = 0;
            for (const cxr::TrainSample& s : data.samples)
                max_cluster = std::max(max_cluster, s.cluster);
            cxr::CcveConfig cfg;
            cfg.clusters = cve ? 1 : max_cluster + 1;
            std::vector<cxr::TrainSample> samples = data.samples;
            if (cve)
                for (cxr::TrainSample& s : samples) s.cluster = 0;
            cxr::CcveModel model = cxr::CcveModel::init(cfg, data.vocab, seed);
            cxr::TrainConfig tc;
            tc.steps = steps;
            tc.batch_size = batch_size;
            tc.learning_rate = learning_rate;
            tc.seed = seed;
            tc.freeze_filters = cve;
            cxr::train(model, samples, tc);
            return model;
        },
        py::arg("data"), py::arg("steps") = 300, py::arg("batch_size") = 16,
        py::arg("learning_rate") = 0.5, py::arg("seed") = 1, py::arg("cve") = false);

    m.def(
        "retrieval_accuracy",
        [](const cxr::CcveModel& model, const cxr::SynthData& data, int batch_size,
           uint64_t seed) {
            return cxr::retrieval_accuracy(model, data.samples, batch_size, seed);
        },
        py::arg("model"), py::arg("data"), py::arg("batch_size") = 16, py::arg("seed") = 99);

    m.def(
        "grad_check_synth",
        [](int batch_size, uint64_t seed, double epsilon) {
            cxr::SynthConfig scfg;
            scfg.clusters = 4;
            scfg.per_cluster = 2;
            scfg.size = 10;
            scfg.seed = seed;
            const cxr::SynthData data = cxr::synth_dataset(scfg);
            cxr::CcveConfig cfg;
            cfg.clusters = 4;
            cfg.channels = 4;
            cfg.embed_dim = 8;
            cfg.text_dim = 8;
            const cxr::CcveModel model = cxr::CcveModel::init(cfg, data.vocab, seed);
            std::vector<cxr::TrainSample> batch(
                data.samples.begin(),
                data.samples.begin() + std::min<size_t>(batch_size, data.samples.size()));
            const cxr::GradCheckResult r = cxr::grad_check(model, batch, epsilon);
            return py::make_tuple(r.max_rel_error, r.worst_param);
        },
        py::arg("batch_size") = 4, py::arg("seed") = 5, py::arg("epsilon") = 1e-5);
}
