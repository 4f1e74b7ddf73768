#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxr/textproc.hpp"

namespace cxr {

// Row-major dense matrix of doubles; all the linear algebra here is small
// enough that hand-rolled loops stay the clearest option.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

using Vec = std::vector<double>;

// Deterministic across platforms: draws come straight from mt19937_64.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    double uniform(double lo, double hi) {
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    // Uniform in [0, n); modulo bias is irrelevant at these sizes.
    size_t below(size_t n) { return static_cast<size_t>(gen_() % n); }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

struct GrayImage {
    std::string id;
    int height = 0;
    int width = 0;
    std::vector<double> pixels; // row-major, values in [0, 1]

    double& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
};

struct CcveConfig {
    int clusters = 13;   // K, one filter per cluster
    int filter_size = 3; // c
    int channels = 8;    // m, shared conv output channels
    int conv_size = 3;   // shared conv kernel size
    int embed_dim = 16;  // d, shared embedding dimension
    int text_dim = 16;   // token embedding width
};

// Every trainable value. Gradients reuse the same shape.
struct CcveParams {
    std::vector<Mat> filters; // K of filter_size x filter_size
    std::vector<Mat> conv_w;  // channels of conv_size x conv_size
    Vec conv_b;               // channels
    Mat vis_proj;             // embed_dim x channels
    Vec vis_bias;             // embed_dim
    Mat tok_embed;            // vocab x text_dim
    Mat txt_proj;             // embed_dim x text_dim
    Vec txt_bias;             // embed_dim
    double log_inv_tau = 0.0; // similarity scale = exp(log_inv_tau)
};

struct CcveModel {
    CcveConfig cfg;
    std::vector<std::string> vocab;
    std::unordered_map<std::string, int> vocab_index;
    CcveParams p;

    double inv_tau() const;

    // Delta-plus-noise filters so the clusters start near identity but not
    // symmetric; everything else small uniform.
    static CcveModel init(const CcveConfig& cfg, std::vector<std::string> vocab, uint64_t seed);
};

struct TrainSample {
    GrayImage image;
    TokenSeq tokens;
    int cluster = 0; // selects the filter
};

struct TrainConfig {
    long steps = 2000;
    int batch_size = 16;
    double learning_rate = 0.5;
    uint64_t seed = 1;
    bool freeze_filters = false; // CVE baseline: identity filter stays fixed
};

// Valid cross-correlation, stride 1, no padding.
Mat conv2d_valid(const GrayImage& image, const Mat& kernel);
Mat conv2d_valid(const Mat& image, const Mat& kernel);

// Filter k -> shared conv + relu -> global mean pool -> projection -> L2
// normalize.
Vec encode_image(const CcveModel& model, const GrayImage& image, int k);

// Mean token embedding -> projection -> L2 normalize. Unknown tokens are
// dropped first.
Vec encode_text(const CcveModel& model, const TokenSeq& tokens);

// Symmetric InfoNCE over the inv_tau-scaled similarity matrix, diagonal
// targets, mean over rows and columns.
double clip_loss(const Mat& image_emb, const Mat& text_emb, double inv_tau);

double batch_loss(const CcveModel& model, std::span<const TrainSample> batch);

struct BackwardResult {
    double loss = 0.0;
    CcveParams grads;
};

// Exact gradients of batch_loss for every parameter, including
// log_inv_tau. Filters unused by the batch get exactly zero gradient.
BackwardResult backward(const CcveModel& model, std::span<const TrainSample> batch);

struct TrainResult {
    std::vector<double> loss_history; // one entry per step
};

// Plain gradient descent, deterministic for a fixed seed. Throws Divergence
// when the loss stops being finite.
TrainResult train(CcveModel& model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& config);

// Row k = encode_image(model, image, k); shape clusters x embed_dim.
Mat embed_all(const CcveModel& model, const GrayImage& image);

// Flat parameter access in a fixed order, for optimizer and gradient checks.
std::vector<double*> param_ptrs(CcveParams& p);
std::string param_name(const CcveParams& p, size_t index);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
};

// Central finite differences against the given analytic gradients; entries
// where both sides are below 1e-8 are skipped.
GradCheckResult grad_check_against(const CcveModel& model, std::span<const TrainSample> batch,
                                   double epsilon, const CcveParams& grads);
GradCheckResult grad_check(const CcveModel& model, std::span<const TrainSample> batch,
                           double epsilon);

void save_model(const CcveModel& model, const std::string& path);
CcveModel load_model(const std::string& path);

// Planted-pattern synthetic data: one position-coded bright block per
// cluster plus pixel noise; impressions are the cluster names.
struct SynthConfig {
    int clusters = 13;
    int per_cluster = 50;
    int size = 16;
    uint64_t seed = 7;
};

struct SynthData {
    std::vector<TrainSample> samples;
    std::vector<std::string> impressions; // raw text per sample
    std::vector<std::string> vocab;       // sorted token vocabulary
};

SynthData synth_dataset(const SynthConfig& cfg);

// Top-1 retrieval over shuffled batches, both directions. A prediction is
// correct when the retrieved item carries the same impression tokens, so
// duplicate texts never count against the model.
double retrieval_accuracy(const CcveModel& model, const std::vector<TrainSample>& samples,
                          int batch_size, uint64_t shuffle_seed);

// Mean silhouette over Euclidean distances; points are rows.
double silhouette_score(const Mat& points, const std::vector<int>& labels);

} // namespace cxr
