#include "cxr/ccve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cxr/cluster.hpp"
#include "cxr/errors.hpp"
#include "cxr/jsonl.hpp"

namespace cxr {

namespace {

constexpr double kZeroNormFloor = 1e-12;
constexpr double kMaxInvTau = 200.0;

double l2_norm(const Vec& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

Vec normalized(const Vec& v, const char* what) {
    const double n = l2_norm(v);
    if (n < kZeroNormFloor)
        throw Error(ErrorCode::ZeroNorm, std::string(what) + " collapsed to zero norm");
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Mat conv_valid_impl(const double* img, int h, int w, const Mat& kernel) {
    if (kernel.rows > h || kernel.cols > w)
        throw Error(ErrorCode::KernelTooLarge,
                    std::to_string(kernel.rows) + "x" + std::to_string(kernel.cols) +
                        " kernel on " + std::to_string(h) + "x" + std::to_string(w) + " input");
    Mat out(h - kernel.rows + 1, w - kernel.cols + 1);
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            double acc = 0.0;
            for (int a = 0; a < kernel.rows; ++a)
                for (int b = 0; b < kernel.cols; ++b)
                    acc += img[static_cast<size_t>(r + a) * w + (c + b)] * kernel.at(a, b);
            out.at(r, c) = acc;
        }
    }
    return out;
}

// Everything backward needs from one sample's forward pass.
struct VisualTrace {
    Mat filtered;             // after the cluster filter
    std::vector<Mat> pre_act; // per channel, before relu
    Vec pooled;               // per-channel global mean
    Vec z;                    // projection output, pre-normalization
    double norm = 0.0;
    Vec emb;
};

struct TextTrace {
    std::vector<int> rows; // embedding rows used, with multiplicity
    Vec mean_emb;
    Vec z;
    double norm = 0.0;
    Vec emb;
};

VisualTrace visual_forward(const CcveModel& model, const GrayImage& image, int k) {
    if (k < 0 || k >= model.cfg.clusters)
        throw Error(ErrorCode::KernelTooLarge,
                    "cluster " + std::to_string(k) + " out of range for K=" +
                        std::to_string(model.cfg.clusters));
    VisualTrace t;
    t.filtered = conv2d_valid(image, model.p.filters[k]);

    const int m = model.cfg.channels;
    t.pre_act.resize(m);
    t.pooled.assign(m, 0.0);
    for (int j = 0; j < m; ++j) {
        Mat u = conv_valid_impl(t.filtered.v.data(), t.filtered.rows, t.filtered.cols,
                                model.p.conv_w[j]);
        double sum = 0.0;
        for (double& x : u.v) {
            x += model.p.conv_b[j];
            sum += std::max(0.0, x);
        }
        t.pooled[j] = sum / static_cast<double>(u.v.size());
        t.pre_act[j] = std::move(u);
    }

    const int d = model.cfg.embed_dim;
    t.z.assign(d, 0.0);
    for (int i = 0; i < d; ++i) {
        double acc = model.p.vis_bias[i];
        for (int j = 0; j < m; ++j) acc += model.p.vis_proj.at(i, j) * t.pooled[j];
        t.z[i] = acc;
    }
    t.norm = l2_norm(t.z);
    t.emb = normalized(t.z, "image embedding");
    return t;
}

TextTrace text_forward(const CcveModel& model, const TokenSeq& tokens) {
    TextTrace t;
    for (const std::string& tok : tokens) {
        const auto it = model.vocab_index.find(tok);
        if (it != model.vocab_index.end()) t.rows.push_back(it->second);
    }
    if (t.rows.empty())
        throw Error(ErrorCode::EmptyText, "no in-vocabulary tokens to encode");

    const int dt = model.cfg.text_dim;
    t.mean_emb.assign(dt, 0.0);
    for (int row : t.rows)
        for (int i = 0; i < dt; ++i) t.mean_emb[i] += model.p.tok_embed.at(row, i);
    for (double& x : t.mean_emb) x /= static_cast<double>(t.rows.size());

    const int d = model.cfg.embed_dim;
    t.z.assign(d, 0.0);
    for (int i = 0; i < d; ++i) {
        double acc = model.p.txt_bias[i];
        for (int j = 0; j < dt; ++j) acc += model.p.txt_proj.at(i, j) * t.mean_emb[j];
        t.z[i] = acc;
    }
    t.norm = l2_norm(t.z);
    t.emb = normalized(t.z, "text embedding");
    return t;
}

// d(loss)/dz for z -> z/||z||, given the gradient at the unit vector.
Vec normalize_backward(const Vec& emb, double norm, const Vec& grad_emb) {
    double dot = 0.0;
    for (size_t i = 0; i < emb.size(); ++i) dot += grad_emb[i] * emb[i];
    Vec out(emb.size());
    for (size_t i = 0; i < emb.size(); ++i) out[i] = (grad_emb[i] - dot * emb[i]) / norm;
    return out;
}

CcveParams zero_like(const CcveModel& model) {
    CcveParams g;
    const CcveConfig& c = model.cfg;
    g.filters.assign(c.clusters, Mat(c.filter_size, c.filter_size));
    g.conv_w.assign(c.channels, Mat(c.conv_size, c.conv_size));
    g.conv_b.assign(c.channels, 0.0);
    g.vis_proj = Mat(c.embed_dim, c.channels);
    g.vis_bias.assign(c.embed_dim, 0.0);
    g.tok_embed = Mat(static_cast<int>(model.vocab.size()), c.text_dim);
    g.txt_proj = Mat(c.embed_dim, c.text_dim);
    g.txt_bias.assign(c.embed_dim, 0.0);
    g.log_inv_tau = 0.0;
    return g;
}

// Row-wise softmax cross-entropy with diagonal targets, averaged over rows;
// returns the loss and accumulates dL/dS into grad_s scaled by `weight`.
double softmax_ce_rows(const Mat& s, Mat* grad_s, double weight) {
    double loss = 0.0;
    const int b = s.rows;
    for (int i = 0; i < b; ++i) {
        double mx = s.at(i, 0);
        for (int j = 1; j < b; ++j) mx = std::max(mx, s.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < b; ++j) sum += std::exp(s.at(i, j) - mx);
        loss += -(s.at(i, i) - mx) + std::log(sum);
        if (grad_s) {
            for (int j = 0; j < b; ++j) {
                const double p = std::exp(s.at(i, j) - mx) / sum;
                grad_s->at(i, j) += weight * (p - (i == j ? 1.0 : 0.0)) / b;
            }
        }
    }
    return loss / b;
}

double clip_loss_impl(const Mat& z, const Mat& t, double inv_tau, Mat* grad_s) {
    Mat s(z.rows, z.rows);
    for (int i = 0; i < z.rows; ++i)
        for (int j = 0; j < z.rows; ++j) {
            double dot = 0.0;
            for (int c = 0; c < z.cols; ++c) dot += z.at(i, c) * t.at(j, c);
            s.at(i, j) = inv_tau * dot;
        }

    Mat st(s.cols, s.rows);
    for (int i = 0; i < s.rows; ++i)
        for (int j = 0; j < s.cols; ++j) st.at(j, i) = s.at(i, j);

    Mat grad_st;
    if (grad_s) {
        *grad_s = Mat(s.rows, s.cols);
        grad_st = Mat(s.cols, s.rows);
    }
    const double row_loss = softmax_ce_rows(s, grad_s, 0.5);
    const double col_loss = softmax_ce_rows(st, grad_s ? &grad_st : nullptr, 0.5);
    if (grad_s) {
        for (int i = 0; i < s.rows; ++i)
            for (int j = 0; j < s.cols; ++j) grad_s->at(i, j) += grad_st.at(j, i);
    }
    return 0.5 * (row_loss + col_loss);
}

} // namespace

double CcveModel::inv_tau() const { return std::exp(p.log_inv_tau); }

CcveModel CcveModel::init(const CcveConfig& cfg, std::vector<std::string> vocab, uint64_t seed) {
    CcveModel model;
    model.cfg = cfg;
    model.vocab = std::move(vocab);
    for (size_t i = 0; i < model.vocab.size(); ++i)
        model.vocab_index[model.vocab[i]] = static_cast<int>(i);

    Rng rng(seed);
    model.p = zero_like(model);

    const int center = cfg.filter_size / 2;
    for (Mat& f : model.p.filters) {
        for (double& x : f.v) x = rng.uniform(-0.05, 0.05);
        f.at(center, center) += 1.0;
    }
    const double conv_r = 1.0 / cfg.conv_size;
    for (Mat& w : model.p.conv_w)
        for (double& x : w.v) x = rng.uniform(-conv_r, conv_r);
    for (double& x : model.p.conv_b) x = rng.uniform(0.0, 0.1);
    const double vis_r = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
    for (double& x : model.p.vis_proj.v) x = rng.uniform(-vis_r, vis_r);
    for (double& x : model.p.tok_embed.v) x = rng.uniform(-0.5, 0.5);
    const double txt_r = 1.0 / std::sqrt(static_cast<double>(cfg.text_dim));
    for (double& x : model.p.txt_proj.v) x = rng.uniform(-txt_r, txt_r);
    model.p.log_inv_tau = std::log(1.0 / 0.07);
    return model;
}

Mat conv2d_valid(const GrayImage& image, const Mat& kernel) {
    return conv_valid_impl(image.pixels.data(), image.height, image.width, kernel);
}

Mat conv2d_valid(const Mat& image, const Mat& kernel) {
    return conv_valid_impl(image.v.data(), image.rows, image.cols, kernel);
}

Vec encode_image(const CcveModel& model, const GrayImage& image, int k) {
    return visual_forward(model, image, k).emb;
}

Vec encode_text(const CcveModel& model, const TokenSeq& tokens) {
    return text_forward(model, tokens).emb;
}

double clip_loss(const Mat& image_emb, const Mat& text_emb, double inv_tau) {
    return clip_loss_impl(image_emb, text_emb, inv_tau, nullptr);
}

double batch_loss(const CcveModel& model, std::span<const TrainSample> batch) {
    const int b = static_cast<int>(batch.size());
    Mat z(b, model.cfg.embed_dim), t(b, model.cfg.embed_dim);
    for (int i = 0; i < b; ++i) {
        const Vec zi = encode_image(model, batch[i].image, batch[i].cluster);
        const Vec ti = encode_text(model, batch[i].tokens);
        for (int c = 0; c < model.cfg.embed_dim; ++c) {
            z.at(i, c) = zi[c];
            t.at(i, c) = ti[c];
        }
    }
    return clip_loss_impl(z, t, model.inv_tau(), nullptr);
}

BackwardResult backward(const CcveModel& model, std::span<const TrainSample> batch) {
    const int b = static_cast<int>(batch.size());
    const int d = model.cfg.embed_dim;
    const int m = model.cfg.channels;

    std::vector<VisualTrace> vis(b);
    std::vector<TextTrace> txt(b);
    Mat z(b, d), t(b, d);
    for (int i = 0; i < b; ++i) {
        vis[i] = visual_forward(model, batch[i].image, batch[i].cluster);
        txt[i] = text_forward(model, batch[i].tokens);
        for (int c = 0; c < d; ++c) {
            z.at(i, c) = vis[i].emb[c];
            t.at(i, c) = txt[i].emb[c];
        }
    }

    const double inv_tau = model.inv_tau();
    Mat grad_s;
    BackwardResult result;
    result.loss = clip_loss_impl(z, t, inv_tau, &grad_s);
    result.grads = zero_like(model);
    CcveParams& g = result.grads;

    // S = inv_tau * Z T^T: split dL/dS into the embedding gradients and the
    // temperature gradient.
    Mat grad_z(b, d), grad_t(b, d);
    double grad_inv_tau = 0.0;
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            const double gs = grad_s.at(i, j);
            if (gs == 0.0) continue;
            double dot = 0.0;
            for (int c = 0; c < d; ++c) {
                grad_z.at(i, c) += gs * inv_tau * t.at(j, c);
                grad_t.at(j, c) += gs * inv_tau * z.at(i, c);
                dot += z.at(i, c) * t.at(j, c);
            }
            grad_inv_tau += gs * dot;
        }
    }
    g.log_inv_tau = grad_inv_tau * inv_tau;

    for (int i = 0; i < b; ++i) {
        // ----- visual path -----
        const VisualTrace& v = vis[i];
        Vec ge(d);
        for (int c = 0; c < d; ++c) ge[c] = grad_z.at(i, c);
        const Vec gz = normalize_backward(v.emb, v.norm, ge);

        Vec gpooled(m, 0.0);
        for (int r = 0; r < d; ++r) {
            g.vis_bias[r] += gz[r];
            for (int j = 0; j < m; ++j) {
                g.vis_proj.at(r, j) += gz[r] * v.pooled[j];
                gpooled[j] += model.p.vis_proj.at(r, j) * gz[r];
            }
        }

        Mat gy(v.filtered.rows, v.filtered.cols);
        for (int j = 0; j < m; ++j) {
            const Mat& u = v.pre_act[j];
            const double scale = gpooled[j] / static_cast<double>(u.v.size());
            const Mat& w = model.p.conv_w[j];
            for (int r = 0; r < u.rows; ++r) {
                for (int c = 0; c < u.cols; ++c) {
                    if (u.at(r, c) <= 0.0) continue;
                    g.conv_b[j] += scale;
                    for (int a = 0; a < w.rows; ++a)
                        for (int bb = 0; bb < w.cols; ++bb) {
                            g.conv_w[j].at(a, bb) += scale * v.filtered.at(r + a, c + bb);
                            gy.at(r + a, c + bb) += scale * w.at(a, bb);
                        }
                }
            }
        }

        const int k = batch[i].cluster;
        Mat& gf = g.filters[k];
        const GrayImage& img = batch[i].image;
        for (int r = 0; r < gy.rows; ++r)
            for (int c = 0; c < gy.cols; ++c) {
                const double val = gy.at(r, c);
                if (val == 0.0) continue;
                for (int a = 0; a < gf.rows; ++a)
                    for (int bb = 0; bb < gf.cols; ++bb)
                        gf.at(a, bb) += val * img.at(r + a, c + bb);
            }

        // ----- text path -----
        const TextTrace& tt = txt[i];
        for (int c = 0; c < d; ++c) ge[c] = grad_t.at(i, c);
        const Vec gzt = normalize_backward(tt.emb, tt.norm, ge);

        const int dt = model.cfg.text_dim;
        Vec gmean(dt, 0.0);
        for (int r = 0; r < d; ++r) {
            g.txt_bias[r] += gzt[r];
            for (int j = 0; j < dt; ++j) {
                g.txt_proj.at(r, j) += gzt[r] * tt.mean_emb[j];
                gmean[j] += model.p.txt_proj.at(r, j) * gzt[r];
            }
        }
        const double inv_count = 1.0 / static_cast<double>(tt.rows.size());
        for (int row : tt.rows)
            for (int j = 0; j < dt; ++j) g.tok_embed.at(row, j) += gmean[j] * inv_count;
    }
    return result;
}

TrainResult train(CcveModel& model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& config) {
    if (dataset.empty()) throw Error(ErrorCode::EmptyInput, "empty training dataset");
    const int batch_size = std::min<int>(config.batch_size, static_cast<int>(dataset.size()));

    std::vector<bool> covered(model.cfg.clusters, false);
    for (const TrainSample& s : dataset)
        if (s.cluster >= 0 && s.cluster < model.cfg.clusters) covered[s.cluster] = true;
    for (int k = 0; k < model.cfg.clusters; ++k) {
        if (!covered[k])
            std::fprintf(stderr, "warning: cluster %d has no training samples\n", k);
    }

    Rng rng(config.seed);
    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t pos = order.size(); // force a shuffle before the first batch

    TrainResult result;
    result.loss_history.reserve(static_cast<size_t>(config.steps));
    std::vector<TrainSample> batch(static_cast<size_t>(batch_size));

    std::vector<double*> params = param_ptrs(model.p);
    for (long step = 0; step < config.steps; ++step) {
        if (pos + batch_size > order.size()) {
            rng.shuffle(order);
            pos = 0;
        }
        for (int i = 0; i < batch_size; ++i) batch[i] = dataset[order[pos + i]];
        pos += batch_size;

        BackwardResult back = backward(model, batch);
        if (!std::isfinite(back.loss))
            throw Error(ErrorCode::Divergence,
                        "loss became non-finite at step " + std::to_string(step));
        result.loss_history.push_back(back.loss);

        std::vector<double*> grads = param_ptrs(back.grads);
        const size_t filter_params = static_cast<size_t>(model.cfg.clusters) *
                                     model.cfg.filter_size * model.cfg.filter_size;
        for (size_t i = 0; i < params.size(); ++i) {
            if (config.freeze_filters && i < filter_params) continue;
            *params[i] -= config.learning_rate * *grads[i];
        }
        model.p.log_inv_tau = std::min(model.p.log_inv_tau, std::log(kMaxInvTau));
    }
    return result;
}

Mat embed_all(const CcveModel& model, const GrayImage& image) {
    Mat out(model.cfg.clusters, model.cfg.embed_dim);
    for (int k = 0; k < model.cfg.clusters; ++k) {
        Vec emb;
        try {
            emb = encode_image(model, image, k);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ZeroNorm)
                throw Error(ErrorCode::ZeroNorm,
                            "row " + std::to_string(k) + ": " + e.what());
            throw;
        }
        for (int c = 0; c < model.cfg.embed_dim; ++c) out.at(k, c) = emb[c];
    }
    return out;
}

std::vector<double*> param_ptrs(CcveParams& p) {
    std::vector<double*> ptrs;
    for (Mat& f : p.filters)
        for (double& x : f.v) ptrs.push_back(&x);
    for (Mat& w : p.conv_w)
        for (double& x : w.v) ptrs.push_back(&x);
    for (double& x : p.conv_b) ptrs.push_back(&x);
    for (double& x : p.vis_proj.v) ptrs.push_back(&x);
    for (double& x : p.vis_bias) ptrs.push_back(&x);
    for (double& x : p.tok_embed.v) ptrs.push_back(&x);
    for (double& x : p.txt_proj.v) ptrs.push_back(&x);
    for (double& x : p.txt_bias) ptrs.push_back(&x);
    ptrs.push_back(&p.log_inv_tau);
    return ptrs;
}

std::string param_name(const CcveParams& p, size_t index) {
    auto sub = [&index](size_t count, const char* label, auto shape_fn) -> std::string {
        if (index < count) return shape_fn(index);
        index -= count;
        (void)label;
        return "";
    };
    for (size_t k = 0; k < p.filters.size(); ++k) {
        const size_t n = p.filters[k].v.size();
        if (index < n)
            return "filters[" + std::to_string(k) + "][" +
                   std::to_string(index / p.filters[k].cols) + "][" +
                   std::to_string(index % p.filters[k].cols) + "]";
        index -= n;
    }
    for (size_t j = 0; j < p.conv_w.size(); ++j) {
        const size_t n = p.conv_w[j].v.size();
        if (index < n)
            return "conv_w[" + std::to_string(j) + "][" +
                   std::to_string(index / p.conv_w[j].cols) + "][" +
                   std::to_string(index % p.conv_w[j].cols) + "]";
        index -= n;
    }
    std::string r;
    r = sub(p.conv_b.size(), "conv_b",
            [&](size_t i) { return "conv_b[" + std::to_string(i) + "]"; });
    if (!r.empty()) return r;
    r = sub(p.vis_proj.v.size(), "vis_proj", [&](size_t i) {
        return "vis_proj[" + std::to_string(i / p.vis_proj.cols) + "][" +
               std::to_string(i % p.vis_proj.cols) + "]";
    });
    if (!r.empty()) return r;
    r = sub(p.vis_bias.size(), "vis_bias",
            [&](size_t i) { return "vis_bias[" + std::to_string(i) + "]"; });
    if (!r.empty()) return r;
    r = sub(p.tok_embed.v.size(), "tok_embed", [&](size_t i) {
        return "tok_embed[" + std::to_string(i / p.tok_embed.cols) + "][" +
               std::to_string(i % p.tok_embed.cols) + "]";
    });
    if (!r.empty()) return r;
    r = sub(p.txt_proj.v.size(), "txt_proj", [&](size_t i) {
        return "txt_proj[" + std::to_string(i / p.txt_proj.cols) + "][" +
               std::to_string(i % p.txt_proj.cols) + "]";
    });
    if (!r.empty()) return r;
    r = sub(p.txt_bias.size(), "txt_bias",
            [&](size_t i) { return "txt_bias[" + std::to_string(i) + "]"; });
    if (!r.empty()) return r;
    return "log_inv_tau";
}

GradCheckResult grad_check_against(const CcveModel& model, std::span<const TrainSample> batch,
                                   double epsilon, const CcveParams& grads) {
    CcveModel probe = model;
    CcveParams grads_copy = grads;
    std::vector<double*> params = param_ptrs(probe.p);
    std::vector<double*> analytic = param_ptrs(grads_copy);

    GradCheckResult result;
    for (size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + epsilon;
        const double up = batch_loss(probe, batch);
        *params[i] = saved - epsilon;
        const double down = batch_loss(probe, batch);
        *params[i] = saved;

        const double fd = (up - down) / (2.0 * epsilon);
        const double ga = *analytic[i];
        const double scale = std::max(std::abs(fd), std::abs(ga));
        if (scale <= 1e-8) continue;
        const double rel = std::abs(fd - ga) / scale;
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_param = param_name(probe.p, i);
        }
    }
    return result;
}

GradCheckResult grad_check(const CcveModel& model, std::span<const TrainSample> batch,
                           double epsilon) {
    return grad_check_against(model, batch, epsilon, backward(model, batch).grads);
}

namespace {

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const nlohmann::json& j, int rows, int cols, const char* what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw Error(ErrorCode::BadModelFile, std::string(what) + ": bad row count");
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const auto& row = j[r];
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw Error(ErrorCode::BadModelFile, std::string(what) + ": bad column count");
        for (int c = 0; c < cols; ++c) m.at(r, c) = row[c].get<double>();
    }
    return m;
}

Vec vec_from_json(const nlohmann::json& j, int size, const char* what) {
    if (!j.is_array() || static_cast<int>(j.size()) != size)
        throw Error(ErrorCode::BadModelFile, std::string(what) + ": bad length");
    Vec v(size);
    for (int i = 0; i < size; ++i) v[i] = j[i].get<double>();
    return v;
}

} // namespace

void save_model(const CcveModel& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = "cxrkit-ccve";
    j["version"] = 1;
    j["clusters"] = model.cfg.clusters;
    j["filter_size"] = model.cfg.filter_size;
    j["channels"] = model.cfg.channels;
    j["conv_size"] = model.cfg.conv_size;
    j["embed_dim"] = model.cfg.embed_dim;
    j["text_dim"] = model.cfg.text_dim;
    j["vocab"] = model.vocab;

    nlohmann::json params;
    nlohmann::json filters = nlohmann::json::array();
    for (const Mat& f : model.p.filters) filters.push_back(mat_to_json(f));
    params["filters"] = std::move(filters);
    nlohmann::json conv_w = nlohmann::json::array();
    for (const Mat& w : model.p.conv_w) conv_w.push_back(mat_to_json(w));
    params["conv_w"] = std::move(conv_w);
    params["conv_b"] = model.p.conv_b;
    params["vis_proj"] = mat_to_json(model.p.vis_proj);
    params["vis_bias"] = model.p.vis_bias;
    params["tok_embed"] = mat_to_json(model.p.tok_embed);
    params["txt_proj"] = mat_to_json(model.p.txt_proj);
    params["txt_bias"] = model.p.txt_bias;
    params["log_inv_tau"] = model.p.log_inv_tau;
    j["params"] = std::move(params);

    atomic_write(path, j.dump(2) + "\n");
}

CcveModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model file " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("format", "") != "cxrkit-ccve")
        throw Error(ErrorCode::BadModelFile, path + " is not a ccve model file");
    if (j.value("version", 0) != 1)
        throw Error(ErrorCode::BadModelFile, "unsupported model version");

    CcveConfig cfg;
    cfg.clusters = j.at("clusters").get<int>();
    cfg.filter_size = j.at("filter_size").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.conv_size = j.at("conv_size").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.text_dim = j.at("text_dim").get<int>();
    if (cfg.clusters < 1 || cfg.filter_size < 1 || cfg.channels < 1 || cfg.conv_size < 1 ||
        cfg.embed_dim < 1 || cfg.text_dim < 1)
        throw Error(ErrorCode::BadModelFile, "non-positive dimension in model header");

    CcveModel model;
    model.cfg = cfg;
    model.vocab = j.at("vocab").get<std::vector<std::string>>();
    for (size_t i = 0; i < model.vocab.size(); ++i)
        model.vocab_index[model.vocab[i]] = static_cast<int>(i);

    const auto& params = j.at("params");
    const auto& filters = params.at("filters");
    if (static_cast<int>(filters.size()) != cfg.clusters)
        throw Error(ErrorCode::BadModelFile, "filter bank size does not match K");
    model.p.filters.clear();
    for (const auto& f : filters)
        model.p.filters.push_back(mat_from_json(f, cfg.filter_size, cfg.filter_size, "filter"));
    const auto& conv_w = params.at("conv_w");
    if (static_cast<int>(conv_w.size()) != cfg.channels)
        throw Error(ErrorCode::BadModelFile, "conv bank size does not match channels");
    model.p.conv_w.clear();
    for (const auto& w : conv_w)
        model.p.conv_w.push_back(mat_from_json(w, cfg.conv_size, cfg.conv_size, "conv_w"));
    model.p.conv_b = vec_from_json(params.at("conv_b"), cfg.channels, "conv_b");
    model.p.vis_proj = mat_from_json(params.at("vis_proj"), cfg.embed_dim, cfg.channels, "vis_proj");
    model.p.vis_bias = vec_from_json(params.at("vis_bias"), cfg.embed_dim, "vis_bias");
    model.p.tok_embed = mat_from_json(params.at("tok_embed"),
                                      static_cast<int>(model.vocab.size()), cfg.text_dim,
                                      "tok_embed");
    model.p.txt_proj = mat_from_json(params.at("txt_proj"), cfg.embed_dim, cfg.text_dim, "txt_proj");
    model.p.txt_bias = vec_from_json(params.at("txt_bias"), cfg.embed_dim, "txt_bias");
    model.p.log_inv_tau = params.at("log_inv_tau").get<double>();
    return model;
}

SynthData synth_dataset(const SynthConfig& cfg) {
    if (cfg.size < 8)
        throw Error(ErrorCode::KernelTooLarge, "synthetic image size must be at least 8");
    if (cfg.clusters < 1 || cfg.clusters > 16)
        throw Error(ErrorCode::EmptyInput, "synthetic clusters must be in 1..16");

    SynthData data;
    Rng rng(cfg.seed);
    const int block = std::max(2, cfg.size / 4);

    std::set<std::string> vocab_set;
    for (int k = 0; k < cfg.clusters; ++k) {
        // Impressions reuse the canonical cluster names so the labeling and
        // clustering pipeline reproduces the planted cluster ids.
        const std::string& name =
            cluster_names()[static_cast<size_t>(k) % cluster_names().size()];
        const TokenSeq name_tokens = tokenize(name);
        for (const auto& t : name_tokens) vocab_set.insert(t);

        const int cell_r = (k / 4) * block;
        const int cell_c = (k % 4) * block;
        for (int i = 0; i < cfg.per_cluster; ++i) {
            TrainSample sample;
            sample.cluster = k;
            sample.tokens = name_tokens;
            sample.image.id = "synth-" + std::to_string(k) + "-" + std::to_string(i);
            sample.image.height = cfg.size;
            sample.image.width = cfg.size;
            sample.image.pixels.resize(static_cast<size_t>(cfg.size) * cfg.size);
            for (int r = 0; r < cfg.size; ++r) {
                for (int c = 0; c < cfg.size; ++c) {
                    const bool in_block = r >= cell_r && r < cell_r + block && c >= cell_c &&
                                          c < cell_c + block;
                    const double base = in_block ? 0.9 : 0.1;
                    const double noisy = base + 0.08 * rng.uniform(-1.0, 1.0);
                    sample.image.at(r, c) = std::clamp(noisy, 0.0, 1.0);
                }
            }
            data.impressions.push_back(name + ".");
            data.samples.push_back(std::move(sample));
        }
    }
    data.vocab.assign(vocab_set.begin(), vocab_set.end());
    return data;
}

double retrieval_accuracy(const CcveModel& model, const std::vector<TrainSample>& samples,
                          int batch_size, uint64_t shuffle_seed) {
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no samples for retrieval");
    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(shuffle_seed);
    rng.shuffle(order);

    long correct = 0, total = 0;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        const size_t end = std::min(order.size(), start + batch_size);
        const int b = static_cast<int>(end - start);
        if (b < 2) break;

        Mat z(b, model.cfg.embed_dim), t(b, model.cfg.embed_dim);
        for (int i = 0; i < b; ++i) {
            const TrainSample& s = samples[order[start + i]];
            const Vec zi = encode_image(model, s.image, s.cluster);
            const Vec ti = encode_text(model, s.tokens);
            for (int c = 0; c < model.cfg.embed_dim; ++c) {
                z.at(i, c) = zi[c];
                t.at(i, c) = ti[c];
            }
        }
        auto same_text = [&](int i, int j) {
            return samples[order[start + i]].tokens == samples[order[start + j]].tokens;
        };
        for (int i = 0; i < b; ++i) {
            int best_j = 0, best_i = 0;
            double best_row = -2.0, best_col = -2.0;
            for (int j = 0; j < b; ++j) {
                double row_dot = 0.0, col_dot = 0.0;
                for (int c = 0; c < model.cfg.embed_dim; ++c) {
                    row_dot += z.at(i, c) * t.at(j, c);
                    col_dot += z.at(j, c) * t.at(i, c);
                }
                if (row_dot > best_row) { best_row = row_dot; best_j = j; }
                if (col_dot > best_col) { best_col = col_dot; best_i = j; }
            }
            // Duplicate-aware: retrieving any copy of the right text counts.
            if (same_text(i, best_j)) ++correct;
            if (same_text(i, best_i)) ++correct;
            total += 2;
        }
    }
    return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

double silhouette_score(const Mat& points, const std::vector<int>& labels) {
    const int n = points.rows;
    if (n == 0 || labels.size() != static_cast<size_t>(n))
        throw Error(ErrorCode::LengthMismatch, "points and labels disagree");

    auto dist = [&](int a, int b) {
        double sq = 0.0;
        for (int c = 0; c < points.cols; ++c) {
            const double diff = points.at(a, c) - points.at(b, c);
            sq += diff * diff;
        }
        return std::sqrt(sq);
    };

    std::unordered_map<int, long> cluster_sizes;
    for (int lab : labels) ++cluster_sizes[lab];

    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        std::unordered_map<int, double> dist_sums;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sums[labels[j]] += dist(i, j);
        }
        const long own = cluster_sizes[labels[i]];
        if (own <= 1) continue; // singleton clusters contribute 0
        const double a = dist_sums[labels[i]] / static_cast<double>(own - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [lab, total] : dist_sums) {
            if (lab == labels[i]) continue;
            b = std::min(b, total / static_cast<double>(cluster_sizes[lab]));
        }
        if (!std::isfinite(b)) continue; // single cluster overall
        const double denom = std::max(a, b);
        sum += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return sum / n;
}

} // namespace cxr
