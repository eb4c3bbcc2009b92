#include "brainaug/brain_decoder.hpp"

#include "brainaug/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace brainaug::decoder {

namespace {

void check_window(const DecoderParams& params, const signals::BrainWindow& window) {
    if (window.t_frames() != params.t_frames() || window.feat_dim() != params.feat_dim())
        throw std::invalid_argument("decode_brain: window shape mismatch");
}

struct MlpCache {
    Matrix in;  // t x c, p_i + b_i
    Matrix h1;  // t x c, post-relu
    Matrix h2;  // t x c, post-relu
};

Matrix mlp_forward(const DecoderParams& p, const signals::BrainWindow& window, MlpCache& cache) {
    cache.in = window.matrix + p.position_embeddings;
    cache.h1 = ((cache.in * p.w1.transpose()).rowwise() + p.b1.transpose()).cwiseMax(0.0);
    cache.h2 = ((cache.h1 * p.w2.transpose()).rowwise() + p.b2.transpose()).cwiseMax(0.0);
    return (cache.h2 * p.w3.transpose()).rowwise() + p.b3.transpose();
}

void mlp_backward(const DecoderParams& p, const MlpCache& cache, const Matrix& dvout,
                  DecoderParams& g) {
    g.w3.noalias() += dvout.transpose() * cache.h2;
    g.b3 += dvout.colwise().sum().transpose();
    Matrix dh2 = dvout * p.w3;
    dh2 = dh2.array() * (cache.h2.array() > 0.0).cast<double>();

    g.w2.noalias() += dh2.transpose() * cache.h1;
    g.b2 += dh2.colwise().sum().transpose();
    Matrix dh1 = dh2 * p.w2;
    dh1 = dh1.array() * (cache.h1.array() > 0.0).cast<double>();

    g.w1.noalias() += dh1.transpose() * cache.in;
    g.b1 += dh1.colwise().sum().transpose();
    g.position_embeddings += dh1 * p.w1;
}

}  // namespace

DecoderParams DecoderParams::init(int t_frames, int feat_dim, int model_dim, std::uint64_t seed) {
    Rng rng(seed);
    DecoderParams p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(feat_dim));
    auto uni = [&rng](Eigen::Index r, Eigen::Index c, double lim) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-lim, lim);
        return m;
    };
    p.position_embeddings = uni(t_frames, feat_dim, 0.1);
    p.w1 = uni(feat_dim, feat_dim, bound);
    p.b1 = uni(feat_dim, 1, bound);
    p.w2 = uni(feat_dim, feat_dim, bound);
    p.b2 = uni(feat_dim, 1, bound);
    p.w3 = uni(model_dim, feat_dim, bound);
    p.b3 = uni(model_dim, 1, bound);
    p.special_begin.resize(model_dim);
    p.special_end.resize(model_dim);
    for (int i = 0; i < model_dim; ++i) p.special_begin(i) = rng.normal(0.0, 0.02);
    for (int i = 0; i < model_dim; ++i) p.special_end(i) = rng.normal(0.0, 0.02);
    return p;
}

DecoderParams DecoderParams::zeros_like(const DecoderParams& other) {
    DecoderParams g;
    g.position_embeddings =
        Matrix::Zero(other.position_embeddings.rows(), other.position_embeddings.cols());
    g.w1 = Matrix::Zero(other.w1.rows(), other.w1.cols());
    g.b1 = Vector::Zero(other.b1.size());
    g.w2 = Matrix::Zero(other.w2.rows(), other.w2.cols());
    g.b2 = Vector::Zero(other.b2.size());
    g.w3 = Matrix::Zero(other.w3.rows(), other.w3.cols());
    g.b3 = Vector::Zero(other.b3.size());
    g.special_begin = Vector::Zero(other.special_begin.size());
    g.special_end = Vector::Zero(other.special_end.size());
    return g;
}

std::vector<lm::TensorRef> DecoderParams::tensors() {
    return {
        {"position_embeddings", position_embeddings.data(), position_embeddings.size()},
        {"w1", w1.data(), w1.size()},
        {"b1", b1.data(), b1.size()},
        {"w2", w2.data(), w2.size()},
        {"b2", b2.data(), b2.size()},
        {"w3", w3.data(), w3.size()},
        {"b3", b3.data(), b3.size()},
        {"special_begin", special_begin.data(), special_begin.size()},
        {"special_end", special_end.data(), special_end.size()},
    };
}

std::vector<lm::TensorRef> DecoderParams::mlp_tensors() {
    return {
        {"position_embeddings", position_embeddings.data(), position_embeddings.size()},
        {"w1", w1.data(), w1.size()},
        {"b1", b1.data(), b1.size()},
        {"w2", w2.data(), w2.size()},
        {"b2", b2.data(), b2.size()},
        {"w3", w3.data(), w3.size()},
        {"b3", b3.data(), b3.size()},
    };
}

Matrix decode_brain(const DecoderParams& params, const signals::BrainWindow& window) {
    check_window(params, window);
    MlpCache cache;
    return mlp_forward(params, window, cache);
}

void decode_brain_backward(const DecoderParams& params, const signals::BrainWindow& window,
                           const Matrix& dvout, DecoderParams& grads) {
    check_window(params, window);
    MlpCache cache;
    mlp_forward(params, window, cache);
    mlp_backward(params, cache, dvout, grads);
}

PromptSequence assemble_prompt(const DecoderParams& params, const lm::LmParams& lm_params,
                               const signals::BrainWindow* window, const IdList& query_ids) {
    if (query_ids.empty()) throw std::invalid_argument("assemble_prompt: empty query");

    PromptSequence seq;
    const int d = static_cast<int>(lm_params.cfg.d_model);
    const int n = static_cast<int>(query_ids.size());
    if (window == nullptr) {
        seq.layout = {0, 0, 0, n};
        seq.vectors = lm_params.embed(query_ids);
        return seq;
    }
    check_window(params, *window);
    const int t = params.t_frames();
    seq.layout = {1, t, 1, n};
    seq.vectors.resize(seq.layout.length(), d);
    seq.vectors.row(0) = params.special_begin.transpose();
    seq.vectors.middleRows(1, t) = decode_brain(params, *window);
    seq.vectors.row(1 + t) = params.special_end.transpose();
    seq.vectors.bottomRows(n) = lm_params.embed(query_ids);
    return seq;
}

void route_prompt_gradient(const DecoderParams& params, const signals::BrainWindow& window,
                           const PromptLayout& layout, const Matrix& dprompt,
                           DecoderParams& grads) {
    if (dprompt.rows() < layout.length())
        throw std::invalid_argument("route_prompt_gradient: gradient shorter than prompt");
    if (layout.begin_markers == 0) return;  // query-only prompt owns nothing trainable
    grads.special_begin += dprompt.row(0).transpose();
    grads.special_end += dprompt.row(1 + layout.t_brain).transpose();
    decode_brain_backward(params, window, dprompt.middleRows(1, layout.t_brain), grads);
}

double warmup_loss(const DecoderParams& params, const lm::LmParams& lm_params,
                   const signals::BrainWindow& window, const IdList& query_ids,
                   DecoderParams* grads) {
    if (query_ids.empty()) throw std::invalid_argument("warmup_loss: empty query");
    check_window(params, window);

    Vector target = Vector::Zero(lm_params.cfg.d_model);
    for (TokenId id : query_ids) target += lm_params.embed_one(id);
    target /= static_cast<double>(query_ids.size());

    MlpCache cache;
    const Matrix vout = mlp_forward(params, window, cache);
    const Matrix diff = vout.rowwise() - target.transpose();
    const double t = static_cast<double>(window.t_frames());
    const double loss = diff.squaredNorm() / t;

    if (grads) {
        const Matrix dvout = (2.0 / t) * diff;
        mlp_backward(params, cache, dvout, *grads);
    }
    return loss;
}

}  // namespace brainaug::decoder
