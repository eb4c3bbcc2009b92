#include "brainaug/lm.hpp"

#include "brainaug/io.hpp"
#include "brainaug/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace brainaug::lm {

namespace {

constexpr double kLnEps = 1e-5;

double gelu(double x) {
    const double u = std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double a = std::sqrt(2.0 / std::numbers::pi);
    const double u = a * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * a * (1.0 + 3.0 * 0.044715 * x * x);
}

struct LayerNormCache {
    Matrix xhat;  // normalized input
    Vector rstd;  // per row
};

Matrix layernorm_forward(const Matrix& x, const Vector& gain, const Vector& bias,
                         LayerNormCache& cache) {
    const Eigen::Index n = x.rows(), d = x.cols();
    cache.xhat.resize(n, d);
    cache.rstd.resize(n);
    Matrix out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.rstd(i) = rstd;
        cache.xhat.row(i) = (x.row(i).array() - mu) * rstd;
        out.row(i) = cache.xhat.row(i).array() * gain.transpose().array() +
                     bias.transpose().array();
    }
    return out;
}

Matrix layernorm_backward(const Matrix& dout, const LayerNormCache& cache, const Vector& gain,
                          Vector* dgain, Vector* dbias) {
    const Eigen::Index n = dout.rows(), d = dout.cols();
    Matrix dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::ArrayXd dy = dout.row(i).transpose().array() * gain.array();
        const Eigen::ArrayXd xhat = cache.xhat.row(i).transpose().array();
        const double m1 = dy.mean();
        const double m2 = (dy * xhat).mean();
        dx.row(i) = (cache.rstd(i) * (dy - m1 - xhat * m2)).transpose();
        if (dgain) *dgain += (dout.row(i).transpose().array() * xhat).matrix();
        if (dbias) *dbias += dout.row(i).transpose();
    }
    return dx;
}

struct Activations {
    Matrix x0;        // embeddings + positional
    LayerNormCache ln1;
    Matrix a;         // ln1 output
    Matrix q, k, v;   // L x d
    Matrix att;       // L x L, causal row softmax
    Matrix attn_out;  // att * v
    Matrix x1;        // residual after attention
    LayerNormCache ln2;
    Matrix b;       // ln2 output
    Matrix f1pre;   // L x 4d
    Matrix f1;      // gelu(f1pre)
    Matrix x2;      // residual after ffn
    LayerNormCache lnf;
    Matrix y;       // final norm output
    Matrix logits;  // L x V
    Matrix probs;
};

void forward_impl(const LmParams& p, const Matrix& embeddings, Activations& act) {
    const Eigen::Index L = embeddings.rows();
    const Eigen::Index d = p.cfg.d_model;
    if (embeddings.cols() != d) throw std::invalid_argument("lm forward: embedding width mismatch");
    if (L < 1) throw std::invalid_argument("lm forward: empty sequence");
    if (L > p.cfg.max_seq_len) throw std::length_error("lm forward: sequence exceeds max length");

    act.x0 = embeddings + p.positional.topRows(L);
    act.a = layernorm_forward(act.x0, p.ln1_gain, p.ln1_bias, act.ln1);

    act.q.noalias() = act.a * p.wq.transpose();
    act.k.noalias() = act.a * p.wk.transpose();
    act.v.noalias() = act.a * p.wv.transpose();

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    act.att = Matrix::Zero(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
        double maxv = -std::numeric_limits<double>::infinity();
        Eigen::ArrayXd scores(i + 1);
        for (Eigen::Index j = 0; j <= i; ++j) {
            scores(j) = act.q.row(i).dot(act.k.row(j)) * inv_sqrt_d;
            maxv = std::max(maxv, scores(j));
        }
        const Eigen::ArrayXd e = (scores - maxv).exp();
        act.att.row(i).head(i + 1) = (e / e.sum()).transpose();
    }
    act.attn_out.noalias() = act.att * act.v;
    act.x1 = act.x0 + act.attn_out * p.wo.transpose();

    act.b = layernorm_forward(act.x1, p.ln2_gain, p.ln2_bias, act.ln2);
    act.f1pre = (act.b * p.w_ff1.transpose()).rowwise() + p.b_ff1.transpose();
    act.f1 = act.f1pre.unaryExpr([](double x) { return gelu(x); });
    act.x2 = act.x1 + ((act.f1 * p.w_ff2.transpose()).rowwise() + p.b_ff2.transpose());

    act.y = layernorm_forward(act.x2, p.lnf_gain, p.lnf_bias, act.lnf);
    act.logits.noalias() = act.y * p.output_proj.transpose();

    act.probs.resize(L, p.cfg.vocab_size);
    for (Eigen::Index i = 0; i < L; ++i) {
        const double maxv = act.logits.row(i).maxCoeff();
        const Eigen::ArrayXd e = (act.logits.row(i).transpose().array() - maxv).exp();
        act.probs.row(i) = (e / e.sum()).transpose();
    }
}

void backward_impl(const LmParams& p, const Activations& act, const Matrix& dlogits,
                   Matrix* input_grad, LmParams* g) {
    const Eigen::Index L = act.x0.rows();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(p.cfg.d_model));

    if (g) g->output_proj.noalias() += dlogits.transpose() * act.y;
    Matrix dy = dlogits * p.output_proj;

    Matrix dx2 = layernorm_backward(dy, act.lnf, p.lnf_gain, g ? &g->lnf_gain : nullptr,
                                    g ? &g->lnf_bias : nullptr);

    // feed-forward
    Matrix df2 = dx2;  // residual: dx1 also receives dx2 below
    if (g) {
        g->w_ff2.noalias() += df2.transpose() * act.f1;
        g->b_ff2 += df2.colwise().sum().transpose();
    }
    Matrix df1 = df2 * p.w_ff2;
    Matrix df1pre =
        df1.array() * act.f1pre.unaryExpr([](double x) { return gelu_grad(x); }).array();
    if (g) {
        g->w_ff1.noalias() += df1pre.transpose() * act.b;
        g->b_ff1 += df1pre.colwise().sum().transpose();
    }
    Matrix db = df1pre * p.w_ff1;

    Matrix dx1 = dx2 + layernorm_backward(db, act.ln2, p.ln2_gain, g ? &g->ln2_gain : nullptr,
                                          g ? &g->ln2_bias : nullptr);

    // attention
    Matrix dproj = dx1;  // residual: dx0 also receives dx1 below
    if (g) g->wo.noalias() += dproj.transpose() * act.attn_out;
    Matrix dattn_out = dproj * p.wo;

    Matrix datt = dattn_out * act.v.transpose();
    Matrix dv = act.att.transpose() * dattn_out;

    Matrix dscores = Matrix::Zero(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
        const Eigen::ArrayXd arow = act.att.row(i).head(i + 1).transpose().array();
        const Eigen::ArrayXd drow = datt.row(i).head(i + 1).transpose().array();
        const double dot = (arow * drow).sum();
        dscores.row(i).head(i + 1) = (arow * (drow - dot)).transpose();
    }
    Matrix dq = dscores * act.k * inv_sqrt_d;
    Matrix dk = dscores.transpose() * act.q * inv_sqrt_d;

    Matrix da = dq * p.wq + dk * p.wk + dv * p.wv;
    if (g) {
        g->wq.noalias() += dq.transpose() * act.a;
        g->wk.noalias() += dk.transpose() * act.a;
        g->wv.noalias() += dv.transpose() * act.a;
    }

    Matrix dx0 = dx1 + layernorm_backward(da, act.ln1, p.ln1_gain, g ? &g->ln1_gain : nullptr,
                                          g ? &g->ln1_bias : nullptr);

    if (g) g->positional.topRows(L) += dx0;
    if (input_grad) *input_grad = dx0;
}

void check_targets(const Matrix& embeddings, const IdList& targets, int prompt_len,
                   int vocab_size) {
    if (targets.empty()) throw std::invalid_argument("nll: empty targets");
    if (prompt_len < 1) throw std::invalid_argument("nll: prompt_len must be >= 1");
    if (prompt_len + static_cast<Eigen::Index>(targets.size()) != embeddings.rows())
        throw std::invalid_argument("nll: prompt_len + targets must equal input length");
    for (TokenId t : targets)
        if (t < 0 || t >= vocab_size) throw std::invalid_argument("nll: target id out of range");
}

}  // namespace

TokenId Vocabulary::id_of(const std::string& surface) const {
    auto it = index.find(surface);
    return it == index.end() ? unk_id : it->second;
}

IdList Vocabulary::to_ids(const TokenList& surfaces) const {
    IdList ids;
    ids.reserve(surfaces.size());
    for (const auto& s : surfaces) ids.push_back(id_of(s));
    return ids;
}

const std::string& Vocabulary::surface(TokenId id) const {
    return tokens.at(static_cast<std::size_t>(id));
}

std::uint64_t Vocabulary::hash() const {
    std::string joined;
    for (const auto& t : tokens) {
        joined += t;
        joined += '\n';
    }
    return io::fnv1a64(joined);
}

Vocabulary build_vocab(const std::vector<TokenList>& corpus, int min_freq) {
    std::map<std::string, int> freq;
    bool any = false;
    for (const auto& doc : corpus)
        for (const auto& tok : doc) {
            ++freq[tok];
            any = true;
        }
    if (!any) throw std::invalid_argument("build_vocab: empty corpus");

    std::vector<std::pair<std::string, int>> entries(freq.begin(), freq.end());
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    vocab.tokens = {"<unk>", "<bos>", "<eos>"};
    vocab.unk_id = 0;
    vocab.bos_id = 1;
    vocab.eos_id = 2;
    for (const auto& [surface, count] : entries) {
        if (count < min_freq) continue;
        vocab.tokens.push_back(surface);
    }
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i)
        vocab.index[vocab.tokens[i]] = static_cast<TokenId>(i);
    return vocab;
}

LmParams LmParams::init(const LmConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    LmParams p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    const int f = cfg.ffn_dim();
    auto gauss = [&rng](Eigen::Index r, Eigen::Index c, double sd) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, sd);
        return m;
    };
    p.token_embeddings = gauss(cfg.vocab_size, d, 0.05);
    p.positional = gauss(cfg.max_seq_len, d, 0.02);
    const double wsd = 1.0 / std::sqrt(static_cast<double>(d));
    p.wq = gauss(d, d, wsd);
    p.wk = gauss(d, d, wsd);
    p.wv = gauss(d, d, wsd);
    p.wo = gauss(d, d, wsd);
    p.w_ff1 = gauss(f, d, wsd);
    p.b_ff1 = Vector::Zero(f);
    p.w_ff2 = gauss(d, f, 1.0 / std::sqrt(static_cast<double>(f)));
    p.b_ff2 = Vector::Zero(d);
    p.ln1_gain = Vector::Ones(d);
    p.ln1_bias = Vector::Zero(d);
    p.ln2_gain = Vector::Ones(d);
    p.ln2_bias = Vector::Zero(d);
    p.lnf_gain = Vector::Ones(d);
    p.lnf_bias = Vector::Zero(d);
    p.output_proj = gauss(cfg.vocab_size, d, wsd);
    return p;
}

LmParams LmParams::zeros_like(const LmParams& other) {
    LmParams g;
    g.cfg = other.cfg;
    g.token_embeddings = Matrix::Zero(other.token_embeddings.rows(), other.token_embeddings.cols());
    g.positional = Matrix::Zero(other.positional.rows(), other.positional.cols());
    g.wq = Matrix::Zero(other.wq.rows(), other.wq.cols());
    g.wk = Matrix::Zero(other.wk.rows(), other.wk.cols());
    g.wv = Matrix::Zero(other.wv.rows(), other.wv.cols());
    g.wo = Matrix::Zero(other.wo.rows(), other.wo.cols());
    g.w_ff1 = Matrix::Zero(other.w_ff1.rows(), other.w_ff1.cols());
    g.b_ff1 = Vector::Zero(other.b_ff1.size());
    g.w_ff2 = Matrix::Zero(other.w_ff2.rows(), other.w_ff2.cols());
    g.b_ff2 = Vector::Zero(other.b_ff2.size());
    g.ln1_gain = Vector::Zero(other.ln1_gain.size());
    g.ln1_bias = Vector::Zero(other.ln1_bias.size());
    g.ln2_gain = Vector::Zero(other.ln2_gain.size());
    g.ln2_bias = Vector::Zero(other.ln2_bias.size());
    g.lnf_gain = Vector::Zero(other.lnf_gain.size());
    g.lnf_bias = Vector::Zero(other.lnf_bias.size());
    g.output_proj = Matrix::Zero(other.output_proj.rows(), other.output_proj.cols());
    return g;
}

std::vector<TensorRef> LmParams::tensors() {
    return {
        {"token_embeddings", token_embeddings.data(), token_embeddings.size()},
        {"positional", positional.data(), positional.size()},
        {"wq", wq.data(), wq.size()},
        {"wk", wk.data(), wk.size()},
        {"wv", wv.data(), wv.size()},
        {"wo", wo.data(), wo.size()},
        {"w_ff1", w_ff1.data(), w_ff1.size()},
        {"b_ff1", b_ff1.data(), b_ff1.size()},
        {"w_ff2", w_ff2.data(), w_ff2.size()},
        {"b_ff2", b_ff2.data(), b_ff2.size()},
        {"ln1_gain", ln1_gain.data(), ln1_gain.size()},
        {"ln1_bias", ln1_bias.data(), ln1_bias.size()},
        {"ln2_gain", ln2_gain.data(), ln2_gain.size()},
        {"ln2_bias", ln2_bias.data(), ln2_bias.size()},
        {"lnf_gain", lnf_gain.data(), lnf_gain.size()},
        {"lnf_bias", lnf_bias.data(), lnf_bias.size()},
        {"output_proj", output_proj.data(), output_proj.size()},
    };
}

std::vector<TensorRef> LmParams::tensors() const {
    return const_cast<LmParams*>(this)->tensors();
}

std::uint64_t LmParams::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : tensors()) {
        const std::uint64_t part =
            io::fnv1a64(t.data, static_cast<std::size_t>(t.size) * sizeof(double));
        h ^= part;
        h *= 0x100000001b3ull;
    }
    return h;
}

Matrix LmParams::embed(const IdList& ids) const {
    Matrix m(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = token_embeddings.row(ids[i]);
    return m;
}

LmOutput forward(const LmParams& params, const Matrix& embeddings) {
    Activations act;
    forward_impl(params, embeddings, act);
    return {std::move(act.logits), std::move(act.probs)};
}

Vector next_token_distribution(const LmParams& params, const Matrix& embeddings) {
    Activations act;
    forward_impl(params, embeddings, act);
    return act.probs.row(act.probs.rows() - 1);
}

double nll(const LmParams& params, const Matrix& embeddings, const IdList& targets,
           int prompt_len) {
    check_targets(embeddings, targets, prompt_len, params.cfg.vocab_size);
    Activations act;
    forward_impl(params, embeddings, act);
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Eigen::Index pos = prompt_len + static_cast<Eigen::Index>(i) - 1;
        loss -= std::log(std::max(act.probs(pos, targets[i]), 1e-300));
    }
    return loss;
}

double nll_backward(const LmParams& params, const Matrix& embeddings, const IdList& targets,
                    int prompt_len, double loss_scale, Matrix* input_grad,
                    LmParams* param_grads) {
    check_targets(embeddings, targets, prompt_len, params.cfg.vocab_size);
    Activations act;
    forward_impl(params, embeddings, act);

    double loss = 0.0;
    Matrix dlogits = Matrix::Zero(act.logits.rows(), act.logits.cols());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const Eigen::Index pos = prompt_len + static_cast<Eigen::Index>(i) - 1;
        loss -= std::log(std::max(act.probs(pos, targets[i]), 1e-300));
        dlogits.row(pos) = loss_scale * act.probs.row(pos);
        dlogits(pos, targets[i]) -= loss_scale;
    }
    backward_impl(params, act, dlogits, input_grad, param_grads);
    return loss;
}

Matrix grad_wrt_input_embeddings(const LmParams& params, const Matrix& embeddings,
                                 const IdList& targets, int prompt_len) {
    Matrix grad;
    nll_backward(params, embeddings, targets, prompt_len, 1.0, &grad, nullptr);
    return grad;
}

LmParams pretrain_lm(const std::vector<IdList>& train_docs, const std::vector<IdList>& val_docs,
                     const Vocabulary& vocab, const LmConfig& cfg, const PretrainConfig& pre,
                     PretrainReport* report) {
    if (train_docs.empty()) throw std::invalid_argument("pretrain_lm: empty corpus");

    auto make_sequence = [&](const IdList& doc) {
        IdList seq;
        seq.reserve(doc.size() + 2);
        seq.push_back(vocab.bos_id);
        for (TokenId t : doc) seq.push_back(t);
        seq.push_back(vocab.eos_id);
        if (static_cast<int>(seq.size()) > cfg.max_seq_len)
            seq.resize(static_cast<std::size_t>(cfg.max_seq_len));
        return seq;
    };

    Rng crop_rng(pre.seed + 2);
    auto make_crop = [&](const IdList& doc) {
        const int len = static_cast<int>(doc.size());
        if (!pre.crop_sequences || len <= pre.min_crop) return make_sequence(doc);
        const int crop_len = pre.min_crop + crop_rng.uniform_int(len - pre.min_crop + 1);
        const int start = crop_rng.uniform_int(len - crop_len + 1);
        IdList seq;
        seq.reserve(static_cast<std::size_t>(crop_len) + 2);
        if (start == 0) seq.push_back(vocab.bos_id);  // document openings keep their marker
        for (int i = start; i < start + crop_len; ++i)
            seq.push_back(doc[static_cast<std::size_t>(i)]);
        if (start + crop_len == len) seq.push_back(vocab.eos_id);
        if (static_cast<int>(seq.size()) > cfg.max_seq_len)
            seq.resize(static_cast<std::size_t>(cfg.max_seq_len));
        return seq;
    };

    LmParams params = LmParams::init(cfg, pre.seed);
    auto param_refs = params.tensors();

    // Adam moments, flat per tensor
    std::vector<Vector> m, v;
    for (const auto& t : param_refs) {
        m.push_back(Vector::Zero(t.size));
        v.push_back(Vector::Zero(t.size));
    }
    long step = 0;
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    auto eval_mean_nll = [&](const std::vector<IdList>& docs) {
        double total = 0.0;
        long count = 0;
        for (const auto& doc : docs) {
            const IdList seq = make_sequence(doc);
            if (seq.size() < 2) continue;
            const IdList targets(seq.begin() + 1, seq.end());
            total += nll(params, params.embed(seq), targets, 1);
            count += static_cast<long>(targets.size());
        }
        return count == 0 ? 0.0 : total / static_cast<double>(count);
    };

    LmParams best = params;
    double best_val = eval_mean_nll(val_docs);
    int best_epoch = 0;
    if (report) {
        report->train_loss.clear();
        report->val_loss.clear();
    }

    Rng rng(pre.seed + 1);
    std::vector<std::size_t> order(train_docs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    int since_best = 0;
    for (int epoch = 1; epoch <= pre.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        long epoch_tokens = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(pre.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(pre.batch_size));
            LmParams grads = LmParams::zeros_like(params);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t bi = start; bi < end; ++bi) {
                const IdList seq = make_crop(train_docs[order[bi]]);
                if (seq.size() < 2) continue;
                const IdList targets(seq.begin() + 1, seq.end());
                Matrix input_grad;
                const double scale = inv_batch / static_cast<double>(targets.size());
                const double loss = nll_backward(params, params.embed(seq), targets, 1, scale,
                                                 &input_grad, &grads);
                // route input gradients back onto the embedding rows
                for (std::size_t i = 0; i < seq.size(); ++i)
                    grads.token_embeddings.row(seq[i]) += input_grad.row(static_cast<Eigen::Index>(i));
                epoch_loss += loss;
                epoch_tokens += static_cast<long>(targets.size());
            }
            auto grad_refs = grads.tensors();
            ++step;
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t t = 0; t < param_refs.size(); ++t) {
                // decoupled decay on matrices; biases and norm parameters stay
                const bool decay = pre.weight_decay > 0.0 &&
                                   param_refs[t].name.rfind("b_", 0) != 0 &&
                                   param_refs[t].name.rfind("ln", 0) != 0;
                for (Eigen::Index i = 0; i < param_refs[t].size; ++i) {
                    const double gval = grad_refs[t].data[i];
                    if (!std::isfinite(gval)) throw std::runtime_error("divergence");
                    m[t](i) = beta1 * m[t](i) + (1.0 - beta1) * gval;
                    v[t](i) = beta2 * v[t](i) + (1.0 - beta2) * gval * gval;
                    param_refs[t].data[i] -=
                        pre.lr * (m[t](i) / corr1) / (std::sqrt(v[t](i) / corr2) + adam_eps);
                    if (decay) param_refs[t].data[i] -= pre.lr * pre.weight_decay * param_refs[t].data[i];
                }
            }
        }
        const double train_mean =
            epoch_tokens == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_tokens);
        const double val_mean = eval_mean_nll(val_docs);
        if (report) {
            report->train_loss.push_back(train_mean);
            report->val_loss.push_back(val_mean);
        }
        if (val_mean < best_val) {
            best_val = val_mean;
            best = params;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= pre.patience) {
            break;
        }
    }
    if (report) {
        report->best_epoch = best_epoch;
        report->best_val = best_val;
    }
    return best;
}

}  // namespace brainaug::lm
