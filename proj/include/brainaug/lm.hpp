#pragma once

#include "brainaug/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace brainaug::lm {

struct Vocabulary {
    std::vector<std::string> tokens;        // id -> surface
    std::map<std::string, TokenId> index;   // surface -> id
    TokenId unk_id = 0;
    TokenId bos_id = 1;
    TokenId eos_id = 2;

    TokenId id_of(const std::string& surface) const;
    IdList to_ids(const TokenList& surfaces) const;
    const std::string& surface(TokenId id) const;
    int size() const { return static_cast<int>(tokens.size()); }
    std::uint64_t hash() const;
};

/// Tokens with frequency >= min_freq plus the specials, ordered by frequency
/// then lexicographically so identical corpora produce identical id maps.
Vocabulary build_vocab(const std::vector<TokenList>& corpus, int min_freq);

struct LmConfig {
    int vocab_size = 0;
    int d_model = 64;
    int max_seq_len = 128;

    int ffn_dim() const { return 4 * d_model; }
};

/// Flat view of one parameter tensor; shared by the optimizer, checksums and
/// finite-difference probes.
struct TensorRef {
    std::string name;
    double* data = nullptr;
    Eigen::Index size = 0;
};

/// All weights of the reference model: a single pre-norm transformer block
/// with one causal attention head, a GeLU feed-forward, and an output
/// projection. The model consumes embedding vectors rather than token ids so
/// that non-token embeddings can be spliced into the prompt.
struct LmParams {
    LmConfig cfg;
    Matrix token_embeddings;  // V x d
    Matrix positional;        // max_seq_len x d
    Matrix wq, wk, wv, wo;    // d x d
    Matrix w_ff1;             // 4d x d
    Vector b_ff1;             // 4d
    Matrix w_ff2;             // d x 4d
    Vector b_ff2;             // d
    Vector ln1_gain, ln1_bias;
    Vector ln2_gain, ln2_bias;
    Vector lnf_gain, lnf_bias;
    Matrix output_proj;  // V x d

    static LmParams init(const LmConfig& cfg, std::uint64_t seed);
    static LmParams zeros_like(const LmParams& other);

    std::vector<TensorRef> tensors();
    std::vector<TensorRef> tensors() const;  // const view for checksums
    std::uint64_t checksum() const;

    /// Embedding rows for a token sequence (positional vectors are added
    /// inside forward, not here).
    Matrix embed(const IdList& ids) const;
    Vector embed_one(TokenId id) const { return token_embeddings.row(id); }
};

struct LmOutput {
    Matrix logits;         // L x V
    Matrix distributions;  // L x V, rows sum to 1
};

/// Run the block over a sequence of input embeddings (L x d). Position i's
/// distribution depends only on rows <= i.
LmOutput forward(const LmParams& params, const Matrix& embeddings);

Vector next_token_distribution(const LmParams& params, const Matrix& embeddings);

/// Negative log likelihood of `targets` under the model. The inputs must be
/// the prompt embeddings followed by the embeddings of every target token
/// (prompt_len + targets.size() == rows); target i is scored by the output at
/// position prompt_len + i - 1.
double nll(const LmParams& params, const Matrix& embeddings, const IdList& targets,
           int prompt_len);

/// d nll / d embeddings with the parameters held constant.
Matrix grad_wrt_input_embeddings(const LmParams& params, const Matrix& embeddings,
                                 const IdList& targets, int prompt_len);

/// Full reverse pass. Either output may be null; loss_scale multiplies the
/// loss (and hence every gradient). Returns the unscaled nll.
double nll_backward(const LmParams& params, const Matrix& embeddings, const IdList& targets,
                    int prompt_len, double loss_scale, Matrix* input_grad,
                    LmParams* param_grads);

struct PretrainConfig {
    double lr = 1e-3;
    int batch_size = 8;
    int max_epochs = 200;
    int patience = 10;
    double weight_decay = 0.0;  // decoupled decay on matrix-shaped tensors
    /// Train on random crops of each document instead of full documents.
    /// Crops start anywhere, so absolute positions carry no document identity
    /// and sequences may open mid-text the way inference prompts do.
    bool crop_sequences = true;
    int min_crop = 8;
    std::uint64_t seed = 0;
};

struct PretrainReport {
    std::vector<double> train_loss;  // per epoch, mean nats/token
    std::vector<double> val_loss;
    int best_epoch = 0;
    double best_val = 0.0;
};

/// Next-token training over [BOS] doc [EOS] sequences with Adam, stopping
/// when validation loss has not improved for `patience` epochs. The returned
/// parameters are the best-validation snapshot and are frozen from then on.
LmParams pretrain_lm(const std::vector<IdList>& train_docs, const std::vector<IdList>& val_docs,
                     const Vocabulary& vocab, const LmConfig& cfg, const PretrainConfig& pre,
                     PretrainReport* report = nullptr);

}  // namespace brainaug::lm
