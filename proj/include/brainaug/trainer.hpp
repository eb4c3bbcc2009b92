#pragma once

#include "brainaug/brain_decoder.hpp"
#include "brainaug/corpus.hpp"
#include "brainaug/lm.hpp"
#include "brainaug/signals.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace brainaug::trainer {

struct AdamState {
    long step = 0;
    std::vector<Vector> m;
    std::vector<Vector> v;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_tensors(const std::vector<lm::TensorRef>& tensors, double lr);
};

/// One Adam update with bias correction. Throws "divergence" on a non-finite
/// gradient and leaves the parameters untouched in that case.
void adam_step(AdamState& state, const std::vector<lm::TensorRef>& params,
               const std::vector<lm::TensorRef>& grads);

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 8;
    int warmup_epochs = 10;
    int patience = 10;
    int max_epochs = 200;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val = 0.0;
    std::string checkpoint_path;

    std::string to_json() const;
    std::string to_csv() const;
};

/// A training example: the sample's query/continuation token ids plus its
/// brain window.
struct TrainingItem {
    std::string sample_id;
    IdList query_ids;
    IdList continuation_ids;
    signals::BrainWindow window;
};

std::vector<TrainingItem> make_training_items(const std::vector<corpus::QuerySample>& samples,
                                              const std::vector<signals::BrainWindow>& windows,
                                              const lm::Vocabulary& vocab);

/// Distribution-alignment phase: minimizes the warmup MSE for exactly
/// warmup_epochs epochs over seeded mini-batches. Marker embeddings are not
/// part of the objective and stay fixed.
TrainReport run_warmup(decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                       const std::vector<TrainingItem>& train, const TrainConfig& cfg);

/// Next-token phase: minimizes mean per-token NLL of each continuation given
/// the assembled prompt. Gradients flow through the frozen language model
/// into the decoder MLP, position embeddings and marker embeddings; nothing
/// else updates. Early-stops on validation NLL and restores the best epoch
/// (epoch 0 = the untrained decoder). `last_state`, when given, receives the
/// parameters as of the final epoch before the restore.
TrainReport run_prompt_tuning(decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                              const std::vector<TrainingItem>& train,
                              const std::vector<TrainingItem>& validation,
                              const TrainConfig& cfg,
                              decoder::DecoderParams* last_state = nullptr);

/// Mean per-token NLL of the continuations under the brain-conditioned prompt.
double mean_nll(const decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                const std::vector<TrainingItem>& items);

}  // namespace brainaug::trainer
