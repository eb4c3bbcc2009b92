#pragma once

#include "brainaug/lm.hpp"
#include "brainaug/signals.hpp"
#include "brainaug/types.hpp"

#include <cstdint>
#include <vector>

namespace brainaug::decoder {

/// Trainable prompt parameters: per-frame position embeddings, a three-layer
/// MLP (c -> c -> c -> d, ReLU after the first two layers) and the embeddings
/// of the two marker tokens that bracket the brain span.
struct DecoderParams {
    Matrix position_embeddings;  // t x c
    Matrix w1;                   // c x c
    Vector b1;                   // c
    Matrix w2;                   // c x c
    Vector b2;                   // c
    Matrix w3;                   // d x c
    Vector b3;                   // d
    Vector special_begin;        // d
    Vector special_end;          // d

    int t_frames() const { return static_cast<int>(position_embeddings.rows()); }
    int feat_dim() const { return static_cast<int>(w1.cols()); }
    int model_dim() const { return static_cast<int>(w3.rows()); }

    /// MLP weights uniform(-1/sqrt(c), 1/sqrt(c)), position embeddings
    /// uniform(-0.1, 0.1), marker embeddings Gaussian(0, 0.02).
    static DecoderParams init(int t_frames, int feat_dim, int model_dim, std::uint64_t seed);
    static DecoderParams zeros_like(const DecoderParams& other);

    std::vector<lm::TensorRef> tensors();
    /// Everything except the marker embeddings; the warmup objective does not
    /// touch them.
    std::vector<lm::TensorRef> mlp_tensors();
};

/// How prompt positions map back to their parameter owners.
struct PromptLayout {
    int begin_markers = 0;  // 0 or 1
    int t_brain = 0;
    int end_markers = 0;  // 0 or 1
    int n_query = 0;

    int length() const { return begin_markers + t_brain + end_markers + n_query; }
};

struct PromptSequence {
    Matrix vectors;  // length() x d
    PromptLayout layout;
};

/// Frame-wise decode: v_i = W3 relu(W2 relu(W1 (p_i + b_i) + b1) + b2) + b3.
Matrix decode_brain(const DecoderParams& params, const signals::BrainWindow& window);

/// Prompt order: begin marker, t decoded brain vectors, end marker, then the
/// frozen token embeddings of the query. Passing no window yields the
/// query-only layout used by the no-brain control.
PromptSequence assemble_prompt(const DecoderParams& params, const lm::LmParams& lm_params,
                               const signals::BrainWindow* window, const IdList& query_ids);

/// Backpropagate a gradient on the decoded vectors (t x d) into the decoder
/// parameters, accumulating into `grads`.
void decode_brain_backward(const DecoderParams& params, const signals::BrainWindow& window,
                           const Matrix& dvout, DecoderParams& grads);

/// Split a full prompt input-gradient into its owners: the begin/end marker
/// embeddings and (through the MLP) the decoder weights. Gradient rows under
/// the frozen query embeddings are dropped.
void route_prompt_gradient(const DecoderParams& params, const signals::BrainWindow& window,
                           const PromptLayout& layout, const Matrix& dprompt,
                           DecoderParams& grads);

/// Mean squared distance between each decoded frame and the mean query token
/// embedding (summed over coordinates, averaged over frames). The target is a
/// constant: gradients flow into the MLP and position embeddings only.
double warmup_loss(const DecoderParams& params, const lm::LmParams& lm_params,
                   const signals::BrainWindow& window, const IdList& query_ids,
                   DecoderParams* grads);

}  // namespace brainaug::decoder
