#pragma once

#include "brainaug/corpus.hpp"
#include "brainaug/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace brainaug::signals {

/// A full recording session: T frames by C raw feature dimensions.
struct SignalSession {
    std::string session_id;
    Matrix features;
    double tr_seconds = 2.0;
};

/// The per-sample slice of brain activity fed to the decoder: t frames by c
/// feature dimensions.
struct BrainWindow {
    Matrix matrix;
    std::string sample_ref;

    Eigen::Index t_frames() const { return matrix.rows(); }
    Eigen::Index feat_dim() const { return matrix.cols(); }
};

struct PcaModel {
    Vector mean;                // C
    Matrix components;          // k x C, orthonormal rows
    Vector explained_variance;  // k, non-increasing
};

/// Principal directions of the mean-centered data, via cyclic Jacobi sweeps on
/// the sample covariance (divisor N-1). Components follow a deterministic sign
/// convention: the largest-magnitude entry of each component is positive.
PcaModel fit_pca(const Matrix& data, int k);

/// Project rows of `data` onto the model's components after centering.
Matrix apply_pca(const PcaModel& model, const Matrix& data);

using EmbedLookup = std::function<Vector(const std::string& token)>;

/// Synthetic windows with controllable semantic content: every frame is
/// informativeness * (W_proj * s) + Gaussian noise, where s is the mean
/// embedding of the sample's query-plus-continuation tokens and W_proj is a
/// fixed seeded c x d projection shared across the dataset. delay_frames is
/// kept for interface parity with session windowing and does not enter the
/// synthesis.
std::vector<BrainWindow> synthesize_signals(const std::vector<corpus::QuerySample>& samples,
                                            const EmbedLookup& embed, int embed_dim, int c,
                                            double noise_sigma, double informativeness,
                                            int delay_frames, int t_frames, std::uint64_t seed);

/// Rows [onset+delay, onset+delay+t) of the session matrix.
BrainWindow cut_window(const SignalSession& session, int onset_frame, int delay_frames,
                       int t_frames);

/// Permute the window <-> sample assignment, preferring a derangement:
/// permutations are redrawn until none keeps its slot, for up to 100 tries.
std::vector<BrainWindow> shuffle_windows(const std::vector<BrainWindow>& windows,
                                         std::uint64_t seed);

/// Deterministic Gaussian token embedding table used when synthesizing
/// semantic content for signals.
EmbedLookup make_seeded_embedding(int dim, std::uint64_t seed);

}  // namespace brainaug::signals
