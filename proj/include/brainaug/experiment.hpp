#pragma once

#include "brainaug/augment.hpp"
#include "brainaug/config.hpp"
#include "brainaug/corpus.hpp"
#include "brainaug/lm.hpp"
#include "brainaug/ranking.hpp"
#include "brainaug/signals.hpp"
#include "brainaug/trainer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace brainaug::experiment {

/// Topical corpus with a shared function-word bed, per-topic content words,
/// and rare "entity" words drawn per document from a global pool (documents
/// are distinguishable the way sentences about named things are).
struct SynthCorpusParams {
    int n_docs = 80;
    int n_topics = 10;
    int sentence_len_min = 8;
    int sentence_len_max = 10;
    int content_words_per_topic = 24;
    int function_words = 12;
    double function_prob = 0.3;
    int entity_pool = 240;
    int entities_per_doc = 5;
    double entity_prob = 0.25;
};

/// One experiment = one config file. Defaults follow the reference training
/// protocol (Adam lr 1e-4, batch 8, ten warmup epochs, patience ten, beam
/// width 5, at most five expansion tokens).
struct ExperimentConfig {
    // corpus
    std::string corpus_source = "synthetic";  // synthetic | text | jsonl
    std::string corpus_path;
    std::string ict_style = "sentence";  // sentence | sliding
    int frames_per_doc = 3;
    int window_trs = 2;
    int min_freq = 1;
    SynthCorpusParams synth;

    // signals
    std::string signals_mode = "synthetic";  // synthetic | file
    std::string signals_path;
    int raw_feat_dim = 32;
    int t_frames = 4;
    int delay_frames = 2;
    double noise_sigma = 0.5;
    double informativeness = 0.8;
    int embed_dim = 16;
    bool idf_weight = true;    // scale token embeddings by idf when synthesizing
    double idf_power = 1.0;
    std::string feature_mask;  // optional column subset, e.g. "0-15,20"
    int pca_k = 0;             // 0 = off, -1 = auto (min(64, rank))

    // lm
    int d_model = 64;
    int max_seq_len = 128;
    double lm_lr = 1e-3;
    int lm_batch = 8;
    int lm_max_epochs = 120;
    int lm_patience = 8;

    // train
    trainer::TrainConfig train;
    bool lr_select = false;  // pick lr from {1e-3, 1e-4, 1e-5} on validation

    // infer
    augment::GenerateConfig infer;

    // rank
    ranking::Bm25Params bm25;
    ranking::Rm3Params rm3;
    int top_k = 100;
    int sample_terms = 0;  // 0 = rank with the full original query

    // analyze (ranking metrics are fixed: NDCG@10/20, Recall@20, MAP)
    int clarity_docs = 10;
    double clarity_smoothing = 0.1;
    int n_buckets = 4;

    // run
    int n_folds = 5;
    std::uint64_t seed = 7;
    std::vector<std::uint64_t> seeds;  // defaults to {seed}
    std::string out_dir = "out";

    static ExperimentConfig from_config(const ConfigFile& file);
    static ExperimentConfig from_file(const std::string& path);
    ConfigFile to_config() const;
    std::uint64_t hash() const { return to_config().hash(); }
    std::vector<std::uint64_t> effective_seeds() const {
        return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
    }
};

/// A documented config template with every key at its default.
std::string default_config_text();

/// Seeded topical corpus: one sentence per frame, shared function words plus
/// per-topic content vocabularies, `frames_per_doc` sentences per document.
std::vector<corpus::TrFrame> generate_synthetic_frames(const SynthCorpusParams& params,
                                                       int frames_per_doc, std::uint64_t seed);

/// Everything derived from one seed's corpus stage.
struct Dataset {
    std::vector<corpus::TokenizedDocument> docs;
    std::vector<corpus::QuerySample> samples;
    std::vector<corpus::FoldSplit> folds;
    lm::Vocabulary vocab;
};

Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

std::vector<signals::BrainWindow> build_windows(const ExperimentConfig& cfg, const Dataset& data,
                                                std::uint64_t seed,
                                                signals::PcaModel* pca_out = nullptr);

/// Conditions reported in the final tables.
inline const std::vector<std::string>& all_conditions() {
    static const std::vector<std::string> kAll = {"original", "unsup",    "brain",  "brain_unsup",
                                                  "no_brain", "rs_brain", "no_idf"};
    return kAll;
}

struct SampleMetrics {
    std::uint64_t seed = 0;
    int fold = -1;
    std::string sample_id;
    std::string condition;
    bool has_generation = false;
    double log_ppl = 0.0;
    double rouge_l = 0.0;
    double ndcg10 = 0.0;
    double ndcg20 = 0.0;
    double recall20 = 0.0;
    double ap = 0.0;
};

struct ExperimentResult {
    std::vector<SampleMetrics> rows;
    std::string out_dir;

    std::vector<double> metric_values(const std::string& condition,
                                      const std::string& metric) const;
    /// Paired vectors over (seed, sample) keys present for both conditions.
    std::pair<std::vector<double>, std::vector<double>> paired_metric(
        const std::string& cond_a, const std::string& cond_b, const std::string& metric) const;
    double mean_metric(const std::string& condition, const std::string& metric) const;
    double mean_metric_for_seed(std::uint64_t seed, const std::string& condition,
                                const std::string& metric) const;
};

using Progress = std::function<void(const std::string&)>;

/// Stage drivers. Each one validates its inputs, skips work whose outputs are
/// already recorded under the current config hash, and fails on artifacts left
/// behind by a different config.
void stage_build_corpus(const ExperimentConfig& cfg, std::uint64_t seed);
void stage_synth_signals(const ExperimentConfig& cfg, std::uint64_t seed);
void stage_train_lm(const ExperimentConfig& cfg, std::uint64_t seed, int fold);
void stage_train_decoder(const ExperimentConfig& cfg, std::uint64_t seed, int fold);
void stage_augment(const ExperimentConfig& cfg, std::uint64_t seed, int fold,
                   const std::string& condition_filter = "");
void stage_rank(const ExperimentConfig& cfg, std::uint64_t seed, int fold);
void stage_evaluate(const ExperimentConfig& cfg, std::uint64_t seed);
void stage_analyze(const ExperimentConfig& cfg, std::uint64_t seed);

/// The full cross-validated experiment over every configured seed, fold and
/// condition; emits the pooled metric tables and the manifest.
ExperimentResult run_all(const ExperimentConfig& cfg, const Progress& progress = nullptr);

/// Re-read a finished run's pooled per-sample table.
ExperimentResult load_result(const ExperimentConfig& cfg);

}  // namespace brainaug::experiment
