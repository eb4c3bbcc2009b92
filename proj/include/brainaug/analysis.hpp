#pragma once

#include "brainaug/augment.hpp"
#include "brainaug/brain_decoder.hpp"
#include "brainaug/lm.hpp"
#include "brainaug/ranking.hpp"
#include "brainaug/signals.hpp"
#include "brainaug/types.hpp"

#include <string>
#include <vector>

namespace brainaug::analysis {

struct GenerationEval {
    std::string sample_id;
    std::string condition;
    double log_ppl = 0.0;  // nats per token
    double rouge_l = 0.0;
};

struct QueryFeatures {
    std::string sample_id;
    double avg_ictf = 0.0;
    double avg_idf = 0.0;
    double specificity = 0.0;
    double clarity = 0.0;
};

/// Mean per-token negative log likelihood of the ground-truth continuation
/// under the prompt of the given condition. Passing a null window scores the
/// query-only prompt.
double log_perplexity(const lm::LmParams& lm_params, const decoder::DecoderParams* dec,
                      const signals::BrainWindow* window, const IdList& query_ids,
                      const IdList& ground_truth);

/// LCS-based F1 between candidate and reference token sequences.
double rouge_l(const TokenList& candidate, const TokenList& reference);

/// Mean over query tokens of ln(collection size / collection term frequency);
/// unseen terms clamp the frequency to 1.
double avg_ictf(const IdList& query, const ranking::RankingIndex& index);

/// Mean over query tokens of ln(N / N_w) with the same clamp as the IDF table.
double avg_idf(const IdList& query, const ranking::RankingIndex& index);

/// KL divergence of the query's term distribution from the collection's.
double specificity(const IdList& query, const ranking::RankingIndex& index);

/// KL divergence between the smoothed language model of the top-k retrieved
/// documents and the collection model. Returns 0 (with no retrievable docs)
/// when the retrieval comes back empty.
double clarity(const IdList& query, const ranking::RankingIndex& index, int k_docs,
               double smoothing, const ranking::Bm25Params& bm25 = {},
               const ranking::SpanMask* mask = nullptr);

double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// Two-sided paired t-test; the p value comes from the Student-t CDF
/// evaluated through the regularized incomplete beta function.
struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    int dof = 0;
};
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta I_x(a, b); exposed for the significance tests.
double incomplete_beta(double a, double b, double x);

struct BucketRow {
    int bucket = 0;
    double feature_lo = 0.0;
    double feature_hi = 0.0;
    int count = 0;
    std::vector<double> means;  // one per metric column
};

/// Equal-count quantile buckets over one feature; each row carries per-bucket
/// means of the metric columns. Throws on a constant feature.
std::vector<BucketRow> bucket_report(const std::vector<double>& feature,
                                     const std::vector<std::vector<double>>& metrics,
                                     int n_buckets);

std::string bucket_report_csv(const std::vector<BucketRow>& rows,
                              const std::vector<std::string>& metric_names);

}  // namespace brainaug::analysis
