#include "brainaug/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace brainaug::analysis {

double log_perplexity(const lm::LmParams& lm_params, const decoder::DecoderParams* dec,
                      const signals::BrainWindow* window, const IdList& query_ids,
                      const IdList& ground_truth) {
    if (ground_truth.empty()) throw std::invalid_argument("log_perplexity: empty ground truth");

    decoder::PromptSequence prompt;
    if (window != nullptr) {
        if (dec == nullptr) throw std::invalid_argument("log_perplexity: window without decoder");
        prompt = decoder::assemble_prompt(*dec, lm_params, window, query_ids);
    } else {
        decoder::DecoderParams unused;
        prompt = decoder::assemble_prompt(unused, lm_params, nullptr, query_ids);
    }
    const int s = prompt.layout.length();
    const int k = static_cast<int>(ground_truth.size());
    Matrix inputs(s + k, lm_params.cfg.d_model);
    inputs.topRows(s) = prompt.vectors;
    inputs.bottomRows(k) = lm_params.embed(ground_truth);
    return lm::nll(lm_params, inputs, ground_truth, s) / static_cast<double>(k);
}

double rouge_l(const TokenList& candidate, const TokenList& reference) {
    if (reference.empty()) throw std::invalid_argument("rouge_l: empty reference");
    if (candidate.empty()) return 0.0;

    const std::size_t n = candidate.size(), m = reference.size();
    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            lcs[i][j] = candidate[i - 1] == reference[j - 1]
                            ? lcs[i - 1][j - 1] + 1
                            : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    const double l = lcs[n][m];
    if (l == 0.0) return 0.0;
    const double precision = l / static_cast<double>(n);
    const double recall = l / static_cast<double>(m);
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

double collection_tf_clamped(const ranking::RankingIndex& index, TokenId token) {
    return static_cast<double>(std::max<long>(index.collection_tf[static_cast<std::size_t>(token)], 1));
}

}  // namespace

double avg_ictf(const IdList& query, const ranking::RankingIndex& index) {
    if (query.empty()) throw std::invalid_argument("avg_ictf: empty query");
    double total = 0.0;
    for (TokenId t : query)
        total += std::log(static_cast<double>(index.total_tokens) / collection_tf_clamped(index, t));
    return total / static_cast<double>(query.size());
}

double avg_idf(const IdList& query, const ranking::RankingIndex& index) {
    if (query.empty()) throw std::invalid_argument("avg_idf: empty query");
    double total = 0.0;
    for (TokenId t : query) {
        const int df = std::max(index.df(t), 1);
        total += std::log(static_cast<double>(index.n_docs) / df);
    }
    return total / static_cast<double>(query.size());
}

double specificity(const IdList& query, const ranking::RankingIndex& index) {
    if (query.empty()) throw std::invalid_argument("specificity: empty query");
    std::map<TokenId, int> counts;
    for (TokenId t : query) ++counts[t];
    const double q_len = static_cast<double>(query.size());
    const double floor_p =
        1.0 / static_cast<double>(index.total_tokens + static_cast<long>(index.postings.size()));
    double kl = 0.0;
    for (const auto& [token, count] : counts) {
        const double p_q = count / q_len;
        const long cf = index.collection_tf[static_cast<std::size_t>(token)];
        const double p_d =
            cf > 0 ? static_cast<double>(cf) / static_cast<double>(index.total_tokens) : floor_p;
        kl += p_q * std::log(p_q / p_d);
    }
    return kl;
}

double clarity(const IdList& query, const ranking::RankingIndex& index, int k_docs,
               double smoothing, const ranking::Bm25Params& bm25,
               const ranking::SpanMask* mask) {
    if (k_docs < 1) throw std::invalid_argument("clarity: k_docs must be >= 1");
    ranking::RankedList top = ranking::rank(index, query, k_docs, bm25, mask);
    while (!top.empty() && top.back().score <= 0.0) top.pop_back();
    if (top.empty()) return 0.0;

    // uniform mixture of Jelinek-Mercer smoothed document models
    std::map<TokenId, double> mixture;
    const double w_doc = 1.0 / static_cast<double>(top.size());
    for (const auto& sd : top) {
        const int d = index.doc_index.at(sd.doc_id);
        const double len = static_cast<double>(index.doc_lengths[static_cast<std::size_t>(d)]);
        for (TokenId token = 0; token < static_cast<TokenId>(index.postings.size()); ++token) {
            const int tf = index.tf(token, d);
            if (tf > 0) mixture[token] += w_doc * (1.0 - smoothing) * tf / len;
        }
    }
    double kl = 0.0;
    for (TokenId token = 0; token < static_cast<TokenId>(index.postings.size()); ++token) {
        const long cf = index.collection_tf[static_cast<std::size_t>(token)];
        if (cf <= 0) continue;
        const double p_coll = static_cast<double>(cf) / static_cast<double>(index.total_tokens);
        double p_top = smoothing * p_coll;
        auto it = mixture.find(token);
        if (it != mixture.end()) p_top += it->second;
        if (p_top > 0.0) kl += p_top * std::log(p_top / p_coll);
    }
    return kl;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3)
        throw std::invalid_argument("pearson_r: need matched lists of length >= 3");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw std::runtime_error("pearson_r: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

namespace {

/// Continued-fraction core of the incomplete beta function.
double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x out of range");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 3)
        throw std::invalid_argument("paired_t_test: need matched lists of length >= 3");
    const std::size_t n = a.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(n - 1);
    if (var <= 0.0) throw std::runtime_error("paired_t_test: zero variance of differences");

    TTestResult res;
    res.dof = static_cast<int>(n) - 1;
    res.t = mean / std::sqrt(var / static_cast<double>(n));
    const double nu = static_cast<double>(res.dof);
    res.p = incomplete_beta(nu / 2.0, 0.5, nu / (nu + res.t * res.t));
    return res;
}

std::vector<BucketRow> bucket_report(const std::vector<double>& feature,
                                     const std::vector<std::vector<double>>& metrics,
                                     int n_buckets) {
    if (n_buckets < 2) throw std::invalid_argument("bucket_report: n_buckets must be >= 2");
    const std::size_t n = feature.size();
    if (static_cast<int>(n) < n_buckets)
        throw std::invalid_argument("bucket_report: fewer samples than buckets");
    for (const auto& col : metrics)
        if (col.size() != n) throw std::invalid_argument("bucket_report: ragged metric column");
    const auto [mn, mx] = std::minmax_element(feature.begin(), feature.end());
    if (*mn == *mx) throw std::runtime_error("bucket_report: degenerate quantiles");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return feature[i] < feature[j]; });

    std::vector<BucketRow> rows;
    const std::size_t base = n / static_cast<std::size_t>(n_buckets);
    const std::size_t extra = n % static_cast<std::size_t>(n_buckets);
    std::size_t pos = 0;
    for (int bucket = 0; bucket < n_buckets; ++bucket) {
        const std::size_t size = base + (static_cast<std::size_t>(bucket) < extra ? 1 : 0);
        BucketRow row;
        row.bucket = bucket;
        row.count = static_cast<int>(size);
        row.feature_lo = feature[order[pos]];
        row.feature_hi = feature[order[pos + size - 1]];
        row.means.assign(metrics.size(), 0.0);
        for (std::size_t i = pos; i < pos + size; ++i)
            for (std::size_t m = 0; m < metrics.size(); ++m) row.means[m] += metrics[m][order[i]];
        for (auto& v : row.means) v /= static_cast<double>(size);
        rows.push_back(std::move(row));
        pos += size;
    }
    return rows;
}

std::string bucket_report_csv(const std::vector<BucketRow>& rows,
                              const std::vector<std::string>& metric_names) {
    std::ostringstream out;
    out << "bucket,feature_lo,feature_hi,count";
    for (const auto& name : metric_names) out << ',' << name;
    out << '\n';
    for (const auto& row : rows) {
        out << row.bucket << ',' << row.feature_lo << ',' << row.feature_hi << ',' << row.count;
        for (double m : row.means) out << ',' << m;
        out << '\n';
    }
    return out.str();
}

}  // namespace brainaug::analysis
