#include "brainaug/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace brainaug::ranking {

int RankingIndex::tf(TokenId token, int doc) const {
    const auto& plist = postings[static_cast<std::size_t>(token)];
    auto it = std::lower_bound(plist.begin(), plist.end(), doc,
                               [](const Posting& p, int d) { return p.doc < d; });
    return (it != plist.end() && it->doc == doc) ? it->tf : 0;
}

RankingIndex build_index(const std::vector<corpus::TokenizedDocument>& docs,
                         const lm::Vocabulary& vocab) {
    if (docs.empty()) throw std::invalid_argument("build_index: empty corpus");
    RankingIndex index;
    index.n_docs = static_cast<int>(docs.size());
    index.postings.resize(static_cast<std::size_t>(vocab.size()));
    index.collection_tf.assign(static_cast<std::size_t>(vocab.size()), 0);

    for (const auto& doc : docs) {
        const int d = static_cast<int>(index.doc_ids.size());
        index.doc_index[doc.doc_id] = d;
        index.doc_ids.push_back(doc.doc_id);
        std::map<TokenId, int> counts;
        for (const auto& tok : doc.tokens) ++counts[vocab.id_of(tok)];
        long len = 0;
        for (const auto& [token, tf] : counts) {
            index.postings[static_cast<std::size_t>(token)].push_back({d, tf});
            index.collection_tf[static_cast<std::size_t>(token)] += tf;
            len += tf;
        }
        index.doc_lengths.push_back(len);
        index.total_tokens += len;
    }
    index.avg_doc_len = static_cast<double>(index.total_tokens) / index.n_docs;
    return index;
}

SpanMask SpanMask::for_sample(const RankingIndex& index, const lm::Vocabulary& vocab,
                              const corpus::QuerySample& sample) {
    SpanMask mask;
    auto it = index.doc_index.find(sample.relevant_doc);
    if (it == index.doc_index.end())
        throw std::invalid_argument("mask: document not in index: " + sample.relevant_doc);
    mask.doc = it->second;
    for (const auto& tok : sample.query) ++mask.removed_tf[vocab.id_of(tok)];
    mask.removed_len = static_cast<int>(sample.query.size());
    mask.avg_doc_len =
        static_cast<double>(index.total_tokens - mask.removed_len) / index.n_docs;
    for (const auto& [token, removed] : mask.removed_tf)
        if (index.tf(token, mask.doc) <= removed) mask.df_delta[token] = 1;
    return mask;
}

namespace {

struct MaskedStats {
    double tf = 0.0;
    double len = 0.0;
};

MaskedStats doc_stats(const RankingIndex& index, TokenId token, int doc, const SpanMask* mask) {
    MaskedStats s;
    s.tf = index.tf(token, doc);
    s.len = static_cast<double>(index.doc_lengths[static_cast<std::size_t>(doc)]);
    if (mask && mask->doc == doc) {
        auto it = mask->removed_tf.find(token);
        if (it != mask->removed_tf.end()) s.tf = std::max(0.0, s.tf - it->second);
        s.len = std::max(0.0, s.len - mask->removed_len);
    }
    return s;
}

double rsj_idf(const RankingIndex& index, TokenId token, const SpanMask* mask) {
    const double n = index.n_docs;
    double nw = index.df(token);
    if (mask) {
        auto it = mask->df_delta.find(token);
        if (it != mask->df_delta.end()) nw -= it->second;
    }
    return std::log((n - nw + 0.5) / (nw + 0.5) + 1.0);
}

double bm25_term(const RankingIndex& index, TokenId token, int doc, const Bm25Params& params,
                 const SpanMask* mask) {
    const MaskedStats s = doc_stats(index, token, doc, mask);
    if (s.tf <= 0.0) return 0.0;
    const double avgdl = mask ? mask->avg_doc_len : index.avg_doc_len;
    const double norm = params.k1 * (1.0 - params.b + params.b * s.len / avgdl);
    return rsj_idf(index, token, mask) * s.tf * (params.k1 + 1.0) / (s.tf + norm);
}

RankedList rank_impl(const RankingIndex& index, const WeightedQuery& query, int k,
                     const Bm25Params& params, const SpanMask* mask) {
    if (k < 1) throw std::invalid_argument("rank: k must be >= 1");
    RankedList scored(static_cast<std::size_t>(index.n_docs));
    for (int d = 0; d < index.n_docs; ++d) {
        double score = 0.0;
        for (const auto& [token, weight] : query)
            score += weight * bm25_term(index, token, d, params, mask);
        scored[static_cast<std::size_t>(d)] = {index.doc_ids[static_cast<std::size_t>(d)], score};
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
    return scored;
}

WeightedQuery to_weighted(const IdList& query) {
    WeightedQuery w;
    for (TokenId t : query) w.emplace_back(t, 1.0);
    return w;
}

}  // namespace

double bm25_score(const RankingIndex& index, const IdList& query, int doc,
                  const Bm25Params& params, const SpanMask* mask) {
    double score = 0.0;
    for (TokenId t : query) score += bm25_term(index, t, doc, params, mask);
    return score;
}

RankedList rank(const RankingIndex& index, const IdList& query, int k, const Bm25Params& params,
                const SpanMask* mask) {
    return rank_impl(index, to_weighted(query), k, params, mask);
}

RankedList rank_weighted(const RankingIndex& index, const WeightedQuery& query, int k,
                         const Bm25Params& params, const SpanMask* mask) {
    return rank_impl(index, query, k, params, mask);
}

WeightedQuery rm3_expand(const RankingIndex& index, const IdList& query, const Rm3Params& rm3,
                         const Bm25Params& bm25, const SpanMask* mask) {
    if (rm3.fb_docs < 1 || rm3.fb_terms < 1) throw std::invalid_argument("rm3: bad parameters");
    if (rm3.lambda < 0.0 || rm3.lambda > 1.0)
        throw std::invalid_argument("rm3: lambda must be in [0, 1]");

    // original query model: term frequency within the query
    WeightedQuery original;
    {
        std::map<TokenId, int> counts;
        for (TokenId t : query) ++counts[t];
        for (const auto& [t, c] : counts)
            original.emplace_back(t, static_cast<double>(c) / static_cast<double>(query.size()));
    }

    RankedList top = rank(index, query, rm3.fb_docs, bm25, mask);
    while (!top.empty() && top.back().score <= 0.0) top.pop_back();
    if (top.empty()) return original;

    // softmax of BM25 scores as document weights
    double max_score = top.front().score;
    double z = 0.0;
    std::vector<double> doc_weight(top.size());
    for (std::size_t i = 0; i < top.size(); ++i) {
        doc_weight[i] = std::exp(top[i].score - max_score);
        z += doc_weight[i];
    }

    std::map<TokenId, double> relevance;  // P(w|R)
    for (std::size_t i = 0; i < top.size(); ++i) {
        const int d = index.doc_index.at(top[i].doc_id);
        const double w_doc = doc_weight[i] / z;
        const double len = mask && mask->doc == d
                               ? std::max(1.0, static_cast<double>(index.doc_lengths[static_cast<std::size_t>(d)]) -
                                                   mask->removed_len)
                               : static_cast<double>(index.doc_lengths[static_cast<std::size_t>(d)]);
        for (TokenId token = 0; token < static_cast<TokenId>(index.postings.size()); ++token) {
            const MaskedStats s = doc_stats(index, token, d, mask);
            if (s.tf > 0.0) relevance[token] += w_doc * s.tf / len;
        }
    }

    // keep the top fb_terms, ties by token id ascending
    std::vector<std::pair<TokenId, double>> terms(relevance.begin(), relevance.end());
    std::stable_sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(terms.size()) > rm3.fb_terms)
        terms.resize(static_cast<std::size_t>(rm3.fb_terms));
    double kept_mass = 0.0;
    for (const auto& [t, p] : terms) kept_mass += p;

    std::map<TokenId, double> blended;
    for (const auto& [t, p] : original)
        if (rm3.lambda > 0.0) blended[t] += rm3.lambda * p;
    if (kept_mass > 0.0 && rm3.lambda < 1.0)
        for (const auto& [t, p] : terms) blended[t] += (1.0 - rm3.lambda) * p / kept_mass;

    return WeightedQuery(blended.begin(), blended.end());
}

double ndcg_at_k(const RankedList& ranked, const std::set<std::string>& judged, int k) {
    if (judged.empty()) throw std::invalid_argument("ndcg: empty judgment set");
    if (k < 1) throw std::invalid_argument("ndcg: k must be >= 1");
    double dcg = 0.0;
    for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(k); ++i)
        if (judged.count(ranked[i].doc_id))
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(judged.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

double recall_at_k(const RankedList& ranked, const std::set<std::string>& judged, int k) {
    if (judged.empty()) throw std::invalid_argument("recall: empty judgment set");
    int hits = 0;
    for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(k); ++i)
        if (judged.count(ranked[i].doc_id)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(judged.size());
}

double average_precision(const RankedList& ranked, const std::set<std::string>& judged) {
    if (judged.empty()) throw std::invalid_argument("ap: empty judgment set");
    double ap = 0.0;
    int hits = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (judged.count(ranked[i].doc_id)) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return ap / static_cast<double>(judged.size());
}

std::string run_file_lines(const std::string& sample_id, const RankedList& ranked,
                           const std::string& tag) {
    std::ostringstream out;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        out << sample_id << " Q0 " << ranked[i].doc_id << ' ' << (i + 1) << ' ';
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", ranked[i].score);
        out << buf << ' ' << tag << '\n';
    }
    return out.str();
}

std::string qrels_line(const std::string& sample_id, const std::string& doc_id) {
    return sample_id + " " + doc_id + " 1\n";
}

}  // namespace brainaug::ranking
