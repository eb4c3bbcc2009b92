#pragma once

#include "brainaug/corpus.hpp"
#include "brainaug/lm.hpp"
#include "brainaug/types.hpp"

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace brainaug::ranking {

struct Posting {
    int doc = 0;  // dense document index
    int tf = 0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Inverted index over vocabulary ids with the lengths and frequencies BM25,
/// RM3 and the query-feature scores need.
struct RankingIndex {
    std::vector<std::string> doc_ids;
    std::map<std::string, int> doc_index;
    std::vector<std::vector<Posting>> postings;  // token id -> postings
    std::vector<long> doc_lengths;
    std::vector<long> collection_tf;  // token id -> total occurrences
    long total_tokens = 0;
    double avg_doc_len = 0.0;
    int n_docs = 0;

    int df(TokenId token) const {
        return static_cast<int>(postings[static_cast<std::size_t>(token)].size());
    }
    int tf(TokenId token, int doc) const;
};

RankingIndex build_index(const std::vector<corpus::TokenizedDocument>& docs,
                         const lm::Vocabulary& vocab);

/// Query-span overlay for the inverse-cloze evaluation convention: the
/// relevant document is scored as if its query span were removed, every other
/// document is scored whole. The overlay reproduces a full rebuild with the
/// masked document variant, including the document-frequency drop when the
/// span removes a term's last occurrence and the shorter average length.
struct SpanMask {
    int doc = -1;
    std::map<TokenId, int> removed_tf;
    std::map<TokenId, int> df_delta;
    int removed_len = 0;
    double avg_doc_len = 0.0;

    static SpanMask for_sample(const RankingIndex& index, const lm::Vocabulary& vocab,
                               const corpus::QuerySample& sample);
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

/// Descending score, ties broken by doc_id ascending.
using RankedList = std::vector<ScoredDoc>;

using WeightedQuery = std::vector<std::pair<TokenId, double>>;

double bm25_score(const RankingIndex& index, const IdList& query, int doc,
                  const Bm25Params& params = {}, const SpanMask* mask = nullptr);

RankedList rank(const RankingIndex& index, const IdList& query, int k,
                const Bm25Params& params = {}, const SpanMask* mask = nullptr);

RankedList rank_weighted(const RankingIndex& index, const WeightedQuery& query, int k,
                         const Bm25Params& params = {}, const SpanMask* mask = nullptr);

struct Rm3Params {
    int fb_docs = 10;
    int fb_terms = 10;
    double lambda = 0.5;
};

/// RM3 pseudo-relevance feedback: a relevance model built from the softmax-
/// weighted top-ranked documents, interpolated with the original query terms.
WeightedQuery rm3_expand(const RankingIndex& index, const IdList& query, const Rm3Params& rm3,
                         const Bm25Params& bm25 = {}, const SpanMask* mask = nullptr);

/// Binary-gain NDCG with discount 1/log2(rank+1), rank starting at 1.
double ndcg_at_k(const RankedList& ranked, const std::set<std::string>& judged, int k);
double recall_at_k(const RankedList& ranked, const std::set<std::string>& judged, int k);
/// Average precision for one query; the MAP aggregation is a plain mean.
double average_precision(const RankedList& ranked, const std::set<std::string>& judged);

/// TREC-style run lines: `sample_id Q0 doc_id rank score tag`.
std::string run_file_lines(const std::string& sample_id, const RankedList& ranked,
                           const std::string& tag);
std::string qrels_line(const std::string& sample_id, const std::string& doc_id);

}  // namespace brainaug::ranking
