#pragma once

#include "brainaug/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace brainaug::corpus {

/// One time frame of the stimulus stream and the tokens presented during it.
struct TrFrame {
    int index = 0;
    TokenList tokens;
};

struct TokenizedDocument {
    std::string doc_id;
    std::vector<TrFrame> frames;
    TokenList tokens;  // concatenation of the frame token lists
};

/// A pseudo query/continuation pair cut out of one document, plus the offsets
/// needed to reconstruct the document from its masked form.
struct QuerySample {
    std::string sample_id;
    TokenList query;
    TokenList continuation;
    std::string relevant_doc;
    TokenList masked_doc;  // relevant document with the query span removed
    std::size_t query_offset = 0;  // start of the query span in the document tokens
    std::string brain_ref;
    int fold = -1;
};

struct FoldSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

/// Lowercase, strip punctuation (treated as separators), split on whitespace.
TokenList tokenize(const std::string& text);

/// Split a raw text blob into sentence frames at . ? ! boundaries.
std::vector<TrFrame> split_into_sentence_frames(const std::string& text);

/// Load frames from a plain-text file (one frame per line, blank line starts
/// a new session; frame indices restart per session) or from JSONL records
/// {"frame": int, "text": str}.
std::vector<TrFrame> load_frames_text(const std::string& path);
std::vector<TrFrame> load_frames_jsonl(const std::string& path);

/// Group consecutive frames into documents of `frames_per_doc` frames. A
/// trailing remainder shorter than frames_per_doc/2 is dropped, otherwise it
/// becomes a short final document.
std::vector<TokenizedDocument> segment_documents(const std::vector<TrFrame>& frames,
                                                 int frames_per_doc);

/// Two samples per sentence unit (frame): first third as query with the middle
/// third as continuation, and the first two thirds as query with the rest as
/// continuation. Sentences with fewer than 3 tokens are skipped and counted.
std::vector<QuerySample> extract_ict_sentence_style(const TokenizedDocument& doc,
                                                    int* skipped = nullptr);

/// One sample per frame past the window: the frame's tokens are the
/// continuation, the preceding `window_trs` frames are the query.
std::vector<QuerySample> extract_ict_sliding(const TokenizedDocument& doc, int window_trs,
                                             int* skipped = nullptr);

/// Shuffle documents with the seed, deal them round-robin into folds, and
/// assign each sample its document's fold. For evaluation fold f the test set
/// is fold f, validation is fold (f+1) mod n, the rest train.
std::vector<FoldSplit> split_folds(std::vector<QuerySample>& samples,
                                   const std::vector<TokenizedDocument>& docs, int n_folds,
                                   std::uint64_t seed);

/// Sample k query terms without replacement, preserving their original order.
TokenList sample_query_terms(const TokenList& query, int k, std::uint64_t seed);

/// JSONL round trip for stage artifacts. Loaded samples carry offsets only;
/// rebind_masked_docs recomputes each masked_doc from its document.
std::string documents_to_jsonl(const std::vector<TokenizedDocument>& docs);
std::vector<TokenizedDocument> documents_from_jsonl(const std::string& text);
std::string samples_to_jsonl(const std::vector<QuerySample>& samples);
std::vector<QuerySample> samples_from_jsonl(const std::string& text);
void rebind_masked_docs(std::vector<QuerySample>& samples,
                        const std::vector<TokenizedDocument>& docs);

}  // namespace brainaug::corpus
