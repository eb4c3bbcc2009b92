#pragma once

#include "brainaug/brain_decoder.hpp"
#include "brainaug/lm.hpp"
#include "brainaug/ranking.hpp"
#include "brainaug/signals.hpp"
#include "brainaug/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace brainaug::augment {

/// ln(N / N_w) per vocabulary token. Tokens absent from every document have
/// N_w clamped to 1 and therefore carry the maximal value; tokens present in
/// all documents score 0.
struct IdfTable {
    Vector values;
    int n_docs = 0;
    std::vector<int> df;
};

IdfTable build_idf(const ranking::RankingIndex& index);

/// (P_LM + alpha * IDF) renormalized over the vocabulary.
Vector blend_distribution(const Vector& p_lm, const IdfTable& idf, double alpha);

enum class Condition { brain, no_brain, rs_brain, no_idf };

std::string condition_name(Condition c);
Condition condition_from_name(const std::string& name);

struct GenerateConfig {
    double alpha = 0.1;
    int beam_width = 5;
    int max_new_tokens = 5;
    /// Mean per-token perplexity bound on generated content, measured under
    /// the model likelihood; 0 disables the stop rule.
    double ppl_stop = 1.5;
    Condition condition = Condition::brain;
};

struct AugmentedQuery {
    std::string sample_id;
    TokenList original;
    TokenList continuation;
    Condition condition = Condition::brain;
    double beam_score = 0.0;  // sum of blended log probabilities
};

/// Beam search over the blended distribution. Beams finalize on EOS (the EOS
/// term enters the score, the token is dropped from the output), when the
/// running mean perplexity of their generated content exceeds ppl_stop (the
/// offending token is rolled back), or at max_new_tokens. The best finalized
/// beam wins; ties break toward earlier completion, then lexicographically
/// smaller token ids. `window` must be null exactly when the condition takes
/// no brain input.
AugmentedQuery generate_continuation(const lm::LmParams& lm_params,
                                     const decoder::DecoderParams* dec,
                                     const signals::BrainWindow* window, const IdList& query_ids,
                                     const lm::Vocabulary& vocab, const IdfTable& idf,
                                     const GenerateConfig& cfg,
                                     const std::string& sample_id = "");

std::string augmented_to_jsonl(const std::vector<AugmentedQuery>& queries);
std::vector<AugmentedQuery> augmented_from_jsonl(const std::string& text);

}  // namespace brainaug::augment
