#include "brainaug/augment.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace brainaug::augment {

IdfTable build_idf(const ranking::RankingIndex& index) {
    if (index.n_docs < 1) throw std::invalid_argument("build_idf: empty index");
    IdfTable table;
    table.n_docs = index.n_docs;
    table.df.resize(index.postings.size());
    table.values.resize(static_cast<Eigen::Index>(index.postings.size()));
    for (std::size_t t = 0; t < index.postings.size(); ++t) {
        const int df = static_cast<int>(index.postings[t].size());
        table.df[t] = df;
        const int clamped = std::max(df, 1);
        table.values(static_cast<Eigen::Index>(t)) =
            std::log(static_cast<double>(index.n_docs) / clamped);
    }
    return table;
}

Vector blend_distribution(const Vector& p_lm, const IdfTable& idf, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("blend_distribution: alpha must be >= 0");
    if (p_lm.size() != idf.values.size())
        throw std::invalid_argument("blend_distribution: vocabulary size mismatch");
    if (std::abs(p_lm.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("blend_distribution: input is not a distribution");
    Vector u = p_lm + alpha * idf.values;
    return u / u.sum();
}

std::string condition_name(Condition c) {
    switch (c) {
        case Condition::brain: return "brain";
        case Condition::no_brain: return "no_brain";
        case Condition::rs_brain: return "rs_brain";
        case Condition::no_idf: return "no_idf";
    }
    throw std::logic_error("unknown condition");
}

Condition condition_from_name(const std::string& name) {
    if (name == "brain") return Condition::brain;
    if (name == "no_brain") return Condition::no_brain;
    if (name == "rs_brain") return Condition::rs_brain;
    if (name == "no_idf") return Condition::no_idf;
    throw std::invalid_argument("unknown condition: " + name);
}

namespace {

struct Beam {
    IdList tokens;
    double score = 0.0;        // sum of blended log probabilities
    double sum_log_plm = 0.0;  // model log likelihood of the generated content
};

struct Finalized {
    IdList tokens;
    double score = 0.0;
    int completed_step = 0;
};

/// A proposed beam-search step: either an extension that stays alive, or a
/// completion (EOS emitted, or the beam rolled back by the perplexity rule).
/// Completions compete for beam slots like any extension, which is what makes
/// width-1 search coincide with greedy decoding.
struct Candidate {
    Beam beam;       // state after the step (for completions: the final state)
    bool final_now = false;
    bool operator<(const Candidate& other) const {
        if (beam.score != other.beam.score) return beam.score > other.beam.score;
        if (final_now != other.final_now) return final_now < other.final_now;
        return std::lexicographical_compare(beam.tokens.begin(), beam.tokens.end(),
                                            other.beam.tokens.begin(), other.beam.tokens.end());
    }
};

bool better_final(const Finalized& a, const Finalized& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.completed_step != b.completed_step) return a.completed_step < b.completed_step;
    return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                        b.tokens.end());
}

}  // namespace

AugmentedQuery generate_continuation(const lm::LmParams& lm_params,
                                     const decoder::DecoderParams* dec,
                                     const signals::BrainWindow* window, const IdList& query_ids,
                                     const lm::Vocabulary& vocab, const IdfTable& idf,
                                     const GenerateConfig& cfg, const std::string& sample_id) {
    if (query_ids.empty()) throw std::invalid_argument("generate_continuation: empty query");
    if (cfg.beam_width < 1) throw std::invalid_argument("generate_continuation: beam width < 1");
    const bool uses_brain = cfg.condition != Condition::no_brain;
    if (uses_brain && (dec == nullptr || window == nullptr))
        throw std::invalid_argument("generate_continuation: condition requires a brain window");

    const double alpha = cfg.condition == Condition::no_idf ? 0.0 : cfg.alpha;
    decoder::PromptSequence prompt;
    if (uses_brain) {
        prompt = decoder::assemble_prompt(*dec, lm_params, window, query_ids);
    } else {
        decoder::DecoderParams unused;
        prompt = decoder::assemble_prompt(unused, lm_params, nullptr, query_ids);
    }

    AugmentedQuery result;
    result.sample_id = sample_id;
    result.condition = cfg.condition;
    for (TokenId id : query_ids) result.original.push_back(vocab.surface(id));

    std::vector<Finalized> finalized;
    std::vector<Beam> beams{Beam{}};
    const int vocab_size = vocab.size();

    for (int step = 1; step <= cfg.max_new_tokens && !beams.empty(); ++step) {
        std::vector<Candidate> candidates;
        for (const Beam& beam : beams) {
            Matrix inputs(prompt.vectors.rows() + static_cast<Eigen::Index>(beam.tokens.size()),
                          lm_params.cfg.d_model);
            inputs.topRows(prompt.vectors.rows()) = prompt.vectors;
            if (!beam.tokens.empty())
                inputs.bottomRows(static_cast<Eigen::Index>(beam.tokens.size())) =
                    lm_params.embed(beam.tokens);
            const Vector p_lm = lm::next_token_distribution(lm_params, inputs);
            const Vector p_inf = blend_distribution(p_lm, idf, alpha);

            bool any_extension = false;
            for (TokenId tok = 0; tok < vocab_size; ++tok) {
                const double log_pinf = std::log(std::max(p_inf(tok), 1e-300));
                if (tok == vocab.eos_id) {
                    Candidate c;
                    c.beam.tokens = beam.tokens;  // EOS scores but is not emitted
                    c.beam.score = beam.score + log_pinf;
                    c.beam.sum_log_plm = beam.sum_log_plm;
                    c.final_now = true;
                    candidates.push_back(std::move(c));
                    continue;
                }
                const double log_plm = std::log(std::max(p_lm(tok), 1e-300));
                if (cfg.ppl_stop > 0.0) {
                    const double mean_lp = (beam.sum_log_plm + log_plm) /
                                           static_cast<double>(beam.tokens.size() + 1);
                    if (std::exp(-mean_lp) > cfg.ppl_stop) continue;  // not extendable this way
                }
                Candidate c;
                c.beam.tokens = beam.tokens;
                c.beam.tokens.push_back(tok);
                c.beam.score = beam.score + log_pinf;
                c.beam.sum_log_plm = beam.sum_log_plm + log_plm;
                candidates.push_back(std::move(c));
                any_extension = true;
            }
            if (!any_extension && cfg.ppl_stop > 0.0) {
                // every continuation would breach the perplexity bound: the
                // beam is rolled back to the previous step as-is
                Candidate c;
                c.beam = beam;
                c.final_now = true;
                candidates.push_back(std::move(c));
            }
        }
        std::sort(candidates.begin(), candidates.end());
        if (static_cast<int>(candidates.size()) > cfg.beam_width)
            candidates.resize(static_cast<std::size_t>(cfg.beam_width));

        beams.clear();
        for (auto& c : candidates) {
            if (c.final_now) {
                finalized.push_back({std::move(c.beam.tokens), c.beam.score, step});
            } else {
                beams.push_back(std::move(c.beam));
            }
        }
    }
    for (Beam& beam : beams)
        finalized.push_back({std::move(beam.tokens), beam.score, cfg.max_new_tokens});

    if (finalized.empty()) return result;  // max_new_tokens == 0
    const Finalized* best = &finalized.front();
    for (const auto& f : finalized)
        if (better_final(f, *best)) best = &f;

    result.beam_score = best->score;
    for (TokenId id : best->tokens) result.continuation.push_back(vocab.surface(id));
    return result;
}

std::string augmented_to_jsonl(const std::vector<AugmentedQuery>& queries) {
    std::ostringstream out;
    for (const auto& q : queries) {
        nlohmann::json j;
        j["sample_id"] = q.sample_id;
        j["condition"] = condition_name(q.condition);
        j["original"] = q.original;
        j["continuation"] = q.continuation;
        j["beam_score"] = q.beam_score;
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<AugmentedQuery> augmented_from_jsonl(const std::string& text) {
    std::vector<AugmentedQuery> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        AugmentedQuery q;
        q.sample_id = j.at("sample_id").get<std::string>();
        q.condition = condition_from_name(j.at("condition").get<std::string>());
        q.original = j.at("original").get<TokenList>();
        q.continuation = j.at("continuation").get<TokenList>();
        q.beam_score = j.at("beam_score").get<double>();
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace brainaug::augment
