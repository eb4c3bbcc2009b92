// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5-7 run the full cross-validated experiment on synthetic
// corpora and take the bulk of the runtime.

#include "brainaug/analysis.hpp"
#include "brainaug/augment.hpp"
#include "brainaug/brain_decoder.hpp"
#include "brainaug/experiment.hpp"
#include "brainaug/io.hpp"
#include "brainaug/lm.hpp"
#include "brainaug/ranking.hpp"
#include "brainaug/rng.hpp"
#include "brainaug/signals.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace brainaug;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& summary, double seconds) {
    if (!pass) ++g_failures;
    std::printf("[%s] criterion %d: %s (%.1fs)\n", pass ? "PASS" : "FAIL", criterion,
                summary.c_str(), seconds);
    std::fflush(stdout);
}

double run_timed(const std::function<bool(std::string&)>& body, int criterion) {
    const auto start = std::chrono::steady_clock::now();
    std::string summary;
    bool pass = false;
    try {
        pass = body(summary);
    } catch (const std::exception& e) {
        summary += std::string(" [exception: ") + e.what() + "]";
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(criterion, pass, summary, seconds);
    return seconds;
}

bool close_rel(double a, double b, double tol = 1e-4, double abs_tol = 1e-6) {
    return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)) + abs_tol;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
}

std::string out_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "brainaug_acceptance" / name;
    return dir.string();
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients vs central finite differences

bool criterion1(std::string& summary) {
    const double h = 1e-4;
    int checked = 0;
    int refined = 0;
    bool ok = true;

    // Central differences at step h carry an O(h^2 f''') truncation term. A
    // coordinate that misses the tolerance at h=1e-4 is accepted only if the
    // discrepancy shows the quadratic signature: at h/10 it must agree within
    // tolerance and the gap must shrink by at least 30x. A wrong analytic
    // gradient produces an h-independent gap and cannot pass.
    auto fd_matches = [&](double analytic, const std::function<double(double)>& f_at,
                          double base) {
        ++checked;
        auto central = [&](double step) { return (f_at(base + step) - f_at(base - step)) / (2 * step); };
        const double fd = central(h);
        if (close_rel(analytic, fd)) return true;
        ++refined;
        const double fd_small = central(h / 10.0);
        return close_rel(analytic, fd_small) &&
               std::abs(analytic - fd_small) * 30.0 <= std::abs(analytic - fd);
    };

    for (std::uint64_t seed = 0; seed < 20 && ok; ++seed) {
        // (a) language model input-embedding gradients: d=8, |V|=12, length 6
        {
            lm::LmConfig cfg;
            cfg.vocab_size = 12;
            cfg.d_model = 8;
            cfg.max_seq_len = 16;
            const lm::LmParams p = lm::LmParams::init(cfg, seed);
            Rng rng(seed + 900);
            Matrix x(6, 8);
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 8; ++j) x(i, j) = rng.normal(0.0, 0.5);
            IdList targets;
            for (int i = 0; i < 3; ++i) targets.push_back(rng.uniform_int(12));
            const Matrix grad = lm::grad_wrt_input_embeddings(p, x, targets, 3);
            for (Eigen::Index i = 0; i < x.rows() && ok; ++i)
                for (Eigen::Index j = 0; j < x.cols() && ok; ++j) {
                    Matrix probe = x;
                    ok = fd_matches(grad(i, j),
                                    [&](double v) {
                                        probe(i, j) = v;
                                        return lm::nll(p, probe, targets, 3);
                                    },
                                    x(i, j));
                }
        }

        // (b) warmup loss gradients for every decoder MLP parameter
        //     (t=2, c=3, d=4)
        lm::LmConfig small;
        small.vocab_size = 12;
        small.d_model = 4;
        small.max_seq_len = 24;
        const lm::LmParams frozen = lm::LmParams::init(small, seed + 1);
        decoder::DecoderParams dec = decoder::DecoderParams::init(2, 3, 4, seed + 2);
        // central differences need a differentiability margin: redraw windows
        // whose ReLU pre-activations sit within a few h of the kink
        signals::BrainWindow window;
        window.sample_ref = "w";
        for (std::uint64_t salt = 0; salt < 50; ++salt) {
            Rng rng(seed + 500 + salt * 7919);
            window.matrix.resize(2, 3);
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 3; ++j) window.matrix(i, j) = rng.normal();
            const Matrix in = window.matrix + dec.position_embeddings;
            const Matrix pre1 = (in * dec.w1.transpose()).rowwise() + dec.b1.transpose();
            const Matrix h1 = pre1.cwiseMax(0.0);
            const Matrix pre2 = (h1 * dec.w2.transpose()).rowwise() + dec.b2.transpose();
            const double margin =
                std::min(pre1.cwiseAbs().minCoeff(), pre2.cwiseAbs().minCoeff());
            if (margin > 1e-3) break;
        }
        const IdList query = {3, 4, 5};

        decoder::DecoderParams wgrads = decoder::DecoderParams::zeros_like(dec);
        decoder::warmup_loss(dec, frozen, window, query, &wgrads);
        auto refs = dec.mlp_tensors();
        auto grefs = wgrads.mlp_tensors();
        for (std::size_t t = 0; t < refs.size() && ok; ++t)
            for (Eigen::Index i = 0; i < refs[t].size && ok; ++i) {
                double* slot = refs[t].data + i;
                const double orig = *slot;
                ok = fd_matches(grefs[t].data[i],
                                [&](double v) {
                                    *slot = v;
                                    const double r =
                                        decoder::warmup_loss(dec, frozen, window, query, nullptr);
                                    *slot = orig;
                                    return r;
                                },
                                orig);
            }

        // (c) prompt-tuning NLL through the frozen model, for every decoder
        //     parameter (markers included) and every prompt input position
        const IdList continuation = {6, 7};
        auto tuning_nll = [&]() {
            const auto prompt = decoder::assemble_prompt(dec, frozen, &window, query);
            const int s = prompt.layout.length();
            Matrix inputs(s + 2, 4);
            inputs.topRows(s) = prompt.vectors;
            inputs.bottomRows(2) = frozen.embed(continuation);
            return lm::nll(frozen, inputs, continuation, s);
        };
        decoder::DecoderParams tgrads = decoder::DecoderParams::zeros_like(dec);
        {
            const auto prompt = decoder::assemble_prompt(dec, frozen, &window, query);
            const int s = prompt.layout.length();
            Matrix inputs(s + 2, 4);
            inputs.topRows(s) = prompt.vectors;
            inputs.bottomRows(2) = frozen.embed(continuation);
            Matrix input_grad;
            lm::nll_backward(frozen, inputs, continuation, s, 1.0, &input_grad, nullptr);
            decoder::route_prompt_gradient(dec, window, prompt.layout, input_grad, tgrads);
        }
        auto all_refs = dec.tensors();
        auto all_grefs = tgrads.tensors();
        for (std::size_t t = 0; t < all_refs.size() && ok; ++t)
            for (Eigen::Index i = 0; i < all_refs[t].size && ok; ++i) {
                double* slot = all_refs[t].data + i;
                const double orig = *slot;
                ok = fd_matches(all_grefs[t].data[i],
                                [&](double v) {
                                    *slot = v;
                                    const double r = tuning_nll();
                                    *slot = orig;
                                    return r;
                                },
                                orig);
            }
    }
    summary = "finite-difference agreement on " + std::to_string(checked) +
              " coordinates across 20 seeds (rel err <= 1e-4; " + std::to_string(refined) +
              " truncation-limited coordinates confirmed at h/10)";
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 2: the blended inference distribution

bool criterion2(std::string& summary) {
    bool ok = true;

    augment::IdfTable idf;
    idf.n_docs = 3;
    idf.values.resize(3);
    idf.values << 0.0, 1.0, 2.0;
    Vector p(3);
    p << 0.5, 0.3, 0.2;
    const Vector blended = augment::blend_distribution(p, idf, 0.1);
    ok = ok && std::abs(blended(0) - 0.3846) < 1e-4 && std::abs(blended(1) - 0.3077) < 1e-4 &&
         std::abs(blended(2) - 0.3077) < 1e-4;

    const Vector same = augment::blend_distribution(p, idf, 0.0);
    ok = ok && (same - p).cwiseAbs().maxCoeff() == 0.0;

    Rng rng(2024);
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const int v = 3 + rng.uniform_int(30);
        Vector q(v);
        for (int i = 0; i < v; ++i) q(i) = rng.uniform() + 1e-9;
        q /= q.sum();
        augment::IdfTable table;
        table.n_docs = 1;
        table.values.resize(v);
        for (int i = 0; i < v; ++i) table.values(i) = rng.uniform(0.0, 5.0);
        const double alpha = rng.uniform(0.0, 1.0);

        const Vector a = augment::blend_distribution(q, table, alpha);
        ok = ok && std::abs(a.sum() - 1.0) < 1e-12;

        augment::IdfTable shifted = table;
        shifted.values.array() += rng.uniform(0.0, 4.0);
        const Vector b = augment::blend_distribution(q, shifted, alpha);
        Eigen::Index ia, ib;
        a.maxCoeff(&ia);
        b.maxCoeff(&ib);
        ok = ok && ia == ib;
    }
    summary = "hand-computed blend, alpha=0 identity, argmax invariance on 1000 instances";
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 3: decoding oracles

struct Fin {
    IdList tokens;
    double score = 0.0;
    int step = 0;
};

bool fin_better(const Fin& a, const Fin& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.step != b.step) return a.step < b.step;
    return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                        b.tokens.end());
}

void enumerate_all(const lm::LmParams& lmp, const Matrix& prompt, const lm::Vocabulary& vocab,
                   const augment::IdfTable& idf, const augment::GenerateConfig& cfg,
                   IdList tokens, double score, double sum_lp, std::vector<Fin>& out) {
    if (static_cast<int>(tokens.size()) == cfg.max_new_tokens) {
        out.push_back({tokens, score, cfg.max_new_tokens});
        return;
    }
    const int step = static_cast<int>(tokens.size()) + 1;
    Matrix inputs(prompt.rows() + static_cast<Eigen::Index>(tokens.size()), prompt.cols());
    inputs.topRows(prompt.rows()) = prompt;
    if (!tokens.empty())
        inputs.bottomRows(static_cast<Eigen::Index>(tokens.size())) = lmp.embed(tokens);
    const Vector p_lm = lm::next_token_distribution(lmp, inputs);
    const Vector p_inf = augment::blend_distribution(p_lm, idf, cfg.alpha);

    out.push_back({tokens, score + std::log(std::max(p_inf(vocab.eos_id), 1e-300)), step});
    bool any = false;
    for (TokenId m = 0; m < vocab.size(); ++m) {
        if (m == vocab.eos_id) continue;
        const double lp = std::log(std::max(p_lm(m), 1e-300));
        if (cfg.ppl_stop > 0.0) {
            const double mean = (sum_lp + lp) / static_cast<double>(tokens.size() + 1);
            if (std::exp(-mean) > cfg.ppl_stop) continue;
        }
        any = true;
        IdList next = tokens;
        next.push_back(m);
        enumerate_all(lmp, prompt, vocab, idf, cfg, next,
                      score + std::log(std::max(p_inf(m), 1e-300)), sum_lp + lp, out);
    }
    if (cfg.ppl_stop > 0.0 && !any) out.push_back({tokens, score, step});
}

bool criterion3(std::string& summary) {
    bool ok = true;

    const std::vector<TokenList> tiny_corpus = {{"a"}};
    lm::Vocabulary vocab = lm::build_vocab(tiny_corpus, 1);  // |V| = 4
    augment::IdfTable idf;
    idf.n_docs = 1;
    idf.values = Vector::Zero(vocab.size());
    idf.values(vocab.unk_id) = std::log(4.0);
    idf.values(vocab.bos_id) = std::log(2.0);

    // exhaustive equivalence at width >= |V|^max_new
    for (std::uint64_t seed = 0; seed < 25 && ok; ++seed) {
        lm::LmConfig cfg;
        cfg.vocab_size = vocab.size();
        cfg.d_model = 8;
        cfg.max_seq_len = 16;
        const lm::LmParams lmp = lm::LmParams::init(cfg, seed);

        augment::GenerateConfig gen;
        gen.condition = augment::Condition::no_brain;
        gen.beam_width = 256;
        gen.max_new_tokens = 3;
        gen.alpha = (seed % 2 == 0) ? 0.0 : 0.2;
        gen.ppl_stop = (seed % 3 == 0) ? 1.5 : 0.0;

        const IdList query = {vocab.id_of("a")};
        std::vector<Fin> all;
        enumerate_all(lmp, lmp.embed(query), vocab, idf, gen, {}, 0.0, 0.0, all);
        const Fin* best = &all.front();
        for (const auto& f : all)
            if (fin_better(f, *best)) best = &f;

        const augment::AugmentedQuery got =
            augment::generate_continuation(lmp, nullptr, nullptr, query, vocab, idf, gen);
        TokenList expected;
        for (TokenId id : best->tokens) expected.push_back(vocab.surface(id));
        ok = got.continuation == expected && std::abs(got.beam_score - best->score) < 1e-10;
    }

    // width-1 equals greedy on 100 random models
    const std::vector<TokenList> corpus6 = {{"a", "b", "c"}};
    lm::Vocabulary vocab6 = lm::build_vocab(corpus6, 1);  // |V| = 6
    augment::IdfTable idf6;
    idf6.n_docs = 1;
    idf6.values = Vector::Zero(vocab6.size());
    for (TokenId t = 0; t < vocab6.size(); ++t) idf6.values(t) = 0.37 * t;

    for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
        lm::LmConfig cfg;
        cfg.vocab_size = vocab6.size();
        cfg.d_model = 8;
        cfg.max_seq_len = 16;
        const lm::LmParams lmp = lm::LmParams::init(cfg, seed + 3000);

        augment::GenerateConfig gen;
        gen.condition = augment::Condition::no_brain;
        gen.beam_width = 1;
        gen.max_new_tokens = 4;
        gen.alpha = (seed % 2 == 0) ? 0.0 : 0.1;
        gen.ppl_stop = 0.0;

        const IdList query = {vocab6.id_of("b")};
        const augment::AugmentedQuery got =
            augment::generate_continuation(lmp, nullptr, nullptr, query, vocab6, idf6, gen);

        // token-by-token argmax
        IdList tokens;
        double score = 0.0;
        for (int step = 0; step < gen.max_new_tokens; ++step) {
            Matrix inputs(1 + static_cast<Eigen::Index>(tokens.size()), cfg.d_model);
            inputs.topRows(1) = lmp.embed(query);
            if (!tokens.empty())
                inputs.bottomRows(static_cast<Eigen::Index>(tokens.size())) = lmp.embed(tokens);
            const Vector p_inf = augment::blend_distribution(
                lm::next_token_distribution(lmp, inputs), idf6, gen.alpha);
            TokenId best_tok = -1;
            for (TokenId m = 0; m < vocab6.size(); ++m) {
                if (m == vocab6.eos_id) continue;
                if (best_tok < 0 || p_inf(m) > p_inf(best_tok)) best_tok = m;
            }
            if (p_inf(vocab6.eos_id) > p_inf(best_tok)) {
                score += std::log(p_inf(vocab6.eos_id));
                break;
            }
            score += std::log(p_inf(best_tok));
            tokens.push_back(best_tok);
        }
        TokenList expected;
        for (TokenId id : tokens) expected.push_back(vocab6.surface(id));
        ok = got.continuation == expected && std::abs(got.beam_score - score) < 1e-10;
    }
    summary = "exhaustive-search equivalence (25 instances incl. stop rules), greedy equivalence (100 models)";
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 4: metric oracles on random instances

bool criterion4(std::string& summary) {
    bool ok = true;
    Rng rng(4004);

    // NDCG / recall / AP against direct formula evaluation
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const int n = 3 + rng.uniform_int(30);
        ranking::RankedList ranked;
        for (int i = 0; i < n; ++i)
            ranked.push_back({"d" + std::to_string(i), static_cast<double>(n - i)});
        std::set<std::string> judged;
        const int n_rel = 1 + rng.uniform_int(3);
        for (int i = 0; i < n_rel; ++i)
            judged.insert("d" + std::to_string(rng.uniform_int(n + 4)));  // may be unretrieved
        const int k = 1 + rng.uniform_int(25);

        double dcg = 0.0;
        for (int i = 0; i < std::min(k, n); ++i)
            if (judged.count(ranked[static_cast<std::size_t>(i)].doc_id))
                dcg += 1.0 / std::log2(i + 2.0);
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min<std::size_t>(judged.size(), static_cast<std::size_t>(k)); ++i)
            idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        ok = ok && std::abs(ranking::ndcg_at_k(ranked, judged, k) - dcg / idcg) < 1e-12;

        int hits_k = 0, hits = 0;
        double ap = 0.0;
        for (int i = 0; i < n; ++i) {
            if (judged.count(ranked[static_cast<std::size_t>(i)].doc_id)) {
                ++hits;
                ap += static_cast<double>(hits) / (i + 1.0);
                if (i < k) ++hits_k;
            }
        }
        ok = ok && std::abs(ranking::recall_at_k(ranked, judged, k) -
                            static_cast<double>(hits_k) / judged.size()) < 1e-12;
        ok = ok && std::abs(ranking::average_precision(ranked, judged) - ap / judged.size()) < 1e-12;
    }

    // rouge-l against exhaustive subsequence enumeration
    for (int trial = 0; trial < 200 && ok; ++trial) {
        TokenList cand, ref;
        const int n = 1 + rng.uniform_int(7);
        const int m = 1 + rng.uniform_int(7);
        for (int i = 0; i < n; ++i) cand.push_back(std::to_string(rng.uniform_int(4)));
        for (int i = 0; i < m; ++i) ref.push_back(std::to_string(rng.uniform_int(4)));
        int lcs = 0;
        for (int mask = 0; mask < (1 << n); ++mask) {
            TokenList sub;
            for (int i = 0; i < n; ++i)
                if (mask & (1 << i)) sub.push_back(cand[static_cast<std::size_t>(i)]);
            std::size_t j = 0;
            for (const auto& t : ref)
                if (j < sub.size() && t == sub[j]) ++j;
            if (j == sub.size()) lcs = std::max(lcs, static_cast<int>(sub.size()));
        }
        double expected = 0.0;
        if (lcs > 0) {
            const double prec = static_cast<double>(lcs) / n, rec = static_cast<double>(lcs) / m;
            expected = 2.0 * prec * rec / (prec + rec);
        }
        ok = ok && std::abs(analysis::rouge_l(cand, ref) - expected) < 1e-12;
    }

    // BM25 top-k and RM3 lambda boundary on random corpora
    for (int trial = 0; trial < 200 && ok; ++trial) {
        std::vector<TokenList> raw;
        const int n_docs = 3 + rng.uniform_int(20);
        for (int d = 0; d < n_docs; ++d) {
            TokenList toks;
            const int len = 3 + rng.uniform_int(10);
            for (int i = 0; i < len; ++i) toks.push_back("w" + std::to_string(rng.uniform_int(15)));
            raw.push_back(std::move(toks));
        }
        std::vector<corpus::TokenizedDocument> docs;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            corpus::TokenizedDocument d;
            d.doc_id = "d" + std::to_string(i);
            d.tokens = raw[i];
            docs.push_back(std::move(d));
        }
        const lm::Vocabulary vocab = lm::build_vocab(raw, 1);
        const ranking::RankingIndex index = ranking::build_index(docs, vocab);

        TokenList qt;
        for (int i = 0; i < 2; ++i) qt.push_back("w" + std::to_string(rng.uniform_int(15)));
        const IdList query = vocab.to_ids(qt);

        // independent scorer
        double total_len = 0.0;
        for (const auto& d : raw) total_len += static_cast<double>(d.size());
        const double avgdl = total_len / n_docs;
        ranking::RankedList expected;
        for (int d = 0; d < n_docs; ++d) {
            double score = 0.0;
            for (const auto& term : qt) {
                const auto& doc = raw[static_cast<std::size_t>(d)];
                const double tf =
                    static_cast<double>(std::count(doc.begin(), doc.end(), term));
                if (tf <= 0) continue;
                int df = 0;
                for (const auto& other : raw)
                    if (std::find(other.begin(), other.end(), term) != other.end()) ++df;
                const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
                score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * doc.size() / avgdl));
            }
            expected.push_back({"d" + std::to_string(d), score});
        }
        std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.doc_id < b.doc_id;
        });
        const ranking::RankedList mine = ranking::rank(index, query, n_docs);
        for (std::size_t i = 0; i < mine.size() && ok; ++i)
            ok = mine[i].doc_id == expected[i].doc_id &&
                 std::abs(mine[i].score - expected[i].score) < 1e-9;

        // lambda = 1 must rank identically to the original query
        ranking::Rm3Params rm3;
        rm3.lambda = 1.0;
        rm3.fb_docs = 3;
        rm3.fb_terms = 5;
        const auto weighted = ranking::rm3_expand(index, query, rm3);
        const ranking::RankedList exp_rank = ranking::rank_weighted(index, weighted, n_docs);
        for (std::size_t i = 0; i < mine.size() && ok; ++i)
            ok = mine[i].doc_id == exp_rank[i].doc_id;
    }

    // PCA explained variances against a dense eigensolver
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const int rows = 10 + rng.uniform_int(30);
        const int cols = 2 + rng.uniform_int(6);
        Matrix data(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) data(i, j) = rng.normal();
        const int k = 1 + rng.uniform_int(cols);
        const signals::PcaModel model = signals::fit_pca(data, k);

        const Matrix centered = data.rowwise() - data.colwise().mean();
        const Matrix cov = centered.transpose() * centered / (rows - 1.0);
        Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
        const Vector eig = solver.eigenvalues().reverse();
        for (int i = 0; i < k && ok; ++i)
            ok = std::abs(model.explained_variance(i) - eig(i)) < 1e-6;
    }

    // Pearson r against the direct formula
    for (int trial = 0; trial < 200 && ok; ++trial) {
        const int n = 3 + rng.uniform_int(40);
        std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = rng.normal();
            y[static_cast<std::size_t>(i)] = rng.normal() + 0.5 * x[static_cast<std::size_t>(i)];
        }
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < n; ++i) {
            sx += x[static_cast<std::size_t>(i)];
            sy += y[static_cast<std::size_t>(i)];
        }
        const double mx = sx / n, my = sy / n;
        for (int i = 0; i < n; ++i) {
            const double dx = x[static_cast<std::size_t>(i)] - mx;
            const double dy = y[static_cast<std::size_t>(i)] - my;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        ok = ok && std::abs(analysis::pearson_r(x, y) - sxy / std::sqrt(sxx * syy)) < 1e-12;
    }

    summary = "ndcg/map/recall, rouge-l, bm25 top-k, rm3 boundary, pca, pearson vs brute force (200 instances each)";
    return ok;
}

// ---------------------------------------------------------------------------
// criteria 5-7: directional replication on synthetic corpora

experiment::ExperimentConfig replication_config(const std::string& dir, double informativeness) {
    experiment::ExperimentConfig cfg;
    cfg.frames_per_doc = 4;
    cfg.synth.n_docs = 160;  // 1280 samples
    cfg.synth.n_topics = 6;
    cfg.synth.content_words_per_topic = 12;
    cfg.synth.entity_pool = 80;
    cfg.synth.entities_per_doc = 3;
    cfg.synth.entity_prob = 0.3;
    cfg.synth.function_prob = 0.3;
    cfg.synth.sentence_len_min = 10;
    cfg.synth.sentence_len_max = 14;
    cfg.raw_feat_dim = 96;
    cfg.embed_dim = 64;
    cfg.t_frames = 12;
    cfg.idf_power = 2.0;
    cfg.noise_sigma = 0.5;
    cfg.informativeness = informativeness;
    cfg.d_model = 64;
    cfg.lm_lr = 1e-3;
    cfg.lm_max_epochs = 60;
    cfg.lm_patience = 12;
    cfg.train.lr = 3e-3;
    cfg.train.warmup_epochs = 10;
    cfg.train.patience = 10;
    cfg.train.max_epochs = 60;
    cfg.infer.alpha = 0.0;
    cfg.infer.beam_width = 5;
    cfg.infer.max_new_tokens = 5;
    cfg.infer.ppl_stop = 0.0;
    cfg.top_k = 200;
    cfg.sample_terms = 3;
    cfg.n_folds = 5;
    cfg.seeds = {11, 12, 13, 14, 15};
    cfg.out_dir = dir;
    return cfg;
}

bool criterion5(const experiment::ExperimentResult& res, std::string& summary) {
    const double ppl_brain = res.mean_metric("brain", "log_ppl");
    const double ppl_none = res.mean_metric("no_brain", "log_ppl");
    const double rouge_brain = res.mean_metric("brain", "rouge_l");
    const double rouge_none = res.mean_metric("no_brain", "rouge_l");
    const bool pass = (ppl_none - ppl_brain >= 0.05) && (rouge_brain > rouge_none);
    summary = "log-PPL brain " + fmt2(ppl_brain) + " vs no-brain " + fmt2(ppl_none) +
              " (need gap >= 0.05), rouge " + fmt2(rouge_brain) + " vs " + fmt2(rouge_none);
    return pass;
}

bool criterion6(const experiment::ExperimentConfig& cfg, const experiment::ExperimentResult& res,
                std::string& summary) {
    const auto [b_rs, rs] = res.paired_metric("brain", "rs_brain", "ndcg20");
    const auto [b_orig, orig] = res.paired_metric("brain", "original", "ndcg20");
    const auto t_rs = analysis::paired_t_test(b_rs, rs);
    const auto t_orig = analysis::paired_t_test(b_orig, orig);

    const double mean_b = res.mean_metric("brain", "ndcg20");
    const double mean_rs = res.mean_metric("rs_brain", "ndcg20");
    const double mean_orig = res.mean_metric("original", "ndcg20");

    int seeds_ge = 0;
    for (std::uint64_t seed : cfg.effective_seeds()) {
        const double b = res.mean_metric_for_seed(seed, "brain", "ndcg20");
        const double ni = res.mean_metric_for_seed(seed, "no_idf", "ndcg20");
        if (b >= ni) ++seeds_ge;
    }

    const bool pass = mean_b > mean_rs && t_rs.t > 0 && t_rs.p <= 0.05 && mean_b > mean_orig &&
                      t_orig.t > 0 && t_orig.p <= 0.05 && seeds_ge >= 4;
    summary = "ndcg20 brain " + fmt2(mean_b) + " > rs " + fmt2(mean_rs) + " (p=" +
              fmt2(t_rs.p) + ") and > original " + fmt2(mean_orig) + " (p=" + fmt2(t_orig.p) +
              "); >= no-idf in " + std::to_string(seeds_ge) + "/5 seeds";
    return pass;
}

bool criterion7(const experiment::ExperimentResult& res, std::string& summary) {
    const double ppl_brain = res.mean_metric("brain", "log_ppl");
    const double ppl_rs = res.mean_metric("rs_brain", "log_ppl");
    const double gap = std::abs(ppl_brain - ppl_rs);
    summary = "null-signal |log-PPL brain - rs| = " + fmt2(gap) + " (need <= 0.05)";
    return gap <= 0.05;
}

// ---------------------------------------------------------------------------
// criterion 8: protocol invariants

bool criterion8(std::string& summary) {
    bool ok = true;

    // fold partition + span reconstruction on a fresh mid-size dataset
    experiment::ExperimentConfig cfg;
    cfg.synth.n_docs = 40;
    cfg.synth.n_topics = 8;
    cfg.n_folds = 5;
    const experiment::Dataset data = experiment::build_dataset(cfg, 321);
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& f : data.folds)
        for (const auto& id : f.test) {
            seen.insert(id);
            ++total;
        }
    ok = ok && total == data.samples.size() && seen.size() == data.samples.size();

    std::map<std::string, const corpus::TokenizedDocument*> by_id;
    for (const auto& d : data.docs) by_id[d.doc_id] = &d;
    for (const auto& s : data.samples) {
        const auto& doc = *by_id.at(s.relevant_doc);
        TokenList rebuilt(s.masked_doc.begin(),
                          s.masked_doc.begin() + static_cast<std::ptrdiff_t>(s.query_offset));
        rebuilt.insert(rebuilt.end(), s.query.begin(), s.query.end());
        rebuilt.insert(rebuilt.end(),
                       s.masked_doc.begin() + static_cast<std::ptrdiff_t>(s.query_offset),
                       s.masked_doc.end());
        ok = ok && rebuilt == doc.tokens;
        TokenList span = s.query;
        span.insert(span.end(), s.continuation.begin(), s.continuation.end());
        for (std::size_t i = 0; i < span.size(); ++i)
            ok = ok && doc.tokens[s.query_offset + i] == span[i];
    }

    // full-pipeline byte determinism on a small configuration
    auto tiny = [](const std::string& dir) {
        experiment::ExperimentConfig c;
        c.synth.n_docs = 12;
        c.synth.n_topics = 3;
        c.synth.content_words_per_topic = 10;
        c.raw_feat_dim = 10;
        c.embed_dim = 6;
        c.t_frames = 2;
        c.d_model = 16;
        c.lm_max_epochs = 5;
        c.lm_patience = 5;
        c.train.warmup_epochs = 2;
        c.train.max_epochs = 3;
        c.train.patience = 3;
        c.infer.beam_width = 3;
        c.infer.max_new_tokens = 3;
        c.n_folds = 3;
        c.seed = 77;
        c.out_dir = dir;
        return c;
    };
    const std::string dir_a = out_dir("det_a");
    const std::string dir_b = out_dir("det_b");
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    experiment::run_all(tiny(dir_a));
    experiment::run_all(tiny(dir_b));
    for (const char* rel : {"/tables/per_sample.csv", "/tables/summary.csv",
                            "/tables/significance.csv", "/seed_77/eval/per_sample.csv",
                            "/seed_77/rank/fold_0/run_brain.trec",
                            "/seed_77/corpus/samples.jsonl"})
        ok = ok && io::read_file(dir_a + rel) == io::read_file(dir_b + rel);

    // frozen-model checksum stability through prompt tuning
    {
        const experiment::Dataset small = experiment::build_dataset(tiny(out_dir("frozen")), 9);
        const auto windows = experiment::build_windows(tiny(out_dir("frozen")), small, 9);
        std::vector<IdList> docs_ids;
        for (const auto& d : small.docs) docs_ids.push_back(small.vocab.to_ids(d.tokens));
        lm::LmConfig lmc;
        lmc.vocab_size = small.vocab.size();
        lmc.d_model = 16;
        lmc.max_seq_len = 64;
        lm::PretrainConfig pre;
        pre.max_epochs = 3;
        pre.patience = 3;
        pre.seed = 2;
        const lm::LmParams frozen =
            lm::pretrain_lm(docs_ids, {docs_ids[0]}, small.vocab, lmc, pre, nullptr);
        const std::uint64_t before = frozen.checksum();

        auto items = trainer::make_training_items(small.samples, windows, small.vocab);
        const std::vector<trainer::TrainingItem> train(items.begin(),
                                                       items.begin() + items.size() / 2);
        const std::vector<trainer::TrainingItem> val(items.begin() + items.size() / 2,
                                                     items.end());
        decoder::DecoderParams dec = decoder::DecoderParams::init(
            2, static_cast<int>(windows[0].feat_dim()), 16, 4);
        trainer::TrainConfig tc;
        tc.warmup_epochs = 2;
        tc.max_epochs = 3;
        tc.patience = 3;
        tc.lr = 1e-3;
        trainer::run_warmup(dec, frozen, train, tc);
        trainer::run_prompt_tuning(dec, frozen, train, val, tc);
        ok = ok && frozen.checksum() == before;
    }

    summary = "fold partition, span round-trip, byte determinism, frozen-model checksum";
    return ok;
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");

    run_timed(criterion1, 1);
    run_timed(criterion2, 2);
    run_timed(criterion3, 3);
    run_timed(criterion4, 4);

    // criteria 5 and 6 share one experiment; criterion 7 runs the null-signal
    // variant of the same configuration
    experiment::ExperimentResult informative, null_signal;
    bool ran_main = false, ran_null = false;
    {
        const auto start = std::chrono::steady_clock::now();
        try {
            const std::string dir = out_dir("informative");
            std::filesystem::remove_all(dir);
            informative = experiment::run_all(replication_config(dir, 0.8));
            ran_main = true;
        } catch (const std::exception& e) {
            std::printf("experiment failed: %s\n", e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("  (informative-signal experiment: %.0fs, 5 seeds x 5 folds)\n", secs);
        std::fflush(stdout);
    }

    run_timed(
        [&](std::string& s) {
            if (!ran_main) {
                s = "experiment did not complete";
                return false;
            }
            return criterion5(informative, s);
        },
        5);
    run_timed(
        [&](std::string& s) {
            if (!ran_main) {
                s = "experiment did not complete";
                return false;
            }
            const std::string dir = out_dir("informative");
            return criterion6(replication_config(dir, 0.8), informative, s);
        },
        6);

    {
        const auto start = std::chrono::steady_clock::now();
        try {
            const std::string dir = out_dir("null");
            std::filesystem::remove_all(dir);
            null_signal = experiment::run_all(replication_config(dir, 0.0));
            ran_null = true;
        } catch (const std::exception& e) {
            std::printf("experiment failed: %s\n", e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("  (null-signal experiment: %.0fs)\n", secs);
        std::fflush(stdout);
    }
    run_timed(
        [&](std::string& s) {
            if (!ran_null) {
                s = "experiment did not complete";
                return false;
            }
            return criterion7(null_signal, s);
        },
        7);

    run_timed(criterion8, 8);

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
