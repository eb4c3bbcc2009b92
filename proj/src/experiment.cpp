#include "brainaug/experiment.hpp"

#include "brainaug/analysis.hpp"
#include "brainaug/io.hpp"
#include "brainaug/rng.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace brainaug::experiment {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
}

int worker_count() {
    const char* env = std::getenv("BRAINAUG_THREADS");
    int n = env != nullptr ? std::atoi(env) : static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

/// Run f(i) for i in [0, n) on up to BRAINAUG_THREADS workers. Results must be
/// written to preallocated slots so the output order stays deterministic.
template <typename F>
void parallel_for(std::size_t n, const F& f) {
    const int workers = std::min<int>(worker_count(), static_cast<int>(n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
        const std::size_t begin = static_cast<std::size_t>(w) * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&f, begin, end]() {
            for (std::size_t i = begin; i < end; ++i) f(i);
        });
    }
    for (auto& t : pool) t.join();
}

std::vector<int> parse_mask(const std::string& spec) {
    std::vector<int> cols;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        const std::size_t dash = part.find('-');
        if (dash == std::string::npos) {
            cols.push_back(std::stoi(part));
        } else {
            const int lo = std::stoi(part.substr(0, dash));
            const int hi = std::stoi(part.substr(dash + 1));
            for (int i = lo; i <= hi; ++i) cols.push_back(i);
        }
    }
    return cols;
}

struct Paths {
    std::string root;
    std::uint64_t seed = 0;

    std::string seed_dir() const { return root + "/seed_" + std::to_string(seed); }
    std::string frames() const { return seed_dir() + "/corpus/frames.txt"; }
    std::string documents() const { return seed_dir() + "/corpus/documents.jsonl"; }
    std::string samples() const { return seed_dir() + "/corpus/samples.jsonl"; }
    std::string vocab() const { return seed_dir() + "/corpus/vocab.json"; }
    std::string folds() const { return seed_dir() + "/corpus/folds.json"; }
    std::string windows_bin() const { return seed_dir() + "/signals/windows.baf1"; }
    std::string windows_meta() const { return seed_dir() + "/signals/windows.json"; }
    std::string pca() const { return seed_dir() + "/signals/pca.ckpt"; }
    std::string lm_dir(int fold) const { return seed_dir() + "/lm/fold_" + std::to_string(fold); }
    std::string lm_ckpt(int fold) const { return lm_dir(fold) + "/lm.ckpt"; }
    std::string lm_report(int fold) const { return lm_dir(fold) + "/report.csv"; }
    std::string dec_dir(int fold) const {
        return seed_dir() + "/decoder/fold_" + std::to_string(fold);
    }
    std::string dec_ckpt(int fold) const { return dec_dir(fold) + "/decoder.ckpt"; }
    std::string warmup_report(int fold) const { return dec_dir(fold) + "/warmup_report.csv"; }
    std::string tuning_report(int fold) const { return dec_dir(fold) + "/tuning_report.csv"; }
    std::string aug(int fold, const std::string& cond) const {
        return seed_dir() + "/augment/fold_" + std::to_string(fold) + "/aug_" + cond + ".jsonl";
    }
    std::string qrels() const { return seed_dir() + "/rank/qrels.txt"; }
    std::string run(int fold, const std::string& cond) const {
        return seed_dir() + "/rank/fold_" + std::to_string(fold) + "/run_" + cond + ".trec";
    }
    std::string per_sample() const { return seed_dir() + "/eval/per_sample.csv"; }
    std::string features() const { return seed_dir() + "/analyze/features.csv"; }
    std::string correlations() const { return seed_dir() + "/analyze/correlations.csv"; }
    std::string buckets(const std::string& feature) const {
        return seed_dir() + "/analyze/buckets_" + feature + ".csv";
    }
    std::string manifest() const { return root + "/manifest.json"; }
    std::string pooled_per_sample() const { return root + "/tables/per_sample.csv"; }
    std::string summary() const { return root + "/tables/summary.csv"; }
    std::string summary_by_seed() const { return root + "/tables/summary_by_seed.csv"; }
    std::string significance() const { return root + "/tables/significance.csv"; }
    std::string pooled_correlations() const { return root + "/tables/correlations.csv"; }
};

/// Tracks which stages ran under which config and the hashes of everything
/// they wrote.
class Manifest {
  public:
    Manifest(const std::string& path, std::uint64_t config_hash)
        : path_(path), config_hash_(io::hash_hex(config_hash)) {
        if (io::file_exists(path_)) {
            j_ = nlohmann::json::parse(io::read_file(path_));
            if (j_.at("config_hash").get<std::string>() != config_hash_)
                throw std::runtime_error("stale artifact: " + path_ +
                                         " was produced by a different config");
        } else {
            j_["config_hash"] = config_hash_;
            j_["stages"] = nlohmann::json::object();
        }
    }

    bool done(const std::string& stage) const {
        if (!j_.at("stages").contains(stage)) return false;
        for (const auto& [path, hash] : j_.at("stages").at(stage).at("outputs").items()) {
            if (!io::file_exists(path)) return false;
            if (io::file_hash(path) != hash.get<std::string>()) return false;
        }
        return true;
    }

    void record(const std::string& stage, const std::vector<std::string>& outputs) {
        nlohmann::json entry;
        entry["outputs"] = nlohmann::json::object();
        for (const auto& p : outputs) entry["outputs"][p] = io::file_hash(p);
        entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                         started_)
                               .count();
        j_["stages"][stage] = entry;
        io::write_file(path_, j_.dump(2) + "\n");
    }

  private:
    std::string path_;
    std::string config_hash_;
    nlohmann::json j_;
    std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
};

void require_input(const std::string& path) {
    if (!io::file_exists(path)) throw std::runtime_error("missing input: " + path);
}

std::string stage_key(std::uint64_t seed, const std::string& name, int fold = -1) {
    std::string key = "seed_" + std::to_string(seed) + "/" + name;
    if (fold >= 0) key += "/fold_" + std::to_string(fold);
    return key;
}

// ---------------------------------------------------------------------------
// loading helpers

Dataset load_dataset(const Paths& paths) {
    require_input(paths.documents());
    require_input(paths.samples());
    require_input(paths.vocab());
    Dataset data;
    data.docs = corpus::documents_from_jsonl(io::read_file(paths.documents()));
    data.samples = corpus::samples_from_jsonl(io::read_file(paths.samples()));
    corpus::rebind_masked_docs(data.samples, data.docs);

    const auto vj = nlohmann::json::parse(io::read_file(paths.vocab()));
    data.vocab.tokens = vj.at("tokens").get<std::vector<std::string>>();
    data.vocab.unk_id = vj.at("unk_id").get<TokenId>();
    data.vocab.bos_id = vj.at("bos_id").get<TokenId>();
    data.vocab.eos_id = vj.at("eos_id").get<TokenId>();
    for (std::size_t i = 0; i < data.vocab.tokens.size(); ++i)
        data.vocab.index[data.vocab.tokens[i]] = static_cast<TokenId>(i);

    require_input(paths.folds());
    const auto fj = nlohmann::json::parse(io::read_file(paths.folds()));
    for (const auto& f : fj) {
        corpus::FoldSplit split;
        split.train = f.at("train").get<std::vector<std::string>>();
        split.validation = f.at("validation").get<std::vector<std::string>>();
        split.test = f.at("test").get<std::vector<std::string>>();
        data.folds.push_back(std::move(split));
    }
    return data;
}

std::vector<signals::BrainWindow> load_windows(const Paths& paths) {
    require_input(paths.windows_bin());
    require_input(paths.windows_meta());
    const Matrix all = io::read_matrix(paths.windows_bin());
    const auto meta = nlohmann::json::parse(io::read_file(paths.windows_meta()));
    const auto ids = meta.at("sample_ids").get<std::vector<std::string>>();
    const int t = meta.at("t_frames").get<int>();
    std::vector<signals::BrainWindow> windows(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        windows[i].sample_ref = ids[i];
        windows[i].matrix = all.middleRows(static_cast<Eigen::Index>(i) * t, t);
    }
    return windows;
}

lm::LmParams load_lm(const std::string& path, const lm::Vocabulary& vocab) {
    require_input(path);
    const io::Checkpoint ckpt = io::read_checkpoint(path);
    if (ckpt.kind != "lm") throw std::runtime_error("not a language model checkpoint: " + path);
    if (ckpt.vocab_hash != vocab.hash())
        throw std::runtime_error("stale artifact: vocabulary hash mismatch in " + path);
    lm::LmParams p;
    p.cfg.vocab_size = static_cast<int>(ckpt.tensor("token_embeddings").rows());
    p.cfg.d_model = static_cast<int>(ckpt.tensor("token_embeddings").cols());
    p.cfg.max_seq_len = static_cast<int>(ckpt.tensor("positional").rows());
    p.token_embeddings = ckpt.tensor("token_embeddings");
    p.positional = ckpt.tensor("positional");
    p.wq = ckpt.tensor("wq");
    p.wk = ckpt.tensor("wk");
    p.wv = ckpt.tensor("wv");
    p.wo = ckpt.tensor("wo");
    p.w_ff1 = ckpt.tensor("w_ff1");
    p.b_ff1 = ckpt.vector_tensor("b_ff1");
    p.w_ff2 = ckpt.tensor("w_ff2");
    p.b_ff2 = ckpt.vector_tensor("b_ff2");
    p.ln1_gain = ckpt.vector_tensor("ln1_gain");
    p.ln1_bias = ckpt.vector_tensor("ln1_bias");
    p.ln2_gain = ckpt.vector_tensor("ln2_gain");
    p.ln2_bias = ckpt.vector_tensor("ln2_bias");
    p.lnf_gain = ckpt.vector_tensor("lnf_gain");
    p.lnf_bias = ckpt.vector_tensor("lnf_bias");
    p.output_proj = ckpt.tensor("output_proj");
    return p;
}

void save_lm(const std::string& path, const lm::LmParams& p, const lm::Vocabulary& vocab,
             std::uint64_t seed) {
    io::Checkpoint ckpt;
    ckpt.kind = "lm";
    ckpt.vocab_hash = vocab.hash();
    ckpt.seed = seed;
    ckpt.add("token_embeddings", p.token_embeddings);
    ckpt.add("positional", p.positional);
    ckpt.add("wq", p.wq);
    ckpt.add("wk", p.wk);
    ckpt.add("wv", p.wv);
    ckpt.add("wo", p.wo);
    ckpt.add("w_ff1", p.w_ff1);
    ckpt.add("b_ff1", p.b_ff1);
    ckpt.add("w_ff2", p.w_ff2);
    ckpt.add("b_ff2", p.b_ff2);
    ckpt.add("ln1_gain", p.ln1_gain);
    ckpt.add("ln1_bias", p.ln1_bias);
    ckpt.add("ln2_gain", p.ln2_gain);
    ckpt.add("ln2_bias", p.ln2_bias);
    ckpt.add("lnf_gain", p.lnf_gain);
    ckpt.add("lnf_bias", p.lnf_bias);
    ckpt.add("output_proj", p.output_proj);
    io::write_checkpoint(path, ckpt);
}

decoder::DecoderParams load_decoder(const std::string& path, const lm::Vocabulary& vocab) {
    require_input(path);
    const io::Checkpoint ckpt = io::read_checkpoint(path);
    if (ckpt.kind != "decoder") throw std::runtime_error("not a decoder checkpoint: " + path);
    if (ckpt.vocab_hash != vocab.hash())
        throw std::runtime_error("stale artifact: vocabulary hash mismatch in " + path);
    decoder::DecoderParams p;
    p.position_embeddings = ckpt.tensor("position_embeddings");
    p.w1 = ckpt.tensor("w1");
    p.b1 = ckpt.vector_tensor("b1");
    p.w2 = ckpt.tensor("w2");
    p.b2 = ckpt.vector_tensor("b2");
    p.w3 = ckpt.tensor("w3");
    p.b3 = ckpt.vector_tensor("b3");
    p.special_begin = ckpt.vector_tensor("special_begin");
    p.special_end = ckpt.vector_tensor("special_end");
    return p;
}

void save_decoder(const std::string& path, const decoder::DecoderParams& p,
                  const lm::Vocabulary& vocab, std::uint64_t seed) {
    io::Checkpoint ckpt;
    ckpt.kind = "decoder";
    ckpt.vocab_hash = vocab.hash();
    ckpt.seed = seed;
    ckpt.add("position_embeddings", p.position_embeddings);
    ckpt.add("w1", p.w1);
    ckpt.add("b1", p.b1);
    ckpt.add("w2", p.w2);
    ckpt.add("b2", p.b2);
    ckpt.add("w3", p.w3);
    ckpt.add("b3", p.b3);
    ckpt.add("special_begin", p.special_begin);
    ckpt.add("special_end", p.special_end);
    io::write_checkpoint(path, ckpt);
}

/// Document fold: the fold of its samples; documents without samples train in
/// every fold.
std::map<std::string, int> doc_folds(const Dataset& data) {
    std::map<std::string, int> folds;
    for (const auto& d : data.docs) folds[d.doc_id] = -1;
    for (const auto& s : data.samples) folds[s.relevant_doc] = s.fold;
    return folds;
}

std::vector<const corpus::QuerySample*> samples_in(const Dataset& data,
                                                   const std::vector<std::string>& ids) {
    std::map<std::string, const corpus::QuerySample*> by_id;
    for (const auto& s : data.samples) by_id[s.sample_id] = &s;
    std::vector<const corpus::QuerySample*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(by_id.at(id));
    return out;
}

std::vector<corpus::QuerySample> deref(const std::vector<const corpus::QuerySample*>& ptrs) {
    std::vector<corpus::QuerySample> out;
    out.reserve(ptrs.size());
    for (const auto* p : ptrs) out.push_back(*p);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& file) {
    ExperimentConfig cfg;
    cfg.corpus_source = file.get_str("corpus", "source", cfg.corpus_source);
    cfg.corpus_path = file.get_str("corpus", "path", cfg.corpus_path);
    cfg.ict_style = file.get_str("corpus", "ict_style", cfg.ict_style);
    cfg.frames_per_doc = file.get_int("corpus", "frames_per_doc", cfg.frames_per_doc);
    cfg.window_trs = file.get_int("corpus", "window_trs", cfg.window_trs);
    cfg.min_freq = file.get_int("corpus", "min_freq", cfg.min_freq);
    cfg.synth.n_docs = file.get_int("corpus", "synth_docs", cfg.synth.n_docs);
    cfg.synth.n_topics = file.get_int("corpus", "synth_topics", cfg.synth.n_topics);
    cfg.synth.sentence_len_min = file.get_int("corpus", "synth_len_min", cfg.synth.sentence_len_min);
    cfg.synth.sentence_len_max = file.get_int("corpus", "synth_len_max", cfg.synth.sentence_len_max);
    cfg.synth.content_words_per_topic =
        file.get_int("corpus", "synth_content_words", cfg.synth.content_words_per_topic);
    cfg.synth.function_words = file.get_int("corpus", "synth_function_words", cfg.synth.function_words);
    cfg.synth.function_prob = file.get_double("corpus", "synth_function_prob", cfg.synth.function_prob);
    cfg.synth.entity_pool = file.get_int("corpus", "synth_entity_pool", cfg.synth.entity_pool);
    cfg.synth.entities_per_doc =
        file.get_int("corpus", "synth_entities_per_doc", cfg.synth.entities_per_doc);
    cfg.synth.entity_prob = file.get_double("corpus", "synth_entity_prob", cfg.synth.entity_prob);

    cfg.signals_mode = file.get_str("signals", "mode", cfg.signals_mode);
    cfg.signals_path = file.get_str("signals", "path", cfg.signals_path);
    cfg.raw_feat_dim = file.get_int("signals", "c", cfg.raw_feat_dim);
    cfg.t_frames = file.get_int("signals", "t_frames", cfg.t_frames);
    cfg.delay_frames = file.get_int("signals", "delay_frames", cfg.delay_frames);
    cfg.noise_sigma = file.get_double("signals", "noise_sigma", cfg.noise_sigma);
    cfg.informativeness = file.get_double("signals", "informativeness", cfg.informativeness);
    cfg.embed_dim = file.get_int("signals", "embed_dim", cfg.embed_dim);
    cfg.idf_weight = file.get_bool("signals", "idf_weight", cfg.idf_weight);
    cfg.idf_power = file.get_double("signals", "idf_power", cfg.idf_power);
    cfg.feature_mask = file.get_str("signals", "feature_mask", cfg.feature_mask);
    cfg.pca_k = file.get_int("signals", "pca_k", cfg.pca_k);

    cfg.d_model = file.get_int("lm", "d_model", cfg.d_model);
    cfg.max_seq_len = file.get_int("lm", "max_seq_len", cfg.max_seq_len);
    cfg.lm_lr = file.get_double("lm", "lr", cfg.lm_lr);
    cfg.lm_batch = file.get_int("lm", "batch_size", cfg.lm_batch);
    cfg.lm_max_epochs = file.get_int("lm", "max_epochs", cfg.lm_max_epochs);
    cfg.lm_patience = file.get_int("lm", "patience", cfg.lm_patience);

    cfg.train.lr = file.get_double("train", "lr", cfg.train.lr);
    cfg.train.batch_size = file.get_int("train", "batch_size", cfg.train.batch_size);
    cfg.train.warmup_epochs = file.get_int("train", "warmup_epochs", cfg.train.warmup_epochs);
    cfg.train.patience = file.get_int("train", "patience", cfg.train.patience);
    cfg.train.max_epochs = file.get_int("train", "max_epochs", cfg.train.max_epochs);
    cfg.lr_select = file.get_bool("train", "lr_select", cfg.lr_select);

    cfg.infer.alpha = file.get_double("infer", "alpha", cfg.infer.alpha);
    cfg.infer.beam_width = file.get_int("infer", "beam_width", cfg.infer.beam_width);
    cfg.infer.max_new_tokens = file.get_int("infer", "max_new_tokens", cfg.infer.max_new_tokens);
    cfg.infer.ppl_stop = file.get_double("infer", "ppl_stop", cfg.infer.ppl_stop);

    cfg.bm25.k1 = file.get_double("rank", "k1", cfg.bm25.k1);
    cfg.bm25.b = file.get_double("rank", "b", cfg.bm25.b);
    cfg.rm3.fb_docs = file.get_int("rank", "rm3_fb_docs", cfg.rm3.fb_docs);
    cfg.rm3.fb_terms = file.get_int("rank", "rm3_fb_terms", cfg.rm3.fb_terms);
    cfg.rm3.lambda = file.get_double("rank", "rm3_lambda", cfg.rm3.lambda);
    cfg.top_k = file.get_int("rank", "top_k", cfg.top_k);
    cfg.sample_terms = file.get_int("rank", "sample_terms", cfg.sample_terms);

    cfg.clarity_docs = file.get_int("analyze", "clarity_docs", cfg.clarity_docs);
    cfg.clarity_smoothing = file.get_double("analyze", "clarity_smoothing", cfg.clarity_smoothing);
    cfg.n_buckets = file.get_int("analyze", "n_buckets", cfg.n_buckets);

    cfg.n_folds = file.get_int("run", "folds", cfg.n_folds);
    cfg.seed = static_cast<std::uint64_t>(file.get_int("run", "seed", static_cast<int>(cfg.seed)));
    for (int s : file.get_int_list("run", "seeds", {}))
        cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    cfg.out_dir = file.get_str("run", "out_dir", cfg.out_dir);
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
}

ConfigFile ExperimentConfig::to_config() const {
    ConfigFile f;
    f.set("corpus", "source", corpus_source);
    f.set("corpus", "path", corpus_path);
    f.set("corpus", "ict_style", ict_style);
    f.set("corpus", "frames_per_doc", std::to_string(frames_per_doc));
    f.set("corpus", "window_trs", std::to_string(window_trs));
    f.set("corpus", "min_freq", std::to_string(min_freq));
    f.set("corpus", "synth_docs", std::to_string(synth.n_docs));
    f.set("corpus", "synth_topics", std::to_string(synth.n_topics));
    f.set("corpus", "synth_len_min", std::to_string(synth.sentence_len_min));
    f.set("corpus", "synth_len_max", std::to_string(synth.sentence_len_max));
    f.set("corpus", "synth_content_words", std::to_string(synth.content_words_per_topic));
    f.set("corpus", "synth_function_words", std::to_string(synth.function_words));
    f.set("corpus", "synth_function_prob", fmt(synth.function_prob));
    f.set("corpus", "synth_entity_pool", std::to_string(synth.entity_pool));
    f.set("corpus", "synth_entities_per_doc", std::to_string(synth.entities_per_doc));
    f.set("corpus", "synth_entity_prob", fmt(synth.entity_prob));
    f.set("signals", "mode", signals_mode);
    f.set("signals", "path", signals_path);
    f.set("signals", "c", std::to_string(raw_feat_dim));
    f.set("signals", "t_frames", std::to_string(t_frames));
    f.set("signals", "delay_frames", std::to_string(delay_frames));
    f.set("signals", "noise_sigma", fmt(noise_sigma));
    f.set("signals", "informativeness", fmt(informativeness));
    f.set("signals", "embed_dim", std::to_string(embed_dim));
    f.set("signals", "idf_weight", idf_weight ? "true" : "false");
    f.set("signals", "idf_power", fmt(idf_power));
    f.set("signals", "feature_mask", feature_mask);
    f.set("signals", "pca_k", std::to_string(pca_k));
    f.set("lm", "d_model", std::to_string(d_model));
    f.set("lm", "max_seq_len", std::to_string(max_seq_len));
    f.set("lm", "lr", fmt(lm_lr));
    f.set("lm", "batch_size", std::to_string(lm_batch));
    f.set("lm", "max_epochs", std::to_string(lm_max_epochs));
    f.set("lm", "patience", std::to_string(lm_patience));
    f.set("train", "lr", fmt(train.lr));
    f.set("train", "batch_size", std::to_string(train.batch_size));
    f.set("train", "warmup_epochs", std::to_string(train.warmup_epochs));
    f.set("train", "patience", std::to_string(train.patience));
    f.set("train", "max_epochs", std::to_string(train.max_epochs));
    f.set("train", "lr_select", lr_select ? "true" : "false");
    f.set("infer", "alpha", fmt(infer.alpha));
    f.set("infer", "beam_width", std::to_string(infer.beam_width));
    f.set("infer", "max_new_tokens", std::to_string(infer.max_new_tokens));
    f.set("infer", "ppl_stop", fmt(infer.ppl_stop));
    f.set("rank", "k1", fmt(bm25.k1));
    f.set("rank", "b", fmt(bm25.b));
    f.set("rank", "rm3_fb_docs", std::to_string(rm3.fb_docs));
    f.set("rank", "rm3_fb_terms", std::to_string(rm3.fb_terms));
    f.set("rank", "rm3_lambda", fmt(rm3.lambda));
    f.set("rank", "top_k", std::to_string(top_k));
    f.set("rank", "sample_terms", std::to_string(sample_terms));
    f.set("analyze", "clarity_docs", std::to_string(clarity_docs));
    f.set("analyze", "clarity_smoothing", fmt(clarity_smoothing));
    f.set("analyze", "n_buckets", std::to_string(n_buckets));
    f.set("run", "folds", std::to_string(n_folds));
    f.set("run", "seed", std::to_string(seed));
    std::string seed_list;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) seed_list += ',';
        seed_list += std::to_string(seeds[i]);
    }
    f.set("run", "seeds", seed_list);
    f.set("run", "out_dir", out_dir);
    return f;
}

std::string default_config_text() {
    std::ostringstream out;
    out << "# brainaug experiment configuration\n"
        << "# every key below is optional; the value shown is the default\n\n"
        << "[corpus]\n"
        << "source = synthetic        # synthetic | text | jsonl\n"
        << "path =                    # frame file for text/jsonl sources\n"
        << "ict_style = sentence      # sentence (thirds) | sliding (window_trs frames)\n"
        << "frames_per_doc = 3\n"
        << "window_trs = 2\n"
        << "min_freq = 1\n"
        << "synth_docs = 80\n"
        << "synth_topics = 10\n"
        << "synth_len_min = 8\n"
        << "synth_len_max = 10\n"
        << "synth_content_words = 24\n"
        << "synth_function_words = 12\n"
        << "synth_function_prob = 0.3\n"
        << "synth_entity_pool = 240       # shared pool of rare entity words\n"
        << "synth_entities_per_doc = 5\n"
        << "synth_entity_prob = 0.25\n\n"
        << "[signals]\n"
        << "mode = synthetic          # synthetic | file (BAF1 matrix + json sidecar, csv fallback)\n"
        << "path =\n"
        << "c = 32                    # raw feature dimension\n"
        << "t_frames = 4              # frames per brain window\n"
        << "delay_frames = 2          # acquisition delay when cutting from sessions\n"
        << "noise_sigma = 0.5\n"
        << "informativeness = 0.8     # 0 = pure noise windows\n"
        << "embed_dim = 16\n"
        << "idf_weight = true         # weight token embeddings by idf when synthesizing\n"
        << "idf_power = 1             # sharpness of the idf weighting\n"
        << "feature_mask =            # optional raw-column subset, e.g. 0-15,20\n"
        << "pca_k = 0                 # 0 = off, -1 = auto (min(64, rank))\n\n"
        << "[lm]\n"
        << "d_model = 64\n"
        << "max_seq_len = 128\n"
        << "lr = 0.001\n"
        << "batch_size = 8\n"
        << "max_epochs = 120\n"
        << "patience = 8\n\n"
        << "[train]\n"
        << "lr = 0.0001\n"
        << "batch_size = 8\n"
        << "warmup_epochs = 10        # warmup runs exactly this many epochs\n"
        << "patience = 10             # early stop on validation NLL\n"
        << "max_epochs = 200\n"
        << "lr_select = false         # pick lr from {1e-3, 1e-4, 1e-5} on validation\n\n"
        << "[infer]\n"
        << "alpha = 0.1               # IDF blend weight; 0 disables the blend\n"
        << "beam_width = 5\n"
        << "max_new_tokens = 5\n"
        << "ppl_stop = 1.5            # mean-perplexity stop for generated content; 0 = off\n\n"
        << "[rank]\n"
        << "k1 = 1.2\n"
        << "b = 0.75\n"
        << "rm3_fb_docs = 10\n"
        << "rm3_fb_terms = 10\n"
        << "rm3_lambda = 0.5\n"
        << "top_k = 100\n"
        << "sample_terms = 0          # >0: rank with this many sampled query terms\n\n"
        << "[analyze]\n"
        << "clarity_docs = 10\n"
        << "clarity_smoothing = 0.1\n"
        << "n_buckets = 4\n\n"
        << "[run]\n"
        << "folds = 5\n"
        << "seed = 7\n"
        << "seeds =                   # comma list for multi-seed runs; empty = seed\n"
        << "out_dir = out\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// synthetic corpus

std::vector<corpus::TrFrame> generate_synthetic_frames(const SynthCorpusParams& params,
                                                       int frames_per_doc, std::uint64_t seed) {
    static const char* kFunctionPool[] = {"the", "a",  "an", "is",   "was",  "to",   "of",  "in",
                                          "on",  "and", "it", "as",  "for",  "with", "that", "by"};
    const int n_function = std::min<int>(params.function_words,
                                         static_cast<int>(std::size(kFunctionPool)));

    Rng rng(seed);
    std::vector<corpus::TrFrame> frames;
    int index = 0;
    for (int doc = 0; doc < params.n_docs; ++doc) {
        const int topic = doc % params.n_topics;

        // the document's own named things, drawn from the shared pool
        std::vector<int> entities;
        for (int e = 0; e < params.entities_per_doc; ++e) {
            int candidate;
            do {
                candidate = rng.uniform_int(params.entity_pool);
            } while (std::find(entities.begin(), entities.end(), candidate) != entities.end());
            entities.push_back(candidate);
        }

        for (int f = 0; f < frames_per_doc; ++f) {
            const int len = params.sentence_len_min +
                            rng.uniform_int(params.sentence_len_max - params.sentence_len_min + 1);
            corpus::TrFrame frame;
            frame.index = index++;
            for (int i = 0; i < len; ++i) {
                // sentences open with common topical material and get specific
                // later, so prefix queries are ambiguous and continuations
                // carry the distinguishing terms
                const double p_entity = i < len / 3 ? 0.0 : 1.5 * params.entity_prob;
                const double roll = rng.uniform();
                if (roll < params.function_prob) {
                    frame.tokens.push_back(kFunctionPool[rng.uniform_int(n_function)]);
                } else if (roll < params.function_prob + p_entity && !entities.empty()) {
                    frame.tokens.push_back(
                        "e" + std::to_string(entities[static_cast<std::size_t>(
                                  rng.uniform_int(static_cast<int>(entities.size())))]));
                } else {
                    // 1/(rank+1) weights give each topic a few frequent words
                    // and a long tail of rarer ones
                    double z = 0.0;
                    for (int w = 0; w < params.content_words_per_topic; ++w) z += 1.0 / (w + 1.0);
                    double u = rng.uniform() * z;
                    int word = 0;
                    for (int w = 0; w < params.content_words_per_topic; ++w) {
                        u -= 1.0 / (w + 1.0);
                        if (u <= 0.0) {
                            word = w;
                            break;
                        }
                    }
                    frame.tokens.push_back("t" + std::to_string(topic) + "w" + std::to_string(word));
                }
            }
            frames.push_back(std::move(frame));
        }
    }
    return frames;
}

// ---------------------------------------------------------------------------
// dataset and window construction

Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
    Rng root(seed);
    Rng corpus_rng = root.fork(1);

    std::vector<corpus::TrFrame> frames;
    if (cfg.corpus_source == "synthetic") {
        frames = generate_synthetic_frames(cfg.synth, cfg.frames_per_doc, corpus_rng.next_u64());
    } else if (cfg.corpus_source == "text") {
        require_input(cfg.corpus_path);
        frames = corpus::load_frames_text(cfg.corpus_path);
    } else if (cfg.corpus_source == "jsonl") {
        require_input(cfg.corpus_path);
        frames = corpus::load_frames_jsonl(cfg.corpus_path);
    } else {
        throw std::runtime_error("unknown corpus source: " + cfg.corpus_source);
    }

    Dataset data;
    data.docs = corpus::segment_documents(frames, cfg.frames_per_doc);
    for (const auto& doc : data.docs) {
        std::vector<corpus::QuerySample> extracted =
            cfg.ict_style == "sliding" ? corpus::extract_ict_sliding(doc, cfg.window_trs)
                                       : corpus::extract_ict_sentence_style(doc);
        data.samples.insert(data.samples.end(), extracted.begin(), extracted.end());
    }

    std::vector<TokenList> token_stream;
    for (const auto& doc : data.docs) token_stream.push_back(doc.tokens);
    data.vocab = lm::build_vocab(token_stream, cfg.min_freq);

    Rng fold_rng = root.fork(2);
    data.folds = corpus::split_folds(data.samples, data.docs, cfg.n_folds, fold_rng.next_u64());
    return data;
}

std::vector<signals::BrainWindow> build_windows(const ExperimentConfig& cfg, const Dataset& data,
                                                std::uint64_t seed, signals::PcaModel* pca_out) {
    Rng root(seed);
    Rng signal_rng = root.fork(3);

    std::vector<signals::BrainWindow> windows;
    if (cfg.signals_mode == "synthetic") {
        signals::EmbedLookup embed =
            signals::make_seeded_embedding(cfg.embed_dim, signal_rng.next_u64());
        if (cfg.idf_weight) {
            // distinctive words dominate a context's semantic representation:
            // scale each token's embedding by its (normalized) idf raised to
            // idf_power
            const ranking::RankingIndex index = ranking::build_index(data.docs, data.vocab);
            const augment::IdfTable idf = augment::build_idf(index);
            const double mean_idf = std::max(idf.values.mean(), 1e-9);
            const lm::Vocabulary vocab = data.vocab;
            const signals::EmbedLookup base = embed;
            const double power = cfg.idf_power;
            embed = [base, idf, vocab, mean_idf, power](const std::string& token) {
                const TokenId id = vocab.id_of(token);
                const double w = std::pow(idf.values(id) / mean_idf, power);
                return Vector(base(token) * w);
            };
        }
        windows = signals::synthesize_signals(data.samples, embed, cfg.embed_dim, cfg.raw_feat_dim,
                                              cfg.noise_sigma, cfg.informativeness,
                                              cfg.delay_frames, cfg.t_frames,
                                              signal_rng.next_u64());
    } else if (cfg.signals_mode == "file") {
        require_input(cfg.signals_path);
        signals::SignalSession session;
        if (cfg.signals_path.size() > 4 &&
            cfg.signals_path.substr(cfg.signals_path.size() - 4) == ".csv") {
            session.features = io::read_matrix_csv(cfg.signals_path);
        } else {
            session.features = io::read_matrix(cfg.signals_path);
        }
        session.session_id = "session";
        const std::string sidecar = cfg.signals_path + ".json";
        if (io::file_exists(sidecar)) {
            const auto j = nlohmann::json::parse(io::read_file(sidecar));
            session.session_id = j.at("session_id").get<std::string>();
            session.tr_seconds = j.at("tr_seconds").get<double>();
        }
        // global frame base of each document, in segmentation order
        std::map<std::string, int> doc_base;
        int base = 0;
        for (const auto& doc : data.docs) {
            doc_base[doc.doc_id] = base;
            base += static_cast<int>(doc.frames.size());
        }
        for (const auto& s : data.samples) {
            const auto& doc = *std::find_if(data.docs.begin(), data.docs.end(),
                                            [&](const auto& d) { return d.doc_id == s.relevant_doc; });
            // frame in which the query ends
            std::size_t acc = 0;
            int frame_pos = 0;
            for (std::size_t fi = 0; fi < doc.frames.size(); ++fi) {
                acc += doc.frames[fi].tokens.size();
                if (acc > s.query_offset + s.query.size() - 1) {
                    frame_pos = static_cast<int>(fi);
                    break;
                }
            }
            signals::BrainWindow w = signals::cut_window(
                session, doc_base.at(s.relevant_doc) + frame_pos, cfg.delay_frames, cfg.t_frames);
            w.sample_ref = s.sample_id;
            windows.push_back(std::move(w));
        }
    } else {
        throw std::runtime_error("unknown signals mode: " + cfg.signals_mode);
    }

    if (!cfg.feature_mask.empty()) {
        const std::vector<int> cols = parse_mask(cfg.feature_mask);
        for (auto& w : windows) {
            Matrix sub(w.matrix.rows(), static_cast<Eigen::Index>(cols.size()));
            for (std::size_t j = 0; j < cols.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = w.matrix.col(cols[j]);
            w.matrix = std::move(sub);
        }
    }

    if (cfg.pca_k != 0 && !windows.empty()) {
        const Eigen::Index c = windows.front().matrix.cols();
        Matrix stacked(static_cast<Eigen::Index>(windows.size()) * cfg.t_frames, c);
        for (std::size_t i = 0; i < windows.size(); ++i)
            stacked.middleRows(static_cast<Eigen::Index>(i) * cfg.t_frames, cfg.t_frames) =
                windows[i].matrix;
        int k = cfg.pca_k;
        if (k < 0) k = static_cast<int>(std::min<Eigen::Index>(64, std::min(stacked.rows() - 1, c)));
        const signals::PcaModel model = signals::fit_pca(stacked, k);
        for (auto& w : windows) w.matrix = signals::apply_pca(model, w.matrix);
        if (pca_out) *pca_out = model;
    }
    return windows;
}

// ---------------------------------------------------------------------------
// stages

void stage_build_corpus(const ExperimentConfig& cfg, std::uint64_t seed) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "build-corpus");
    if (manifest.done(key)) return;

    const Dataset data = build_dataset(cfg, seed);

    std::vector<std::string> outputs;
    if (cfg.corpus_source == "synthetic") {
        std::ostringstream frames_text;
        Rng root(seed);
        Rng corpus_rng = root.fork(1);
        for (const auto& f :
             generate_synthetic_frames(cfg.synth, cfg.frames_per_doc, corpus_rng.next_u64())) {
            for (std::size_t i = 0; i < f.tokens.size(); ++i) {
                if (i) frames_text << ' ';
                frames_text << f.tokens[i];
            }
            frames_text << '\n';
        }
        io::write_file(paths.frames(), frames_text.str());
        outputs.push_back(paths.frames());
    }

    io::write_file(paths.documents(), corpus::documents_to_jsonl(data.docs));
    io::write_file(paths.samples(), corpus::samples_to_jsonl(data.samples));
    nlohmann::json vj;
    vj["tokens"] = data.vocab.tokens;
    vj["unk_id"] = data.vocab.unk_id;
    vj["bos_id"] = data.vocab.bos_id;
    vj["eos_id"] = data.vocab.eos_id;
    io::write_file(paths.vocab(), vj.dump() + "\n");
    auto fj = nlohmann::json::array();
    for (const auto& f : data.folds)
        fj.push_back({{"train", f.train}, {"validation", f.validation}, {"test", f.test}});
    io::write_file(paths.folds(), fj.dump() + "\n");

    outputs.insert(outputs.end(),
                   {paths.documents(), paths.samples(), paths.vocab(), paths.folds()});
    manifest.record(key, outputs);
}

void stage_synth_signals(const ExperimentConfig& cfg, std::uint64_t seed) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "synth-signals");
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);
    signals::PcaModel pca;
    const auto windows = build_windows(cfg, data, seed, &pca);
    if (windows.empty()) throw std::runtime_error("no brain windows produced");

    Matrix stacked(static_cast<Eigen::Index>(windows.size()) * cfg.t_frames,
                   windows.front().matrix.cols());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        stacked.middleRows(static_cast<Eigen::Index>(i) * cfg.t_frames, cfg.t_frames) =
            windows[i].matrix;
        ids.push_back(windows[i].sample_ref);
    }
    io::write_matrix(paths.windows_bin(), stacked);
    nlohmann::json meta;
    meta["sample_ids"] = ids;
    meta["t_frames"] = cfg.t_frames;
    meta["feat_dim"] = windows.front().matrix.cols();
    io::write_file(paths.windows_meta(), meta.dump() + "\n");

    std::vector<std::string> outputs = {paths.windows_bin(), paths.windows_meta()};
    if (cfg.pca_k != 0) {
        io::Checkpoint ckpt;
        ckpt.kind = "pca";
        ckpt.vocab_hash = data.vocab.hash();
        ckpt.seed = seed;
        ckpt.add("mean", pca.mean);
        ckpt.add("components", pca.components);
        ckpt.add("explained_variance", pca.explained_variance);
        io::write_checkpoint(paths.pca(), ckpt);
        outputs.push_back(paths.pca());
    }
    manifest.record(key, outputs);
}

namespace {

struct FoldDocs {
    std::vector<IdList> train;
    std::vector<IdList> validation;
};

FoldDocs fold_documents(const Dataset& data, int fold, int n_folds) {
    const auto folds = doc_folds(data);
    const int val_fold = (fold + 1) % n_folds;
    FoldDocs out;
    for (const auto& doc : data.docs) {
        const int f = folds.at(doc.doc_id);
        if (f == fold) continue;
        if (f == val_fold) {
            out.validation.push_back(data.vocab.to_ids(doc.tokens));
        } else {
            out.train.push_back(data.vocab.to_ids(doc.tokens));
        }
    }
    return out;
}

}  // namespace

void stage_train_lm(const ExperimentConfig& cfg, std::uint64_t seed, int fold) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "train-lm", fold);
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);
    const FoldDocs docs = fold_documents(data, fold, cfg.n_folds);

    lm::LmConfig lm_cfg;
    lm_cfg.vocab_size = data.vocab.size();
    lm_cfg.d_model = cfg.d_model;
    lm_cfg.max_seq_len = cfg.max_seq_len;

    lm::PretrainConfig pre;
    pre.lr = cfg.lm_lr;
    pre.batch_size = cfg.lm_batch;
    pre.max_epochs = cfg.lm_max_epochs;
    pre.patience = cfg.lm_patience;
    Rng root(seed);
    pre.seed = root.fork(10 + static_cast<std::uint64_t>(fold)).next_u64();

    lm::PretrainReport report;
    const lm::LmParams params =
        lm::pretrain_lm(docs.train, docs.validation, data.vocab, lm_cfg, pre, &report);
    save_lm(paths.lm_ckpt(fold), params, data.vocab, pre.seed);

    std::ostringstream csv;
    csv << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < report.train_loss.size(); ++e)
        csv << (e + 1) << ',' << fmt(report.train_loss[e]) << ',' << fmt(report.val_loss[e])
            << '\n';
    io::write_file(paths.lm_report(fold), csv.str());

    manifest.record(key, {paths.lm_ckpt(fold), paths.lm_report(fold)});
}

void stage_train_decoder(const ExperimentConfig& cfg, std::uint64_t seed, int fold) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "train-decoder", fold);
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);
    const auto windows = load_windows(paths);
    const lm::LmParams lm_params = load_lm(paths.lm_ckpt(fold), data.vocab);

    const auto& split = data.folds.at(static_cast<std::size_t>(fold));
    const auto train_items =
        trainer::make_training_items(deref(samples_in(data, split.train)), windows, data.vocab);
    const auto val_items =
        trainer::make_training_items(deref(samples_in(data, split.validation)), windows, data.vocab);

    const int c = windows.empty() ? cfg.raw_feat_dim : static_cast<int>(windows.front().feat_dim());
    Rng root(seed);
    const std::uint64_t dec_seed = root.fork(100 + static_cast<std::uint64_t>(fold)).next_u64();

    trainer::TrainConfig tc = cfg.train;
    tc.seed = dec_seed;

    auto train_once = [&](double lr) {
        decoder::DecoderParams dec =
            decoder::DecoderParams::init(cfg.t_frames, c, cfg.d_model, dec_seed);
        decoder::DecoderParams last;
        trainer::TrainConfig warm_cfg = tc;
        warm_cfg.lr = lr;
        const trainer::TrainReport warm = trainer::run_warmup(dec, lm_params, train_items, warm_cfg);
        trainer::TrainConfig tune_cfg = tc;
        tune_cfg.lr = lr;
        const trainer::TrainReport tune =
            trainer::run_prompt_tuning(dec, lm_params, train_items, val_items, tune_cfg, &last);
        return std::tuple<decoder::DecoderParams, decoder::DecoderParams, trainer::TrainReport,
                          trainer::TrainReport>(std::move(dec), std::move(last), warm, tune);
    };

    std::vector<double> lrs = cfg.lr_select ? std::vector<double>{1e-3, 1e-4, 1e-5}
                                            : std::vector<double>{cfg.train.lr};
    decoder::DecoderParams best_dec, last_dec;
    trainer::TrainReport best_warm, best_tune;
    double best_val = std::numeric_limits<double>::infinity();
    for (double lr : lrs) {
        auto [dec, last, warm, tune] = train_once(lr);
        if (tune.best_val < best_val) {
            best_val = tune.best_val;
            best_dec = std::move(dec);
            last_dec = std::move(last);
            best_warm = std::move(warm);
            best_tune = std::move(tune);
        }
    }

    save_decoder(paths.dec_ckpt(fold), best_dec, data.vocab, dec_seed);
    save_decoder(paths.dec_dir(fold) + "/decoder_last.ckpt", last_dec, data.vocab, dec_seed);
    io::write_file(paths.warmup_report(fold), best_warm.to_csv());
    io::write_file(paths.tuning_report(fold), best_tune.to_csv());
    io::write_file(paths.dec_dir(fold) + "/tuning_report.json", best_tune.to_json() + "\n");
    manifest.record(key, {paths.dec_ckpt(fold), paths.dec_dir(fold) + "/decoder_last.ckpt",
                          paths.warmup_report(fold), paths.tuning_report(fold),
                          paths.dec_dir(fold) + "/tuning_report.json"});
}

namespace {

std::vector<std::string> generation_conditions() {
    return {"brain", "no_brain", "rs_brain", "no_idf"};
}

}  // namespace

void stage_augment(const ExperimentConfig& cfg, std::uint64_t seed, int fold,
                   const std::string& condition_filter) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "augment", fold) +
                            (condition_filter.empty() ? "" : "/" + condition_filter);
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);
    const auto windows = load_windows(paths);
    const lm::LmParams lm_params = load_lm(paths.lm_ckpt(fold), data.vocab);
    const decoder::DecoderParams dec = load_decoder(paths.dec_ckpt(fold), data.vocab);

    const auto& split = data.folds.at(static_cast<std::size_t>(fold));
    const auto test_samples = deref(samples_in(data, split.test));
    const auto test_items = trainer::make_training_items(test_samples, windows, data.vocab);

    // derangement of the test windows for the randomly-sampled control
    std::vector<signals::BrainWindow> test_windows;
    for (const auto& item : test_items) test_windows.push_back(item.window);
    Rng root(seed);
    const std::uint64_t shuffle_seed = root.fork(200 + static_cast<std::uint64_t>(fold)).next_u64();
    const std::vector<signals::BrainWindow> shuffled =
        test_windows.size() >= 2 ? signals::shuffle_windows(test_windows, shuffle_seed)
                                 : test_windows;

    const ranking::RankingIndex index = ranking::build_index(data.docs, data.vocab);
    const augment::IdfTable idf = augment::build_idf(index);

    std::vector<std::string> outputs;
    for (const std::string& cond_name : generation_conditions()) {
        if (!condition_filter.empty() && cond_name != condition_filter) continue;
        const augment::Condition cond = augment::condition_from_name(cond_name);

        std::vector<augment::AugmentedQuery> results(test_items.size());
        std::vector<double> ppl(test_items.size(), 0.0);
        std::vector<double> rouge(test_items.size(), 0.0);
        parallel_for(test_items.size(), [&](std::size_t i) {
            const auto& item = test_items[i];
            const signals::BrainWindow* window = nullptr;
            switch (cond) {
                case augment::Condition::brain:
                case augment::Condition::no_idf: window = &item.window; break;
                case augment::Condition::rs_brain: window = &shuffled[i]; break;
                case augment::Condition::no_brain: window = nullptr; break;
            }
            augment::GenerateConfig gen = cfg.infer;
            gen.condition = cond;
            results[i] = augment::generate_continuation(lm_params, &dec, window, item.query_ids,
                                                        data.vocab, idf, gen, item.sample_id);
            ppl[i] = analysis::log_perplexity(lm_params, &dec, window, item.query_ids,
                                              item.continuation_ids);
            rouge[i] = analysis::rouge_l(results[i].continuation, test_samples[i].continuation);
        });

        std::ostringstream out;
        for (std::size_t i = 0; i < results.size(); ++i) {
            nlohmann::json j;
            j["sample_id"] = results[i].sample_id;
            j["condition"] = cond_name;
            j["continuation"] = results[i].continuation;
            j["beam_score"] = results[i].beam_score;
            j["log_ppl"] = ppl[i];
            j["rouge_l"] = rouge[i];
            out << j.dump() << '\n';
        }
        io::write_file(paths.aug(fold, cond_name), out.str());
        outputs.push_back(paths.aug(fold, cond_name));
    }
    manifest.record(key, outputs);
}

void stage_rank(const ExperimentConfig& cfg, std::uint64_t seed, int fold) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "rank", fold);
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);
    const ranking::RankingIndex index = ranking::build_index(data.docs, data.vocab);

    // generated continuations per condition
    std::map<std::string, std::map<std::string, TokenList>> continuations;
    for (const std::string& cond : generation_conditions()) {
        require_input(paths.aug(fold, cond));
        std::istringstream in(io::read_file(paths.aug(fold, cond)));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            continuations[cond][j.at("sample_id").get<std::string>()] =
                j.at("continuation").get<TokenList>();
        }
    }

    const auto& split = data.folds.at(static_cast<std::size_t>(fold));
    const auto test_samples = deref(samples_in(data, split.test));

    const int k = std::max(cfg.top_k, 20);
    Rng root(seed);
    Rng term_rng = root.fork(300 + static_cast<std::uint64_t>(fold));

    std::map<std::string, std::ostringstream> run_files;
    for (const auto& sample : test_samples) {
        TokenList base_query = sample.query;
        if (cfg.sample_terms > 0)
            base_query = corpus::sample_query_terms(sample.query, cfg.sample_terms,
                                                    term_rng.next_u64());
        const IdList base_ids = data.vocab.to_ids(base_query);
        const ranking::SpanMask mask = ranking::SpanMask::for_sample(index, data.vocab, sample);

        for (const std::string& cond : all_conditions()) {
            ranking::RankedList ranked;
            if (cond == "original") {
                ranked = ranking::rank(index, base_ids, k, cfg.bm25, &mask);
            } else if (cond == "unsup") {
                const auto weighted = ranking::rm3_expand(index, base_ids, cfg.rm3, cfg.bm25, &mask);
                ranked = ranking::rank_weighted(index, weighted, k, cfg.bm25, &mask);
            } else if (cond == "brain_unsup") {
                IdList ids = base_ids;
                for (const auto& tok : continuations.at("brain").at(sample.sample_id))
                    ids.push_back(data.vocab.id_of(tok));
                const auto weighted = ranking::rm3_expand(index, ids, cfg.rm3, cfg.bm25, &mask);
                ranked = ranking::rank_weighted(index, weighted, k, cfg.bm25, &mask);
            } else {
                IdList ids = base_ids;
                for (const auto& tok : continuations.at(cond).at(sample.sample_id))
                    ids.push_back(data.vocab.id_of(tok));
                ranked = ranking::rank(index, ids, k, cfg.bm25, &mask);
            }
            run_files[cond] << ranking::run_file_lines(sample.sample_id, ranked, cond);
        }
    }

    std::vector<std::string> outputs;
    for (const std::string& cond : all_conditions()) {
        io::write_file(paths.run(fold, cond), run_files[cond].str());
        outputs.push_back(paths.run(fold, cond));
    }
    manifest.record(key, outputs);
}

namespace {

struct RunEntry {
    std::string doc_id;
    double score;
};

std::map<std::string, ranking::RankedList> parse_run_file(const std::string& text) {
    std::map<std::string, ranking::RankedList> runs;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string sample_id, q0, doc_id, tag;
        int rank_pos;
        double score;
        ls >> sample_id >> q0 >> doc_id >> rank_pos >> score >> tag;
        runs[sample_id].push_back({doc_id, score});
    }
    return runs;
}

}  // namespace

void stage_evaluate(const ExperimentConfig& cfg, std::uint64_t seed) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "evaluate");
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);

    // the per-fold test sets must partition the samples
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& f : data.folds) {
        for (const auto& id : f.test) {
            seen.insert(id);
            ++total;
        }
    }
    if (total != data.samples.size() || seen.size() != data.samples.size())
        throw std::logic_error("fold test sets do not partition the sample set");

    std::map<std::string, std::string> relevant;
    std::map<std::string, int> sample_fold;
    for (const auto& s : data.samples) {
        relevant[s.sample_id] = s.relevant_doc;
        sample_fold[s.sample_id] = s.fold;
    }

    std::ostringstream qrels;
    for (const auto& [id, doc] : relevant) qrels << ranking::qrels_line(id, doc);
    io::write_file(paths.qrels(), qrels.str());

    std::ostringstream csv;
    csv << "seed,fold,sample_id,condition,has_generation,log_ppl,rouge_l,ndcg10,ndcg20,recall20,ap\n";
    for (int fold = 0; fold < cfg.n_folds; ++fold) {
        // generation metrics keyed by (condition, sample)
        std::map<std::string, std::map<std::string, std::pair<double, double>>> gen;
        for (const std::string& cond : generation_conditions()) {
            require_input(paths.aug(fold, cond));
            std::istringstream in(io::read_file(paths.aug(fold, cond)));
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const auto j = nlohmann::json::parse(line);
                gen[cond][j.at("sample_id").get<std::string>()] = {
                    j.at("log_ppl").get<double>(), j.at("rouge_l").get<double>()};
            }
        }
        for (const std::string& cond : all_conditions()) {
            require_input(paths.run(fold, cond));
            const auto runs = parse_run_file(io::read_file(paths.run(fold, cond)));
            std::vector<std::string> ids;
            for (const auto& [id, ranked] : runs) ids.push_back(id);
            std::sort(ids.begin(), ids.end());
            for (const auto& id : ids) {
                const auto& ranked = runs.at(id);
                const std::set<std::string> judged = {relevant.at(id)};
                const double n10 = ranking::ndcg_at_k(ranked, judged, 10);
                const double n20 = ranking::ndcg_at_k(ranked, judged, 20);
                const double r20 = ranking::recall_at_k(ranked, judged, 20);
                const double ap = ranking::average_precision(ranked, judged);
                const std::string gen_cond = cond == "brain_unsup" ? "brain" : cond;
                const bool has_gen = gen.count(gen_cond) && gen[gen_cond].count(id);
                double ppl = 0.0, rl = 0.0;
                if (has_gen) {
                    ppl = gen[gen_cond][id].first;
                    rl = gen[gen_cond][id].second;
                }
                csv << seed << ',' << fold << ',' << id << ',' << cond << ','
                    << (has_gen ? 1 : 0) << ',' << fmt(ppl) << ',' << fmt(rl) << ',' << fmt(n10)
                    << ',' << fmt(n20) << ',' << fmt(r20) << ',' << fmt(ap) << '\n';
            }
        }
    }
    io::write_file(paths.per_sample(), csv.str());
    manifest.record(key, {paths.per_sample(), paths.qrels()});
}

namespace {

std::vector<SampleMetrics> parse_per_sample_csv(const std::string& text) {
    std::vector<SampleMetrics> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        SampleMetrics m;
        std::getline(ls, cell, ',');
        m.seed = std::stoull(cell);
        std::getline(ls, cell, ',');
        m.fold = std::stoi(cell);
        std::getline(ls, m.sample_id, ',');
        std::getline(ls, m.condition, ',');
        std::getline(ls, cell, ',');
        m.has_generation = cell == "1";
        std::getline(ls, cell, ',');
        m.log_ppl = std::stod(cell);
        std::getline(ls, cell, ',');
        m.rouge_l = std::stod(cell);
        std::getline(ls, cell, ',');
        m.ndcg10 = std::stod(cell);
        std::getline(ls, cell, ',');
        m.ndcg20 = std::stod(cell);
        std::getline(ls, cell, ',');
        m.recall20 = std::stod(cell);
        std::getline(ls, cell, ',');
        m.ap = std::stod(cell);
        rows.push_back(std::move(m));
    }
    return rows;
}

double metric_of(const SampleMetrics& m, const std::string& metric) {
    if (metric == "log_ppl") return m.log_ppl;
    if (metric == "rouge_l") return m.rouge_l;
    if (metric == "ndcg10") return m.ndcg10;
    if (metric == "ndcg20") return m.ndcg20;
    if (metric == "recall20") return m.recall20;
    if (metric == "ap") return m.ap;
    throw std::invalid_argument("unknown metric: " + metric);
}

bool metric_is_generation(const std::string& metric) {
    return metric == "log_ppl" || metric == "rouge_l";
}

}  // namespace

void stage_analyze(const ExperimentConfig& cfg, std::uint64_t seed) {
    Paths paths{cfg.out_dir, seed};
    Manifest manifest(paths.manifest(), cfg.hash());
    const std::string key = stage_key(seed, "analyze");
    if (manifest.done(key)) return;

    const Dataset data = load_dataset(paths);
    require_input(paths.per_sample());
    const auto rows = parse_per_sample_csv(io::read_file(paths.per_sample()));

    const ranking::RankingIndex index = ranking::build_index(data.docs, data.vocab);

    // query features of every sample's original query
    std::map<std::string, analysis::QueryFeatures> features;
    std::ostringstream fcsv;
    fcsv << "sample_id,avg_ictf,avg_idf,specificity,clarity\n";
    std::vector<const corpus::QuerySample*> ordered;
    for (const auto& s : data.samples) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
    for (const auto* s : ordered) {
        const IdList ids = data.vocab.to_ids(s->query);
        analysis::QueryFeatures f;
        f.sample_id = s->sample_id;
        f.avg_ictf = analysis::avg_ictf(ids, index);
        f.avg_idf = analysis::avg_idf(ids, index);
        f.specificity = analysis::specificity(ids, index);
        f.clarity = analysis::clarity(ids, index, cfg.clarity_docs, cfg.clarity_smoothing, cfg.bm25);
        features[f.sample_id] = f;
        fcsv << f.sample_id << ',' << fmt(f.avg_ictf) << ',' << fmt(f.avg_idf) << ','
             << fmt(f.specificity) << ',' << fmt(f.clarity) << '\n';
    }
    io::write_file(paths.features(), fcsv.str());

    // gain of the true-signal model over the shuffled-signal control
    std::map<std::string, double> ndcg_brain, ndcg_rs;
    for (const auto& r : rows) {
        if (r.condition == "brain") ndcg_brain[r.sample_id] = r.ndcg20;
        if (r.condition == "rs_brain") ndcg_rs[r.sample_id] = r.ndcg20;
    }
    std::vector<std::string> ids;
    for (const auto& [id, v] : ndcg_brain)
        if (ndcg_rs.count(id)) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    std::vector<double> delta;
    std::map<std::string, std::vector<double>> feature_cols;
    for (const auto& id : ids) {
        delta.push_back(ndcg_brain[id] - ndcg_rs[id]);
        const auto& f = features.at(id);
        feature_cols["avg_ictf"].push_back(f.avg_ictf);
        feature_cols["avg_idf"].push_back(f.avg_idf);
        feature_cols["specificity"].push_back(f.specificity);
        feature_cols["clarity"].push_back(f.clarity);
    }

    std::ostringstream ccsv;
    ccsv << "feature,n,pearson_r\n";
    std::vector<std::string> outputs = {paths.features(), paths.correlations()};
    for (const char* name : {"avg_ictf", "avg_idf", "specificity", "clarity"}) {
        std::string r_text = "nan";
        try {
            r_text = fmt(analysis::pearson_r(feature_cols[name], delta));
        } catch (const std::exception&) {
            // degenerate feature or gain distribution; leave nan
        }
        ccsv << name << ',' << delta.size() << ',' << r_text << '\n';

        try {
            const auto buckets =
                analysis::bucket_report(feature_cols[name], {delta}, cfg.n_buckets);
            io::write_file(paths.buckets(name),
                           analysis::bucket_report_csv(buckets, {"delta_ndcg20"}));
            outputs.push_back(paths.buckets(name));
        } catch (const std::exception&) {
            // constant feature: no bucket table
        }
    }
    io::write_file(paths.correlations(), ccsv.str());
    manifest.record(key, outputs);
}

// ---------------------------------------------------------------------------
// aggregation

std::vector<double> ExperimentResult::metric_values(const std::string& condition,
                                                    const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows) {
        if (r.condition != condition) continue;
        if (metric_is_generation(metric) && !r.has_generation) continue;
        out.push_back(metric_of(r, metric));
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> ExperimentResult::paired_metric(
    const std::string& cond_a, const std::string& cond_b, const std::string& metric) const {
    std::map<std::pair<std::uint64_t, std::string>, double> a_vals, b_vals;
    for (const auto& r : rows) {
        if (metric_is_generation(metric) && !r.has_generation) continue;
        if (r.condition == cond_a) a_vals[{r.seed, r.sample_id}] = metric_of(r, metric);
        if (r.condition == cond_b) b_vals[{r.seed, r.sample_id}] = metric_of(r, metric);
    }
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [key, va] : a_vals) {
        auto it = b_vals.find(key);
        if (it == b_vals.end()) continue;
        out.first.push_back(va);
        out.second.push_back(it->second);
    }
    return out;
}

double ExperimentResult::mean_metric(const std::string& condition,
                                     const std::string& metric) const {
    const auto vals = metric_values(condition, metric);
    if (vals.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
}

double ExperimentResult::mean_metric_for_seed(std::uint64_t seed, const std::string& condition,
                                              const std::string& metric) const {
    double total = 0.0;
    long count = 0;
    for (const auto& r : rows) {
        if (r.seed != seed || r.condition != condition) continue;
        if (metric_is_generation(metric) && !r.has_generation) continue;
        total += metric_of(r, metric);
        ++count;
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : total / static_cast<double>(count);
}

namespace {

void write_tables(const ExperimentConfig& cfg, const ExperimentResult& result) {
    Paths paths{cfg.out_dir, 0};
    const std::vector<std::string> metrics = {"log_ppl",  "rouge_l",  "ndcg10",
                                              "ndcg20",   "recall20", "ap"};

    // pooled per-sample rows
    std::ostringstream pooled;
    pooled << "seed,fold,sample_id,condition,has_generation,log_ppl,rouge_l,ndcg10,ndcg20,"
              "recall20,ap\n";
    for (const auto& r : result.rows)
        pooled << r.seed << ',' << r.fold << ',' << r.sample_id << ',' << r.condition << ','
               << (r.has_generation ? 1 : 0) << ',' << fmt(r.log_ppl) << ',' << fmt(r.rouge_l)
               << ',' << fmt(r.ndcg10) << ',' << fmt(r.ndcg20) << ',' << fmt(r.recall20) << ','
               << fmt(r.ap) << '\n';
    io::write_file(paths.pooled_per_sample(), pooled.str());

    // condition means pooled over seeds and folds
    std::ostringstream summary;
    summary << "condition,n,log_ppl,rouge_l,ndcg10,ndcg20,recall20,map\n";
    for (const std::string& cond : all_conditions()) {
        summary << cond << ',' << result.metric_values(cond, "ndcg20").size();
        for (const std::string& m : metrics) {
            const double v = result.mean_metric(cond, m);
            summary << ',' << (std::isnan(v) ? "" : fmt(v));
        }
        summary << '\n';
    }
    io::write_file(paths.summary(), summary.str());

    // per-seed means
    std::ostringstream by_seed;
    by_seed << "seed,condition,n,log_ppl,rouge_l,ndcg10,ndcg20,recall20,map\n";
    for (std::uint64_t seed : cfg.effective_seeds()) {
        for (const std::string& cond : all_conditions()) {
            long n = 0;
            for (const auto& r : result.rows)
                if (r.seed == seed && r.condition == cond) ++n;
            by_seed << seed << ',' << cond << ',' << n;
            for (const std::string& m : metrics) {
                const double v = result.mean_metric_for_seed(seed, cond, m);
                by_seed << ',' << (std::isnan(v) ? "" : fmt(v));
            }
            by_seed << '\n';
        }
    }
    io::write_file(paths.summary_by_seed(), by_seed.str());

    // paired t-tests: the brain condition against everything else
    std::ostringstream sig;
    sig << "metric,condition,n,mean_brain,mean_other,t,p,significant\n";
    for (const std::string& m : metrics) {
        for (const std::string& cond : all_conditions()) {
            if (cond == "brain") continue;
            const auto [a, b] = result.paired_metric("brain", cond, m);
            if (a.size() < 3) continue;
            const double mean_a =
                std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
            const double mean_b =
                std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
            std::string t_text = "nan", p_text = "nan", sig_text = "";
            try {
                const auto res = analysis::paired_t_test(a, b);
                t_text = fmt(res.t);
                p_text = fmt(res.p);
                sig_text = res.p <= 0.05 ? "*" : "";
            } catch (const std::exception&) {
                // identical paired values: no statistic
            }
            sig << m << ',' << cond << ',' << a.size() << ',' << fmt(mean_a) << ','
                << fmt(mean_b) << ',' << t_text << ',' << p_text << ',' << sig_text << '\n';
        }
    }
    io::write_file(paths.significance(), sig.str());

    // pooled correlations between the brain-vs-shuffled gain and query features
    std::map<std::pair<std::uint64_t, std::string>, double> brain_n20, rs_n20;
    for (const auto& r : result.rows) {
        if (r.condition == "brain") brain_n20[{r.seed, r.sample_id}] = r.ndcg20;
        if (r.condition == "rs_brain") rs_n20[{r.seed, r.sample_id}] = r.ndcg20;
    }
    std::map<std::string, std::vector<double>> feature_cols;
    std::vector<double> delta;
    for (std::uint64_t seed : cfg.effective_seeds()) {
        Paths sp{cfg.out_dir, seed};
        if (!io::file_exists(sp.features())) continue;
        std::istringstream in(io::read_file(sp.features()));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::string id, cell;
            std::getline(ls, id, ',');
            const auto key = std::make_pair(seed, id);
            if (!brain_n20.count(key) || !rs_n20.count(key)) continue;
            delta.push_back(brain_n20[key] - rs_n20[key]);
            std::getline(ls, cell, ',');
            feature_cols["avg_ictf"].push_back(std::stod(cell));
            std::getline(ls, cell, ',');
            feature_cols["avg_idf"].push_back(std::stod(cell));
            std::getline(ls, cell, ',');
            feature_cols["specificity"].push_back(std::stod(cell));
            std::getline(ls, cell, ',');
            feature_cols["clarity"].push_back(std::stod(cell));
        }
    }
    std::ostringstream corr;
    corr << "feature,n,pearson_r\n";
    for (const char* name : {"avg_ictf", "avg_idf", "specificity", "clarity"}) {
        std::string r_text = "nan";
        try {
            r_text = fmt(analysis::pearson_r(feature_cols[name], delta));
        } catch (const std::exception&) {
        }
        corr << name << ',' << delta.size() << ',' << r_text << '\n';
    }
    io::write_file(paths.pooled_correlations(), corr.str());
}

}  // namespace

ExperimentResult run_all(const ExperimentConfig& cfg, const Progress& progress) {
    auto report = [&](const std::string& msg) {
        if (progress) progress(msg);
    };

    ExperimentResult result;
    result.out_dir = cfg.out_dir;
    for (std::uint64_t seed : cfg.effective_seeds()) {
        report("seed " + std::to_string(seed) + ": corpus");
        stage_build_corpus(cfg, seed);
        report("seed " + std::to_string(seed) + ": signals");
        stage_synth_signals(cfg, seed);
        for (int fold = 0; fold < cfg.n_folds; ++fold) {
            report("seed " + std::to_string(seed) + " fold " + std::to_string(fold) +
                   ": language model");
            stage_train_lm(cfg, seed, fold);
            report("seed " + std::to_string(seed) + " fold " + std::to_string(fold) + ": decoder");
            stage_train_decoder(cfg, seed, fold);
            report("seed " + std::to_string(seed) + " fold " + std::to_string(fold) + ": augment");
            stage_augment(cfg, seed, fold);
            report("seed " + std::to_string(seed) + " fold " + std::to_string(fold) + ": rank");
            stage_rank(cfg, seed, fold);
        }
        report("seed " + std::to_string(seed) + ": evaluate");
        stage_evaluate(cfg, seed);
        report("seed " + std::to_string(seed) + ": analyze");
        stage_analyze(cfg, seed);

        Paths paths{cfg.out_dir, seed};
        const auto rows = parse_per_sample_csv(io::read_file(paths.per_sample()));
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
    write_tables(cfg, result);
    report("done");
    return result;
}

ExperimentResult load_result(const ExperimentConfig& cfg) {
    Paths paths{cfg.out_dir, 0};
    require_input(paths.pooled_per_sample());
    ExperimentResult result;
    result.out_dir = cfg.out_dir;
    result.rows = parse_per_sample_csv(io::read_file(paths.pooled_per_sample()));
    return result;
}

}  // namespace brainaug::experiment
