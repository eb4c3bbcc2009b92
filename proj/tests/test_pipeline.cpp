#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "brainaug/experiment.hpp"
#include "brainaug/io.hpp"

#include <filesystem>
#include <set>

using namespace brainaug;
using namespace brainaug::experiment;

namespace {

std::string tmp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("brainaug_pipe_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

/// A deliberately small experiment that still runs every stage.
ExperimentConfig tiny_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.synth.n_docs = 12;
    cfg.synth.n_topics = 3;
    cfg.synth.content_words_per_topic = 10;
    cfg.raw_feat_dim = 10;
    cfg.embed_dim = 6;
    cfg.t_frames = 2;
    cfg.d_model = 16;
    cfg.lm_max_epochs = 6;
    cfg.lm_patience = 6;
    cfg.train.warmup_epochs = 2;
    cfg.train.max_epochs = 3;
    cfg.train.patience = 3;
    cfg.train.lr = 1e-3;
    cfg.infer.beam_width = 3;
    cfg.infer.max_new_tokens = 3;
    cfg.infer.ppl_stop = 0.0;
    cfg.n_folds = 3;
    cfg.seed = 5;
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("run-all produces every table and is byte-deterministic") {
    const std::string dir_a = tmp_dir("runall_a");
    const std::string dir_b = tmp_dir("runall_b");

    ExperimentConfig cfg_a = tiny_config(dir_a);
    const ExperimentResult res = run_all(cfg_a);

    // every condition appears for every test sample, each sample exactly once
    std::set<std::string> conditions;
    std::map<std::string, int> per_condition;
    for (const auto& r : res.rows) {
        conditions.insert(r.condition);
        ++per_condition[r.condition];
        CHECK(r.ndcg10 >= 0.0);
        CHECK(r.ndcg10 <= 1.0);
        CHECK(r.ndcg20 >= 0.0);
        CHECK(r.ndcg20 <= 1.0);
        CHECK(r.recall20 >= 0.0);
        CHECK(r.recall20 <= 1.0);
        CHECK(r.ap >= 0.0);
        CHECK(r.ap <= 1.0);
        if (r.has_generation) CHECK(r.log_ppl >= 0.0);
    }
    CHECK(conditions.size() == 7);
    int first = per_condition.begin()->second;
    for (const auto& [cond, count] : per_condition) CHECK(count == first);

    // the expected artifacts exist
    for (const char* path :
         {"/tables/per_sample.csv", "/tables/summary.csv", "/tables/summary_by_seed.csv",
          "/tables/significance.csv", "/tables/correlations.csv", "/manifest.json"})
        CHECK(io::file_exists(dir_a + path));
    CHECK(io::file_exists(dir_a + "/seed_5/corpus/documents.jsonl"));
    CHECK(io::file_exists(dir_a + "/seed_5/eval/per_sample.csv"));
    CHECK(io::file_exists(dir_a + "/seed_5/analyze/features.csv"));
    CHECK(io::file_exists(dir_a + "/seed_5/rank/fold_0/run_brain.trec"));

    // an identical config in a fresh directory reproduces the tables byte
    // for byte
    ExperimentConfig cfg_b = tiny_config(dir_b);
    run_all(cfg_b);
    CHECK(io::read_file(dir_a + "/tables/per_sample.csv") ==
          io::read_file(dir_b + "/tables/per_sample.csv"));
    CHECK(io::read_file(dir_a + "/tables/summary.csv") ==
          io::read_file(dir_b + "/tables/summary.csv"));
    CHECK(io::read_file(dir_a + "/seed_5/rank/fold_1/run_unsup.trec") ==
          io::read_file(dir_b + "/seed_5/rank/fold_1/run_unsup.trec"));

    // re-running in place is a no-op that leaves identical outputs
    const std::string before = io::read_file(dir_a + "/tables/per_sample.csv");
    run_all(cfg_a);
    CHECK(io::read_file(dir_a + "/tables/per_sample.csv") == before);

    // outputs are independent of the worker-thread count
    const std::string dir_c = tmp_dir("runall_c");
    setenv("BRAINAUG_THREADS", "3", 1);
    ExperimentConfig cfg_c = tiny_config(dir_c);
    run_all(cfg_c);
    unsetenv("BRAINAUG_THREADS");
    CHECK(io::read_file(dir_a + "/tables/per_sample.csv") ==
          io::read_file(dir_c + "/tables/per_sample.csv"));

    // reloading the result from disk matches the in-memory rows
    const ExperimentResult loaded = load_result(cfg_a);
    REQUIRE(loaded.rows.size() == res.rows.size());
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        CHECK(loaded.rows[i].sample_id == res.rows[i].sample_id);
        CHECK(loaded.rows[i].ndcg20 == doctest::Approx(res.rows[i].ndcg20).epsilon(1e-9));
    }
}

TEST_CASE("a changed config makes existing artifacts stale") {
    const std::string dir = tmp_dir("stale");
    ExperimentConfig cfg = tiny_config(dir);
    stage_build_corpus(cfg, cfg.seed);

    ExperimentConfig changed = cfg;
    changed.infer.alpha = 0.25;
    CHECK_THROWS_WITH_AS(stage_build_corpus(changed, cfg.seed),
                         doctest::Contains("stale artifact"), std::runtime_error);
}

TEST_CASE("stages report missing inputs by path") {
    const std::string dir = tmp_dir("missing");
    ExperimentConfig cfg = tiny_config(dir);
    CHECK_THROWS_WITH_AS(stage_train_lm(cfg, cfg.seed, 0), doctest::Contains("missing input"),
                         std::runtime_error);
}

TEST_CASE("no-idf generation equals a zero-alpha brain run end to end") {
    const std::string dir = tmp_dir("noidf");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.infer.alpha = 0.0;  // with alpha 0, brain and no_idf runs must agree
    run_all(cfg);
    for (int fold = 0; fold < cfg.n_folds; ++fold) {
        const std::string brain =
            io::read_file(dir + "/seed_5/rank/fold_" + std::to_string(fold) + "/run_brain.trec");
        std::string noidf =
            io::read_file(dir + "/seed_5/rank/fold_" + std::to_string(fold) + "/run_no_idf.trec");
        // the tag column names the condition; normalize it before comparing
        std::string normalized;
        for (std::string::size_type pos = 0; pos < noidf.size();) {
            const auto eol = noidf.find('\n', pos);
            std::string line = noidf.substr(pos, eol - pos);
            const auto tag = line.rfind(" no_idf");
            if (tag != std::string::npos) line = line.substr(0, tag) + " brain";
            normalized += line + "\n";
            pos = eol + 1;
        }
        CHECK(normalized == brain);
    }
}

TEST_CASE("text corpora and session files drive the file ingestion path") {
    const std::string dir = tmp_dir("filemode");

    // frame file: one frame per line
    std::string frames_text;
    for (int i = 0; i < 24; ++i) {
        frames_text += "alpha beta gamma delta epsilon zeta eta theta iota\n";
    }
    io::write_file(dir + "/frames.txt", frames_text);

    // session features: enough rows to cover every window cut
    Matrix session(40, 6);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 6; ++j) session(i, j) = 0.01 * i + 0.1 * j;
    io::write_file(dir + "/session.baf1", "");  // placeholder replaced below
    io::write_matrix(dir + "/session.baf1", session);
    io::write_file(dir + "/session.baf1.json",
                   "{\"session_id\": \"synthetic-session\", \"tr_seconds\": 2.0}\n");

    ExperimentConfig cfg = tiny_config(dir + "/out");
    cfg.corpus_source = "text";
    cfg.corpus_path = dir + "/frames.txt";
    cfg.signals_mode = "file";
    cfg.signals_path = dir + "/session.baf1";
    cfg.raw_feat_dim = 6;
    cfg.t_frames = 2;
    cfg.delay_frames = 1;
    cfg.n_folds = 2;

    const Dataset data = build_dataset(cfg, 3);
    CHECK(data.docs.size() == 8);  // 24 frames / 3 per document
    const auto windows = build_windows(cfg, data, 3);
    REQUIRE(!windows.empty());
    for (const auto& w : windows) {
        CHECK(w.t_frames() == 2);
        CHECK(w.feat_dim() == 6);
    }
}

TEST_CASE("learning-rate selection keeps the best validation run") {
    const std::string dir = tmp_dir("lrsel");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.lr_select = true;
    cfg.train.max_epochs = 2;
    cfg.train.warmup_epochs = 1;
    stage_build_corpus(cfg, cfg.seed);
    stage_synth_signals(cfg, cfg.seed);
    stage_train_lm(cfg, cfg.seed, 0);
    stage_train_decoder(cfg, cfg.seed, 0);
    CHECK(io::file_exists(dir + "/seed_5/decoder/fold_0/decoder.ckpt"));
    CHECK(io::file_exists(dir + "/seed_5/decoder/fold_0/decoder_last.ckpt"));
    CHECK(io::file_exists(dir + "/seed_5/decoder/fold_0/tuning_report.json"));
}

TEST_CASE("pca and feature masks reshape the windows") {
    const std::string dir = tmp_dir("pca");
    ExperimentConfig cfg = tiny_config(dir);
    cfg.raw_feat_dim = 10;
    cfg.feature_mask = "0-5,8";  // 7 raw columns survive
    cfg.pca_k = 4;

    const Dataset data = build_dataset(cfg, 9);
    signals::PcaModel pca;
    const auto windows = build_windows(cfg, data, 9, &pca);
    REQUIRE(!windows.empty());
    for (const auto& w : windows) CHECK(w.feat_dim() == 4);
    CHECK(pca.mean.size() == 7);
    CHECK(pca.components.rows() == 4);
}
