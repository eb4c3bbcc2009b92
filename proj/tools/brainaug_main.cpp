#include "brainaug/experiment.hpp"
#include "brainaug/io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

using brainaug::experiment::ExperimentConfig;

ExperimentConfig load_config(const std::string& path, int seed_override) {
    ExperimentConfig cfg = ExperimentConfig::from_file(path);
    if (seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_override);
        cfg.seeds.clear();
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"brainaug: query augmentation from brain-signal feature matrices"};
    app.require_subcommand(1);

    std::string config_path;
    int seed = -1;
    int fold = 0;
    std::string condition;

    auto add_common = [&](CLI::App* cmd, bool with_fold) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--seed", seed, "override the config seed");
        if (with_fold) cmd->add_option("--fold", fold, "cross-validation fold");
        return cmd;
    };

    auto* init_cmd = app.add_subcommand("init-config", "write a default config template");
    std::string init_path = "experiment.cfg";
    init_cmd->add_option("path", init_path, "output path");

    auto* build = add_common(app.add_subcommand("build-corpus", "documents, samples and folds"), false);
    auto* synth = add_common(app.add_subcommand("synth-signals", "brain windows (and PCA)"), false);
    auto* trainlm = add_common(app.add_subcommand("train-lm", "pretrain the frozen reference model"), true);
    auto* traindec =
        add_common(app.add_subcommand("train-decoder", "warmup + prompt tuning"), true);
    auto* aug = add_common(app.add_subcommand("augment", "generate query continuations"), true);
    aug->add_option("--condition", condition, "restrict to one condition");
    auto* rankcmd = add_common(app.add_subcommand("rank", "retrieval runs for all conditions"), true);
    auto* eval = add_common(app.add_subcommand("evaluate", "per-sample ranking metrics"), false);
    auto* analyze = add_common(app.add_subcommand("analyze", "query features and correlations"), false);
    auto* runall = add_common(app.add_subcommand("run-all", "the full cross-validated experiment"), false);

    // inference overrides for augment
    double alpha = -1.0, ppl_stop = -1.0;
    int beam_width = -1, max_new = -1;
    aug->add_option("--alpha", alpha, "IDF blend weight");
    aug->add_option("--beam-width", beam_width, "beam width");
    aug->add_option("--max-new", max_new, "max expansion tokens");
    aug->add_option("--ppl-stop", ppl_stop, "perplexity stop threshold (0 = off)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (init_cmd->parsed()) {
            brainaug::io::write_file(init_path, brainaug::experiment::default_config_text());
            std::cout << "wrote " << init_path << "\n";
            return 0;
        }

        ExperimentConfig cfg = load_config(config_path, seed);
        const std::uint64_t the_seed = cfg.effective_seeds().front();

        if (build->parsed()) {
            brainaug::experiment::stage_build_corpus(cfg, the_seed);
        } else if (synth->parsed()) {
            brainaug::experiment::stage_synth_signals(cfg, the_seed);
        } else if (trainlm->parsed()) {
            brainaug::experiment::stage_train_lm(cfg, the_seed, fold);
        } else if (traindec->parsed()) {
            brainaug::experiment::stage_train_decoder(cfg, the_seed, fold);
        } else if (aug->parsed()) {
            if (alpha >= 0.0) cfg.infer.alpha = alpha;
            if (beam_width > 0) cfg.infer.beam_width = beam_width;
            if (max_new >= 0) cfg.infer.max_new_tokens = max_new;
            if (ppl_stop >= 0.0) cfg.infer.ppl_stop = ppl_stop;
            brainaug::experiment::stage_augment(cfg, the_seed, fold, condition);
        } else if (rankcmd->parsed()) {
            brainaug::experiment::stage_rank(cfg, the_seed, fold);
        } else if (eval->parsed()) {
            brainaug::experiment::stage_evaluate(cfg, the_seed);
        } else if (analyze->parsed()) {
            brainaug::experiment::stage_analyze(cfg, the_seed);
        } else if (runall->parsed()) {
            brainaug::experiment::run_all(cfg, [](const std::string& msg) {
                std::cout << "[run-all] " << msg << "\n" << std::flush;
            });
            std::cout << "tables written under " << cfg.out_dir << "/tables\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
