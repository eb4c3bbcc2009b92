#include "brainaug/trainer.hpp"

#include "brainaug/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace brainaug::trainer {

AdamState AdamState::for_tensors(const std::vector<lm::TensorRef>& tensors, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& t : tensors) {
        s.m.push_back(Vector::Zero(t.size));
        s.v.push_back(Vector::Zero(t.size));
    }
    return s;
}

void adam_step(AdamState& state, const std::vector<lm::TensorRef>& params,
               const std::vector<lm::TensorRef>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: tensor count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size != grads[t].size)
            throw std::invalid_argument("adam_step: shape mismatch for " + params[t].name);
        for (Eigen::Index i = 0; i < grads[t].size; ++i)
            if (!std::isfinite(grads[t].data[i])) throw std::runtime_error("divergence");
    }
    ++state.step;
    const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (Eigen::Index i = 0; i < params[t].size; ++i) {
            const double g = grads[t].data[i];
            state.m[t](i) = state.beta1 * state.m[t](i) + (1.0 - state.beta1) * g;
            state.v[t](i) = state.beta2 * state.v[t](i) + (1.0 - state.beta2) * g * g;
            params[t].data[i] -=
                state.lr * (state.m[t](i) / corr1) / (std::sqrt(state.v[t](i) / corr2) + state.eps);
        }
    }
}

std::string TrainReport::to_json() const {
    std::ostringstream out;
    out << "{\"best_epoch\":" << best_epoch << ",\"best_val\":" << best_val << ",\"epochs\":[";
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        if (i) out << ',';
        out << "{\"epoch\":" << epochs[i].epoch << ",\"train\":" << epochs[i].train_loss
            << ",\"val\":" << epochs[i].val_loss << '}';
    }
    out << "],\"checkpoint\":\"" << checkpoint_path << "\"}";
    return out.str();
}

std::string TrainReport::to_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    return out.str();
}

std::vector<TrainingItem> make_training_items(const std::vector<corpus::QuerySample>& samples,
                                              const std::vector<signals::BrainWindow>& windows,
                                              const lm::Vocabulary& vocab) {
    std::map<std::string, const signals::BrainWindow*> by_ref;
    for (const auto& w : windows) by_ref[w.sample_ref] = &w;
    std::vector<TrainingItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples) {
        auto it = by_ref.find(s.brain_ref);
        if (it == by_ref.end())
            throw std::runtime_error("no brain window for sample: " + s.sample_id);
        TrainingItem item;
        item.sample_id = s.sample_id;
        item.query_ids = vocab.to_ids(s.query);
        item.continuation_ids = vocab.to_ids(s.continuation);
        item.window = *it->second;
        items.push_back(std::move(item));
    }
    return items;
}

namespace {

/// Per-sample NLL backward through the frozen LM into the decoder.
double tuning_backward(const decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                       const TrainingItem& item, double loss_scale, decoder::DecoderParams* grads) {
    const auto prompt = decoder::assemble_prompt(dec, lm_params, &item.window, item.query_ids);
    const int s = prompt.layout.length();
    const int k = static_cast<int>(item.continuation_ids.size());

    Matrix inputs(s + k, lm_params.cfg.d_model);
    inputs.topRows(s) = prompt.vectors;
    inputs.bottomRows(k) = lm_params.embed(item.continuation_ids);

    if (!grads) return lm::nll(lm_params, inputs, item.continuation_ids, s);

    Matrix input_grad;
    const double loss = lm::nll_backward(lm_params, inputs, item.continuation_ids, s, loss_scale,
                                         &input_grad, nullptr);
    decoder::route_prompt_gradient(dec, item.window, prompt.layout, input_grad, *grads);
    return loss;
}

}  // namespace

double mean_nll(const decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                const std::vector<TrainingItem>& items) {
    double total = 0.0;
    long tokens = 0;
    for (const auto& item : items) {
        if (item.continuation_ids.empty()) continue;
        total += tuning_backward(dec, lm_params, item, 1.0, nullptr);
        tokens += static_cast<long>(item.continuation_ids.size());
    }
    return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

TrainReport run_warmup(decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                       const std::vector<TrainingItem>& train, const TrainConfig& cfg) {
    TrainReport report;
    auto params = dec.mlp_tensors();
    AdamState adam = AdamState::for_tensors(params, cfg.lr);

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.warmup_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            decoder::DecoderParams grads = decoder::DecoderParams::zeros_like(dec);
            for (std::size_t i = start; i < end; ++i) {
                const auto& item = train[order[i]];
                decoder::DecoderParams sample_grads = decoder::DecoderParams::zeros_like(dec);
                epoch_loss += decoder::warmup_loss(dec, lm_params, item.window, item.query_ids,
                                                   &sample_grads);
                const double inv = 1.0 / static_cast<double>(end - start);
                auto gs = grads.mlp_tensors();
                auto ss = sample_grads.mlp_tensors();
                for (std::size_t t = 0; t < gs.size(); ++t)
                    for (Eigen::Index j = 0; j < gs[t].size; ++j)
                        gs[t].data[j] += inv * ss[t].data[j];
            }
            adam_step(adam, params, grads.mlp_tensors());
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train.empty() ? 0.0 : epoch_loss / static_cast<double>(train.size());
        report.epochs.push_back(stats);
    }
    report.best_epoch = cfg.warmup_epochs;
    report.best_val = report.epochs.empty() ? 0.0 : report.epochs.back().train_loss;
    return report;
}

TrainReport run_prompt_tuning(decoder::DecoderParams& dec, const lm::LmParams& lm_params,
                              const std::vector<TrainingItem>& train,
                              const std::vector<TrainingItem>& validation,
                              const TrainConfig& cfg, decoder::DecoderParams* last_state) {
    TrainReport report;
    const std::uint64_t lm_checksum = lm_params.checksum();

    auto params = dec.tensors();
    AdamState adam = AdamState::for_tensors(params, cfg.lr);

    decoder::DecoderParams best = dec;
    double best_val = mean_nll(dec, lm_params, validation);
    int best_epoch = 0;
    report.epochs.push_back({0, 0.0, best_val});

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        long epoch_tokens = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            decoder::DecoderParams grads = decoder::DecoderParams::zeros_like(dec);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& item = train[order[i]];
                if (item.continuation_ids.empty()) continue;
                const double scale =
                    inv_batch / static_cast<double>(item.continuation_ids.size());
                epoch_loss += tuning_backward(dec, lm_params, item, scale, &grads);
                epoch_tokens += static_cast<long>(item.continuation_ids.size());
            }
            adam_step(adam, params, grads.tensors());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss =
            epoch_tokens == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_tokens);
        stats.val_loss = mean_nll(dec, lm_params, validation);
        report.epochs.push_back(stats);

        if (stats.val_loss < best_val) {
            best_val = stats.val_loss;
            best = dec;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    if (last_state) *last_state = dec;
    dec = best;
    report.best_epoch = best_epoch;
    report.best_val = best_val;

    if (lm_params.checksum() != lm_checksum)
        throw std::logic_error("frozen language model changed during prompt tuning");
    return report;
}

}  // namespace brainaug::trainer
