// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "steerlab/model.hpp"

namespace steerlab::tinylm {

/// One training item: a token sequence plus the first position whose token is
/// scored by the loss. score_from = 1 trains plain next-token prediction over
/// the whole sequence; larger values mask a prompt prefix (used for the
/// translation fine-tuning comparison).
struct TrainSequence {
    TokenSeq tokens;
    std::size_t score_from = 1;
};

struct TrainLog {
    std::vector<double> epoch_mean_loss;
    std::size_t steps = 0;
};

/// Language-model training: per-sequence steps in a seeded shuffled order,
/// next-token cross entropy over scored positions. Weights update in place;
/// epochs = 0 leaves them bit-identical. With freeze_token_embeddings the
/// token table keeps its (possibly aligned) geometry while circuits train.
inline TrainLog train_lm(TransformerModel& model,
                         const std::vector<TrainSequence>& corpus,
                         const numerics::OptimizerConfig& opt_cfg, int epochs,
                         std::uint64_t seed = 0,
                         bool freeze_token_embeddings = false) {
    if (corpus.empty()) {
        throw InvariantError("train_lm: empty corpus");
    }
    for (const auto& s : corpus) {
        if (s.tokens.size() < 2) {
            throw InvariantError("train_lm: sequences need at least two tokens");
        }
        if (s.tokens.size() > static_cast<std::size_t>(model.config().ctx_len)) {
            throw InvariantError("train_lm: sequence exceeds ctx_len");
        }
        if (s.score_from < 1 || s.score_from >= s.tokens.size()) {
            throw InvariantError("train_lm: score_from out of range");
        }
    }
    TrainLog log;
    if (epochs <= 0) {
        return log;
    }
    model.set_requires_grad(true);
    std::vector<numerics::Tensor> params;
    for (auto& [name, t] : model.named_parameters()) {
        if (freeze_token_embeddings && name == "tok_emb") {
            t->requires_grad = false;
            t->needs_grad = false;
            continue;
        }
        params.push_back(t);
    }
    numerics::Optimizer opt(opt_cfg, std::move(params),
                            corpus.size() * static_cast<std::size_t>(epochs));

    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(hash_combine(seed, 0x7368756666ULL));

    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = shuffle_rng.below(i);
            std::swap(order[i - 1], order[j]);
        }
        double loss_sum = 0.0;
        for (std::size_t idx : order) {
            const auto& s = corpus[idx];
            auto g = model.forward_graph(s.tokens);
            // Logits row t predicts token t+1; the final row is idle.
            numerics::Tensor pred =
                numerics::slice_rows(g.logits, 0, s.tokens.size() - 1);
            TokenSeq targets(s.tokens.begin() + 1, s.tokens.end());
            numerics::Tensor loss =
                numerics::cross_entropy(pred, targets, s.score_from - 1);
            numerics::backward(loss);
            loss_sum += loss->scalar();
            opt.step();
            ++log.steps;
        }
        log.epoch_mean_loss.push_back(loss_sum / static_cast<double>(corpus.size()));
    }
    model.set_requires_grad(false);
    return log;
}

}  // namespace steerlab::tinylm
