// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "steerlab/checkpoint.hpp"
#include "steerlab/model.hpp"
#include "steerlab/train.hpp"

using namespace steerlab;
namespace num = steerlab::numerics;
namespace lm = steerlab::tinylm;

namespace {

lm::ModelConfig mini_config(std::uint64_t seed = 7) {
    lm::ModelConfig cfg;
    cfg.vocab_size = 24;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.ctx_len = 16;
    cfg.seed = seed;
    return cfg;
}

lm::TokenSeq random_tokens(Rng& rng, std::size_t n, int vocab) {
    lm::TokenSeq out(n);
    for (auto& t : out) {
        t = static_cast<lm::TokenId>(rng.below(static_cast<std::uint64_t>(vocab)));
    }
    return out;
}

}  // namespace

TEST_CASE("trace has n_layers+1 residual hooks", "[tinylm]") {
    lm::TransformerModel model(mini_config());
    auto trace = lm::forward_with_trace(model, {1, 2, 3});
    REQUIRE(trace.residuals.size() == 3);
    REQUIRE(trace.logits.rows == 3);
    REQUIRE(trace.logits.cols == 24);
}

TEST_CASE("forward rejects empty, overlong and out-of-range inputs", "[tinylm]") {
    lm::TransformerModel model(mini_config());
    REQUIRE_THROWS_AS(lm::forward_with_trace(model, {}), InvariantError);
    REQUIRE_THROWS_AS(lm::forward_with_trace(model, lm::TokenSeq(17, 1)),
                      InvariantError);
    lm::InjectionSpec inj;
    inj.layer = 3;  // hooks go 0..2 for a 2-layer model
    inj.vector.assign(8, 0.5);
    REQUIRE_THROWS_AS(lm::forward_with_trace(model, {1, 2}, inj), IndexError);
    inj.layer = 1;
    inj.vector.assign(5, 0.5);
    REQUIRE_THROWS_AS(lm::forward_with_trace(model, {1, 2}, inj), ShapeError);
}

TEST_CASE("injection with c=0 or zero vector is a bitwise no-op", "[tinylm]") {
    lm::TransformerModel model(mini_config(8));
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        auto tokens = random_tokens(rng, 1 + rng.below(12), 24);
        auto base = lm::forward_with_trace(model, tokens);

        lm::InjectionSpec zero_c;
        zero_c.layer = static_cast<int>(rng.below(3));
        zero_c.vector.assign(8, 1.25);
        zero_c.coefficient = 0.0;
        auto with_zero_c = lm::forward_with_trace(model, tokens, zero_c);
        REQUIRE(with_zero_c.logits.a == base.logits.a);

        lm::InjectionSpec zero_v;
        zero_v.layer = static_cast<int>(rng.below(3));
        zero_v.vector.assign(8, 0.0);
        zero_v.coefficient = 2.5;
        auto with_zero_v = lm::forward_with_trace(model, tokens, zero_v);
        REQUIRE(with_zero_v.logits.a == base.logits.a);
    }
}

TEST_CASE("injection at layer L leaves earlier hooks bit-identical", "[tinylm]") {
    lm::TransformerModel model(mini_config(9));
    lm::TokenSeq tokens = {3, 1, 4, 1, 5};
    auto base = lm::forward_with_trace(model, tokens);
    lm::InjectionSpec inj;
    inj.layer = 1;
    inj.vector.assign(8, 0.0);
    inj.vector[2] = 0.7;
    inj.coefficient = 1.5;
    auto steered = lm::forward_with_trace(model, tokens, inj);
    REQUIRE(steered.residuals[0].a == base.residuals[0].a);
    REQUIRE(steered.residuals[1].a != base.residuals[1].a);
}

TEST_CASE("injection adds exactly c*v to every row at the hook", "[tinylm]") {
    lm::ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.d_model = 4;
    cfg.n_layers = 1;
    cfg.n_heads = 1;
    cfg.ctx_len = 8;
    cfg.seed = 99;
    lm::TransformerModel model(cfg);
    lm::TokenSeq tokens = {2, 7, 5};
    auto base = lm::forward_with_trace(model, tokens);
    lm::InjectionSpec inj;
    inj.layer = 1;
    inj.vector = {1.0, 0.0, 0.0, 0.0};
    inj.coefficient = 2.0;
    auto steered = lm::forward_with_trace(model, tokens, inj);
    for (std::size_t r = 0; r < 3; ++r) {
        REQUIRE(steered.residuals[1].at(r, 0) ==
                Catch::Approx(base.residuals[1].at(r, 0) + 2.0).margin(1e-12));
        for (std::size_t c = 1; c < 4; ++c) {
            REQUIRE(steered.residuals[1].at(r, c) == base.residuals[1].at(r, c));
        }
    }
}

TEST_CASE("direction flips the sign of the injected vector", "[tinylm]") {
    lm::TransformerModel model(mini_config(10));
    lm::TokenSeq tokens = {1, 2, 3, 4};
    lm::InjectionSpec plus;
    plus.layer = 0;
    plus.vector.assign(8, 0.3);
    plus.coefficient = 1.0;
    plus.direction = +1;
    lm::InjectionSpec minus = plus;
    minus.direction = -1;
    auto p = lm::forward_with_trace(model, tokens, plus);
    auto m = lm::forward_with_trace(model, tokens, minus);
    auto base = lm::forward_with_trace(model, tokens);
    for (std::size_t i = 0; i < p.residuals[0].a.size(); ++i) {
        const double up = p.residuals[0].a[i] - base.residuals[0].a[i];
        const double dn = m.residuals[0].a[i] - base.residuals[0].a[i];
        REQUIRE(up == Catch::Approx(0.3).margin(1e-12));
        REQUIRE(dn == Catch::Approx(-0.3).margin(1e-12));
    }
}

TEST_CASE("logits equal unembedding of final-norm of the last hook", "[tinylm]") {
    lm::TransformerModel model(mini_config(11));
    Rng rng(32);
    auto tokens = random_tokens(rng, 6, 24);
    auto trace = lm::forward_with_trace(model, tokens);
    const auto& last = trace.residuals.back();
    const auto& gain = model.final_norm_gain()->value;
    const auto& u = model.unembedding()->value;
    for (std::size_t r = 0; r < last.rows; ++r) {
        std::vector<double> row(last.row(r), last.row(r) + last.cols);
        auto normed = num::rms_norm(row, gain, lm::kRmsEps);
        for (std::size_t c = 0; c < trace.logits.cols; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < last.cols; ++k) {
                acc += normed[k] * u[k * trace.logits.cols + c];
            }
            REQUIRE(trace.logits.at(r, c) == Catch::Approx(acc).margin(1e-9));
        }
    }
}

TEST_CASE("sequence_logprob conventions and stepwise oracle", "[tinylm]") {
    lm::TransformerModel model(mini_config(12));
    lm::TokenSeq prompt = {5, 9, 2};
    REQUIRE(lm::sequence_logprob(model, prompt, {}) == 0.0);

    lm::TokenSeq response = {7, 1, 3};
    const double lp = lm::sequence_logprob(model, prompt, response);
    REQUIRE(lp <= 0.0);

    // Stepwise oracle: score each token from an independent forward pass.
    double expect = 0.0;
    lm::TokenSeq ctx = prompt;
    for (lm::TokenId tok : response) {
        auto trace = lm::forward_with_trace(model, ctx);
        const double* row = trace.logits.row(trace.logits.rows - 1);
        auto probs = num::softmax(std::vector<double>(row, row + trace.logits.cols));
        expect += std::log(probs[static_cast<std::size_t>(tok)]);
        ctx.push_back(tok);
    }
    REQUIRE(lp == Catch::Approx(expect).margin(1e-10));
}

TEST_CASE("sequence_logprob is additive over split responses", "[tinylm]") {
    lm::TransformerModel model(mini_config(13));
    lm::TokenSeq prompt = {4, 4};
    lm::TokenSeq r1 = {6, 2};
    lm::TokenSeq r2 = {9};
    lm::TokenSeq joint = r1;
    joint.insert(joint.end(), r2.begin(), r2.end());
    lm::TokenSeq prompt_r1 = prompt;
    prompt_r1.insert(prompt_r1.end(), r1.begin(), r1.end());
    const double whole = lm::sequence_logprob(model, prompt, joint);
    const double split = lm::sequence_logprob(model, prompt, r1) +
                         lm::sequence_logprob(model, prompt_r1, r2);
    REQUIRE(whole == Catch::Approx(split).margin(1e-10));
}

TEST_CASE("generate is deterministic and matches manual argmax steps", "[tinylm]") {
    lm::TransformerModel model(mini_config(14));
    lm::TokenSeq prompt = {2, 3};
    REQUIRE(lm::generate(model, prompt, 0).empty());
    auto a = lm::generate(model, prompt, 5);
    auto b = lm::generate(model, prompt, 5);
    REQUIRE(a == b);
    REQUIRE(a.size() == 5);

    lm::TokenSeq ctx = prompt;
    for (lm::TokenId expected : a) {
        auto trace = lm::forward_with_trace(model, ctx);
        const double* row = trace.logits.row(trace.logits.rows - 1);
        std::size_t best = 0;
        for (std::size_t c = 1; c < trace.logits.cols; ++c) {
            if (row[c] > row[best]) {
                best = c;
            }
        }
        REQUIRE(static_cast<lm::TokenId>(best) == expected);
        ctx.push_back(expected);
    }
}

TEST_CASE("generate stops at the stop token and includes it", "[tinylm]") {
    lm::TransformerModel model(mini_config(15));
    auto all = lm::generate(model, {1}, 8);
    // Use the first emitted token as a stop token; generation must cut there.
    auto stopped = lm::generate(model, {1}, 8, {}, all[0]);
    REQUIRE(stopped.size() == 1);
    REQUIRE(stopped[0] == all[0]);
}

TEST_CASE("train_lm with epochs=0 leaves weights bit-identical", "[tinylm]") {
    lm::TransformerModel model(mini_config(16));
    auto before = lm::serialize_checkpoint(model);
    std::vector<lm::TrainSequence> corpus = {{{1, 2, 3, 4}, 1}};
    num::OptimizerConfig opt;
    auto log = lm::train_lm(model, corpus, opt, 0);
    REQUIRE(log.epoch_mean_loss.empty());
    REQUIRE(lm::serialize_checkpoint(model) == before);
}

TEST_CASE("train_lm memorizes a single repeated sequence", "[tinylm]") {
    lm::TransformerModel model(mini_config(17));
    std::vector<lm::TrainSequence> corpus = {{{3, 7, 1, 9, 2, 8}, 1}};
    num::OptimizerConfig opt;
    opt.learning_rate = 3e-3;
    auto log = lm::train_lm(model, corpus, opt, 200, 5);
    REQUIRE(log.epoch_mean_loss.back() < 0.1);
}

TEST_CASE("train_lm is deterministic for a fixed seed", "[tinylm]") {
    std::vector<lm::TrainSequence> corpus;
    Rng rng(33);
    for (int i = 0; i < 12; ++i) {
        corpus.push_back({random_tokens(rng, 8, 24), 1});
    }
    num::OptimizerConfig opt;
    opt.learning_rate = 1e-3;

    lm::TransformerModel m1(mini_config(18));
    lm::TransformerModel m2(mini_config(18));
    auto l1 = lm::train_lm(m1, corpus, opt, 3, 77);
    auto l2 = lm::train_lm(m2, corpus, opt, 3, 77);
    REQUIRE(l1.epoch_mean_loss == l2.epoch_mean_loss);
    REQUIRE(lm::serialize_checkpoint(m1) == lm::serialize_checkpoint(m2));
}

TEST_CASE("train_lm rejects an empty corpus", "[tinylm]") {
    lm::TransformerModel model(mini_config(19));
    num::OptimizerConfig opt;
    REQUIRE_THROWS_AS(lm::train_lm(model, {}, opt, 1), InvariantError);
}

TEST_CASE("checkpoint round trip is bit-exact at fp32", "[tinylm]") {
    lm::TransformerModel model(mini_config(20));
    // Nudge weights off their init so the test is not trivially symmetric.
    std::vector<lm::TrainSequence> corpus = {{{1, 5, 1, 5, 1}, 1}};
    num::OptimizerConfig opt;
    opt.learning_rate = 1e-3;
    lm::train_lm(model, corpus, opt, 2);

    const std::string path = std::filesystem::temp_directory_path() /
                             "steerlab_ckpt_test.bin";
    lm::save_checkpoint(model, path);
    auto loaded = lm::load_checkpoint(path);
    REQUIRE(loaded.config().d_model == model.config().d_model);
    REQUIRE(loaded.config().seed == model.config().seed);
    REQUIRE(lm::serialize_checkpoint(loaded) == lm::serialize_checkpoint(model));
    // Loading twice through a save cycle is a fixed point.
    lm::save_checkpoint(loaded, path);
    auto again = lm::load_checkpoint(path);
    REQUIRE(lm::serialize_checkpoint(again) == lm::serialize_checkpoint(loaded));
    std::filesystem::remove(path);
}

TEST_CASE("model digest changes with weights and matches checkpoint digest",
          "[tinylm]") {
    lm::TransformerModel a(mini_config(21));
    lm::TransformerModel b(mini_config(22));
    REQUIRE(a.digest() != b.digest());
    REQUIRE(a.digest() == digest_of_bytes(lm::serialize_checkpoint(a)));
}

TEST_CASE("full model LM loss gradient w.r.t. a steering vector", "[tinylm]") {
    lm::TransformerModel model(mini_config(23));
    auto v = num::zeros({8}, true);
    Rng rng(34);
    for (double& x : v->value) {
        x = rng.normal() * 0.1;
    }
    lm::TokenSeq prompt = {3, 9, 4};
    lm::TokenSeq response = {1, 6};
    auto f = [&]() {
        return num::scale(
            lm::sequence_logprob_graph(model, prompt, response, 1, v, 1.0), -1.0);
    };
    REQUIRE(num::grad_check(f, {v}, 1e-5) < 1e-4);
}
