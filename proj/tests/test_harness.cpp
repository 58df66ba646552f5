// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "steerlab/harness.hpp"

using namespace steerlab;
namespace lm = steerlab::tinylm;
namespace lf = steerlab::langforge;
namespace st = steerlab::steering;
namespace hn = steerlab::harness;

namespace {

lf::LanguageFamily harness_family(std::uint64_t seed = 2) {
    std::vector<lf::LanguageSpec> specs = {
        {"en", {64, 80}, 0, 0, 0.6},
        {"xx", {144, 80}, 5, 0, 0.25},
        {"yy", {224, 80}, 6, 1, 0.15},
    };
    return lf::make_language_family(seed, std::move(specs), {0, 64});
}

lm::ModelConfig harness_model_config(std::uint64_t seed, int layers = 2) {
    lm::ModelConfig cfg;
    cfg.vocab_size = 304;
    cfg.d_model = 8;
    cfg.n_layers = layers;
    cfg.n_heads = 2;
    cfg.ctx_len = 32;
    cfg.seed = seed;
    return cfg;
}

st::SteeringVector zero_vector(const lm::TransformerModel& model, int layer,
                               const std::string& lang) {
    st::SteeringVector sv;
    sv.vector.assign(static_cast<std::size_t>(model.config().d_model), 0.0);
    sv.layer = layer;
    sv.source_lang = lang;
    sv.method = st::Method::meandiff;
    sv.model_digest = model.digest();
    return sv;
}

}  // namespace

TEST_CASE("oracle translation of English prompts equals basic English", "[harness]") {
    auto fam = harness_family(3);
    lm::TransformerModel model(harness_model_config(81));
    auto corpus = lf::build_task_corpus(fam, "en", 8, 5);
    auto basic = hn::run_eval(model, fam, "en", corpus, hn::EvalCondition::basic());
    auto oracle =
        hn::run_eval(model, fam, "en", corpus, hn::EvalCondition::oracle_translate());
    REQUIRE(oracle.accuracy == basic.accuracy);
    for (std::size_t i = 0; i < basic.transcript.size(); ++i) {
        REQUIRE(oracle.transcript[i].prompt == basic.transcript[i].prompt);
        REQUIRE(oracle.transcript[i].generation == basic.transcript[i].generation);
    }
}

TEST_CASE("steered evaluation with a zero vector equals basic exactly", "[harness]") {
    auto fam = harness_family(4);
    lm::TransformerModel model(harness_model_config(82));
    auto corpus = lf::build_task_corpus(fam, "xx", 8, 7);
    auto basic = hn::run_eval(model, fam, "xx", corpus, hn::EvalCondition::basic());
    auto steered = hn::run_eval(model, fam, "xx", corpus,
                                hn::EvalCondition::steered(zero_vector(model, 1, "xx")));
    REQUIRE(steered.accuracy == basic.accuracy);
    for (std::size_t i = 0; i < basic.transcript.size(); ++i) {
        REQUIRE(steered.transcript[i].generation == basic.transcript[i].generation);
    }
}

TEST_CASE("accuracy matches a manual scoring oracle", "[harness]") {
    auto fam = harness_family(5);
    lm::TransformerModel model(harness_model_config(83));
    auto corpus = lf::build_task_corpus(fam, "xx", 10, 9);
    auto report = hn::run_eval(model, fam, "xx", corpus, hn::EvalCondition::basic());

    std::size_t manual = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto gen = lm::generate(model, corpus[i].src, hn::kAnswerBudget, {},
                                fam.eos_token());
        lf::TokenSeq digits;
        for (auto t : gen) {
            if (t == fam.eos_token()) {
                break;
            }
            const int off = t - fam.neutral_block().start;
            if (off >= 0 && off < lf::kDigitCount) {
                digits.push_back(t);
            }
        }
        manual += digits == corpus[i].answer ? 1 : 0;
    }
    REQUIRE(report.accuracy ==
            static_cast<double>(manual) / static_cast<double>(corpus.size()));
    REQUIRE(report.n == corpus.size());
}

TEST_CASE("rescoring a saved transcript reproduces the report accuracy", "[harness]") {
    auto fam = harness_family(6);
    lm::TransformerModel model(harness_model_config(84));
    auto corpus = lf::build_task_corpus(fam, "yy", 12, 11);
    auto report = hn::run_eval(model, fam, "yy", corpus, hn::EvalCondition::basic());

    // Round trip through JSON, then rescore.
    std::vector<hn::TranscriptItem> loaded;
    for (const auto& item : report.transcript) {
        loaded.push_back(hn::TranscriptItem::from_json(item.to_json()));
    }
    REQUIRE(hn::score_transcript(fam, loaded) == report.accuracy);
}

TEST_CASE("self-translation stage is recorded in the transcript", "[harness]") {
    auto fam = harness_family(7);
    lm::TransformerModel model(harness_model_config(85));
    auto corpus = lf::build_task_corpus(fam, "xx", 5, 13);
    auto report =
        hn::run_eval(model, fam, "xx", corpus, hn::EvalCondition::self_translate());
    REQUIRE(report.n == 5);
    for (const auto& item : report.transcript) {
        // The answering prompt is exactly the recorded rendering.
        REQUIRE(item.prompt == item.translation);
    }
}

TEST_CASE("run_eval validates inputs", "[harness]") {
    auto fam = harness_family(8);
    lm::TransformerModel model(harness_model_config(86));
    auto corpus = lf::build_task_corpus(fam, "xx", 3, 15);
    REQUIRE_THROWS_AS(
        hn::run_eval(model, fam, "xx", {}, hn::EvalCondition::basic()),
        InvariantError);

    hn::EvalCondition bad_dim = hn::EvalCondition::steered(zero_vector(model, 1, "xx"));
    bad_dim.vector->vector.resize(5);
    REQUIRE_THROWS_AS(hn::run_eval(model, fam, "xx", corpus, bad_dim), ShapeError);

    auto missing = corpus;
    for (auto& rec : missing) {
        rec.answer.clear();
    }
    REQUIRE_THROWS_AS(
        hn::run_eval(model, fam, "xx", missing, hn::EvalCondition::basic()),
        InvariantError);
}

TEST_CASE("layer sweep covers every hook and is deterministic", "[harness]") {
    auto fam = harness_family(9);
    lm::TransformerModel model(harness_model_config(87));
    auto train = lf::build_task_corpus(fam, "xx", 6, 17);
    auto eval = lf::build_task_corpus(fam, "xx", 6, 19);
    st::BipoConfig bipo;
    st::MseConfig mse;
    auto sweep = hn::layer_sweep(model, fam, "xx", st::Method::meandiff, train, eval,
                                 bipo, mse);
    REQUIRE(sweep.entries.size() ==
            static_cast<std::size_t>(model.config().n_layers) + 1);
    REQUIRE(sweep.coefficient == 1.0);
    double best = -1.0;
    int best_layer = 0;
    for (const auto& e : sweep.entries) {
        if (e.accuracy > best) {
            best = e.accuracy;
            best_layer = e.layer;
        }
    }
    REQUIRE(sweep.best_layer == best_layer);

    auto sweep2 = hn::layer_sweep(model, fam, "xx", st::Method::meandiff, train, eval,
                                  bipo, mse);
    REQUIRE(sweep2.best_layer == sweep.best_layer);
    REQUIRE(sweep2.to_json().dump() == sweep.to_json().dump());
}

TEST_CASE("transfer matrix has the right shape and native diagonal", "[harness]") {
    auto fam = harness_family(10);
    lm::TransformerModel model(harness_model_config(88));
    auto train_xx = lf::build_task_corpus(fam, "xx", 6, 21);
    auto train_yy = lf::build_task_corpus(fam, "yy", 6, 23);
    auto eval_xx = lf::build_task_corpus(fam, "xx", 6, 25);
    auto eval_yy = lf::build_task_corpus(fam, "yy", 6, 27);

    auto v_xx = st::learn_meandiff(model, train_xx, 1);
    auto v_yy = st::learn_meandiff(model, train_yy, 1);
    auto report = hn::transfer_eval(model, fam, {v_xx, v_yy},
                                    {{"xx", eval_xx}, {"yy", eval_yy}}, 1.0);
    REQUIRE(report.sources == std::vector<std::string>{"xx", "yy"});
    REQUIRE(report.targets == std::vector<std::string>{"xx", "yy"});
    REQUIRE(report.accuracy.rows == 2);
    REQUIRE(report.accuracy.cols == 2);

    auto native = hn::run_eval(model, fam, "xx", eval_xx,
                               hn::EvalCondition::steered(v_xx, 1.0));
    REQUIRE(report.at("xx", "xx") == native.accuracy);

    // Vectors must share the layer.
    auto v_wrong = st::learn_meandiff(model, train_yy, 2);
    REQUIRE_THROWS_AS(
        hn::transfer_eval(model, fam, {v_xx, v_wrong}, {{"xx", eval_xx}}, 1.0),
        InvariantError);
}

TEST_CASE("english impact table has baseline-first rows; zero vector row equals it",
          "[harness]") {
    auto fam = harness_family(11);
    lm::TransformerModel model(harness_model_config(89));
    auto en_eval = lf::build_task_corpus(fam, "en", 8, 29);
    auto train_xx = lf::build_task_corpus(fam, "xx", 6, 31);

    auto v_xx = st::learn_meandiff(model, train_xx, 1);
    auto v_zero = zero_vector(model, 1, "zz");
    auto report = hn::english_impact_eval(model, fam, {v_xx, v_zero}, en_eval, 1.0);
    REQUIRE(report.rows.size() == 3);
    REQUIRE(report.rows[0].label == "baseline");
    REQUIRE(report.rows[1].label == "xx");
    REQUIRE(report.rows[2].label == "zz");
    REQUIRE(report.rows[2].accuracy == report.rows[0].accuracy);
}

TEST_CASE("sft comparison with zero epochs equals the base model", "[harness]") {
    auto fam = harness_family(12);
    lm::TransformerModel model(harness_model_config(90));
    auto train = lf::build_task_corpus(fam, "xx", 5, 33);
    auto eval = lf::build_task_corpus(fam, "xx", 5, 35);
    auto vec = st::learn_meandiff(model, train, 1);

    hn::SftConfig cfg;
    cfg.epochs = 0;
    auto report = hn::sft_vs_steering(model, fam, "xx", train, eval, vec, cfg);
    REQUIRE(report.sft_epoch_loss.empty());
    REQUIRE(report.sft_model_digest == report.model_digest);
    REQUIRE(report.lens_sft.to_json().dump() == report.lens_base.to_json().dump());
    REQUIRE(report.accuracy_sft == report.accuracy_base);
}

TEST_CASE("sft translation loss decreases over the first epochs", "[harness]") {
    auto fam = harness_family(13);
    lm::TransformerModel model(harness_model_config(91));
    auto train = lf::build_task_corpus(fam, "xx", 24, 37);
    auto eval = lf::build_task_corpus(fam, "xx", 5, 39);
    auto vec = st::learn_meandiff(model, train, 1);

    hn::SftConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 3e-3;
    cfg.seed = 7;
    auto report = hn::sft_vs_steering(model, fam, "xx", train, eval, vec, cfg);
    REQUIRE(report.sft_epoch_loss.size() == 3);
    REQUIRE(report.sft_epoch_loss[1] < report.sft_epoch_loss[0]);
    REQUIRE(report.sft_epoch_loss[2] < report.sft_epoch_loss[1]);
    REQUIRE(report.sft_model_digest != report.model_digest);
}

TEST_CASE("eval reports are reproducible with equal digests", "[harness]") {
    auto fam = harness_family(14);
    lm::TransformerModel model(harness_model_config(92));
    auto corpus = lf::build_task_corpus(fam, "xx", 6, 41);
    auto a = hn::run_eval(model, fam, "xx", corpus, hn::EvalCondition::basic(), 3);
    auto b = hn::run_eval(model, fam, "xx", corpus, hn::EvalCondition::basic(), 3);
    REQUIRE(a.to_json(true).dump() == b.to_json(true).dump());
    REQUIRE(a.model_digest == b.model_digest);
    REQUIRE(a.corpus_digest == b.corpus_digest);
}
