// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerlab/lens.hpp"
#include "steerlab/steering.hpp"
#include "steerlab/train.hpp"

namespace steerlab::harness {

using Json = nlohmann::ordered_json;
using langforge::LanguageFamily;
using langforge::ParallelCorpus;
using steering::SteeringVector;
using tinylm::TokenSeq;
using tinylm::TransformerModel;

constexpr std::size_t kAnswerBudget = 8;  // answer word + digits + eos + slack

enum class ConditionKind { basic, steered, oracle_translate, self_translate };

inline std::string to_string(ConditionKind k) {
    switch (k) {
        case ConditionKind::basic: return "basic";
        case ConditionKind::steered: return "steered";
        case ConditionKind::oracle_translate: return "oracle_translate";
        case ConditionKind::self_translate: return "self_translate";
    }
    throw InvariantError("bad condition");
}

inline ConditionKind condition_from_string(const std::string& s) {
    if (s == "basic") return ConditionKind::basic;
    if (s == "steered") return ConditionKind::steered;
    if (s == "oracle_translate" || s == "oracle-translate")
        return ConditionKind::oracle_translate;
    if (s == "self_translate" || s == "self-translate")
        return ConditionKind::self_translate;
    throw UsageError("unknown eval condition: " + s);
}

struct EvalCondition {
    ConditionKind kind = ConditionKind::basic;
    std::optional<SteeringVector> vector;   // required for steered
    std::optional<double> coefficient;      // overrides the vector default

    static EvalCondition basic() { return {}; }

    static EvalCondition steered(SteeringVector v, std::optional<double> c = {}) {
        EvalCondition cond;
        cond.kind = ConditionKind::steered;
        cond.vector = std::move(v);
        cond.coefficient = c;
        return cond;
    }

    static EvalCondition oracle_translate() {
        EvalCondition cond;
        cond.kind = ConditionKind::oracle_translate;
        return cond;
    }

    static EvalCondition self_translate() {
        EvalCondition cond;
        cond.kind = ConditionKind::self_translate;
        return cond;
    }

    Json to_json() const {
        Json j;
        j["kind"] = to_string(kind);
        if (vector.has_value()) {
            j["vector_digest"] = vector->digest();
            j["layer"] = vector->layer;
            j["coefficient"] = coefficient.value_or(vector->default_coefficient);
            j["method"] = steering::to_string(vector->method);
        }
        return j;
    }
};

struct TranscriptItem {
    TokenSeq prompt;
    TokenSeq translation;  // self-translation rendering, when applicable
    TokenSeq generation;
    TokenSeq gold;
    bool correct = false;

    Json to_json() const {
        return Json{{"prompt", prompt},
                    {"translation", translation},
                    {"generation", generation},
                    {"gold", gold},
                    {"correct", correct}};
    }

    static TranscriptItem from_json(const Json& j) {
        TranscriptItem item;
        item.prompt = j.at("prompt").get<TokenSeq>();
        item.translation = j.at("translation").get<TokenSeq>();
        item.generation = j.at("generation").get<TokenSeq>();
        item.gold = j.at("gold").get<TokenSeq>();
        item.correct = j.at("correct").get<bool>();
        return item;
    }
};

struct EvalReport {
    Json condition;
    std::string language;
    std::size_t n = 0;
    double accuracy = 0.0;
    std::uint64_t seed = 0;
    std::string model_digest;
    std::string corpus_digest;
    std::vector<TranscriptItem> transcript;

    Json to_json(bool with_transcript = false) const {
        Json j;
        j["condition"] = condition;
        j["language"] = language;
        j["n"] = n;
        j["accuracy"] = accuracy;
        j["seed"] = seed;
        j["model_digest"] = model_digest;
        j["corpus_digest"] = corpus_digest;
        if (with_transcript) {
            j["transcript"] = Json::array();
            for (const auto& item : transcript) {
                j["transcript"].push_back(item.to_json());
            }
        }
        return j;
    }
};

/// Exact match on the neutral digit tokens: the digit subsequence of the
/// generation, cut at the end-of-answer token, must equal the gold digits.
inline bool score_generation(const LanguageFamily& family, const TokenSeq& generation,
                             const TokenSeq& gold) {
    TokenSeq digits;
    for (langforge::TokenId t : generation) {
        if (t == family.eos_token()) {
            break;
        }
        const int offset = t - family.neutral_block().start;
        if (offset >= 0 && offset < langforge::kDigitCount) {
            digits.push_back(t);
        }
    }
    return digits == gold;
}

/// Recomputes an eval report's accuracy from its saved transcript.
inline double score_transcript(const LanguageFamily& family,
                               const std::vector<TranscriptItem>& transcript) {
    if (transcript.empty()) {
        throw InvariantError("score_transcript: empty transcript");
    }
    std::size_t correct = 0;
    for (const auto& item : transcript) {
        correct += score_generation(family, item.generation, item.gold) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(transcript.size());
}

/// Greedy evaluation of one corpus under a prompting/steering condition.
inline EvalReport run_eval(const TransformerModel& model, const LanguageFamily& family,
                           const std::string& lang, const ParallelCorpus& corpus,
                           const EvalCondition& condition, std::uint64_t seed = 0) {
    if (corpus.empty()) {
        throw InvariantError("run_eval: empty corpus");
    }
    family.lang_index(lang);
    for (const auto& rec : corpus) {
        if (rec.answer.empty()) {
            throw InvariantError("run_eval: corpus answers missing");
        }
    }
    std::optional<tinylm::InjectionSpec> inj;
    if (condition.kind == ConditionKind::steered) {
        if (!condition.vector.has_value()) {
            throw InvariantError("run_eval: steered condition without a vector");
        }
        if (condition.vector->vector.size() !=
            static_cast<std::size_t>(model.config().d_model)) {
            throw ShapeError("run_eval: vector dimension does not match the model");
        }
        inj = condition.vector->to_injection(condition.coefficient);
    }

    EvalReport report;
    report.condition = condition.to_json();
    report.language = lang;
    report.n = corpus.size();
    report.seed = seed;
    report.model_digest = model.digest();
    report.corpus_digest = langforge::corpus_digest(corpus);
    report.transcript.reserve(corpus.size());

    std::size_t correct = 0;
    for (const auto& rec : corpus) {
        TranscriptItem item;
        item.gold = rec.answer;
        switch (condition.kind) {
            case ConditionKind::basic:
            case ConditionKind::steered:
                item.prompt = rec.src;
                break;
            case ConditionKind::oracle_translate:
                item.prompt = langforge::translate_tokens(family, rec.src, lang, "en");
                break;
            case ConditionKind::self_translate: {
                // Stage 1: the model renders the prompt into English.
                TokenSeq query = rec.src;
                query.push_back(family.arrow_token());
                item.translation = tinylm::generate(model, query, rec.src.size() + 4, {},
                                                    family.eos_token());
                if (!item.translation.empty() &&
                    item.translation.back() == family.eos_token()) {
                    item.translation.pop_back();
                }
                item.prompt = item.translation;
                break;
            }
        }
        if (item.prompt.empty()) {
            item.correct = false;  // unusable self-translation
        } else {
            item.generation = tinylm::generate(model, item.prompt, kAnswerBudget, inj,
                                               family.eos_token());
            item.correct = score_generation(family, item.generation, item.gold);
        }
        correct += item.correct ? 1 : 0;
        report.transcript.push_back(std::move(item));
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(corpus.size());
    return report;
}

// ---------------------------------------------------------------------------
// Layer sweep.
// ---------------------------------------------------------------------------

struct SweepEntry {
    int layer = 0;
    double accuracy = 0.0;
    std::string vector_digest;
};

struct SweepReport {
    std::vector<SweepEntry> entries;  // one per hook point
    int best_layer = 0;
    double coefficient = 1.0;
    std::string language;
    std::string method;
    std::string model_digest;
    std::string train_corpus_digest;
    std::string eval_corpus_digest;
    std::vector<SteeringVector> vectors;

    Json to_json() const {
        Json j;
        j["language"] = language;
        j["method"] = method;
        j["coefficient"] = coefficient;
        j["best_layer"] = best_layer;
        j["model_digest"] = model_digest;
        j["train_corpus_digest"] = train_corpus_digest;
        j["eval_corpus_digest"] = eval_corpus_digest;
        j["layers"] = Json::array();
        for (const auto& e : entries) {
            j["layers"].push_back(Json{{"layer", e.layer},
                                       {"accuracy", e.accuracy},
                                       {"vector_digest", e.vector_digest}});
        }
        return j;
    }

    std::string to_csv() const {
        std::string out = "layer,accuracy\n";
        for (const auto& e : entries) {
            out += std::to_string(e.layer) + "," + fmt17(e.accuracy) + "\n";
        }
        return out;
    }
};

/// Learns a vector at every hook point and evaluates each at the fixed
/// coefficient; ties resolve toward the lowest layer.
inline SweepReport layer_sweep(const TransformerModel& model,
                               const LanguageFamily& family, const std::string& lang,
                               steering::Method method,
                               const ParallelCorpus& train_corpus,
                               const ParallelCorpus& eval_corpus,
                               const steering::BipoConfig& bipo_cfg,
                               const steering::MseConfig& mse_cfg,
                               double coefficient = 1.0, std::uint64_t seed = 0) {
    SweepReport report;
    report.language = lang;
    report.method = steering::to_string(method);
    report.coefficient = coefficient;
    report.model_digest = model.digest();
    report.train_corpus_digest = langforge::corpus_digest(train_corpus);
    report.eval_corpus_digest = langforge::corpus_digest(eval_corpus);
    double best = -1.0;
    for (int layer = 0; layer <= model.config().n_layers; ++layer) {
        auto sv = steering::learn_vector(model, family, train_corpus, layer, method,
                                         bipo_cfg, mse_cfg);
        auto eval = run_eval(model, family, lang, eval_corpus,
                             EvalCondition::steered(sv, coefficient), seed);
        SweepEntry entry;
        entry.layer = layer;
        entry.accuracy = eval.accuracy;
        entry.vector_digest = sv.digest();
        if (entry.accuracy > best) {
            best = entry.accuracy;
            report.best_layer = layer;
        }
        report.entries.push_back(entry);
        report.vectors.push_back(std::move(sv));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Cross-lingual transfer.
// ---------------------------------------------------------------------------

struct TransferReport {
    std::vector<std::string> sources;
    std::vector<std::string> targets;
    Matrix accuracy;  // |sources| x |targets|
    int layer = 0;
    double coefficient = 1.0;
    std::string model_digest;

    Json to_json() const {
        Json j;
        j["sources"] = sources;
        j["targets"] = targets;
        j["layer"] = layer;
        j["coefficient"] = coefficient;
        j["model_digest"] = model_digest;
        j["matrix"] = Json::array();
        for (std::size_t r = 0; r < accuracy.rows; ++r) {
            Json row = Json::array();
            for (std::size_t c = 0; c < accuracy.cols; ++c) {
                row.push_back(accuracy.at(r, c));
            }
            j["matrix"].push_back(row);
        }
        return j;
    }

    std::string to_csv() const {
        std::string out = "source";
        for (const auto& t : targets) {
            out += "," + t;
        }
        out += "\n";
        for (std::size_t r = 0; r < accuracy.rows; ++r) {
            out += sources[r];
            for (std::size_t c = 0; c < accuracy.cols; ++c) {
                out += "," + fmt17(accuracy.at(r, c));
            }
            out += "\n";
        }
        return out;
    }

    double at(const std::string& src, const std::string& tgt) const {
        for (std::size_t r = 0; r < sources.size(); ++r) {
            for (std::size_t c = 0; c < targets.size(); ++c) {
                if (sources[r] == src && targets[c] == tgt) {
                    return accuracy.at(r, c);
                }
            }
        }
        throw UsageError("transfer report has no cell " + src + "->" + tgt);
    }
};

/// Applies each source-language vector to every target language's eval corpus.
/// All vectors must share the hook layer and pooling.
inline TransferReport transfer_eval(
    const TransformerModel& model, const LanguageFamily& family,
    const std::vector<SteeringVector>& vectors,
    const std::vector<std::pair<std::string, ParallelCorpus>>& eval_corpora,
    std::optional<double> coefficient = {}, std::uint64_t seed = 0) {
    if (vectors.empty() || eval_corpora.empty()) {
        throw InvariantError("transfer_eval: no vectors or corpora");
    }
    for (const auto& sv : vectors) {
        if (sv.layer != vectors.front().layer || sv.pooling != vectors.front().pooling) {
            throw InvariantError(
                "transfer_eval: vectors must share layer and pooling");
        }
        if (sv.vector.size() != static_cast<std::size_t>(model.config().d_model)) {
            throw ShapeError("transfer_eval: vector dimension mismatch");
        }
    }
    TransferReport report;
    report.layer = vectors.front().layer;
    report.coefficient = coefficient.value_or(vectors.front().default_coefficient);
    report.model_digest = model.digest();
    for (const auto& sv : vectors) {
        report.sources.push_back(sv.source_lang);
    }
    for (const auto& [lang, corpus] : eval_corpora) {
        report.targets.push_back(lang);
    }
    report.accuracy = Matrix(vectors.size(), eval_corpora.size());
    for (std::size_t r = 0; r < vectors.size(); ++r) {
        for (std::size_t c = 0; c < eval_corpora.size(); ++c) {
            auto eval = run_eval(model, family, eval_corpora[c].first,
                                 eval_corpora[c].second,
                                 EvalCondition::steered(vectors[r], report.coefficient),
                                 seed);
            report.accuracy.at(r, c) = eval.accuracy;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// English-impact table.
// ---------------------------------------------------------------------------

struct EnglishImpactRow {
    std::string label;  // "baseline" or the vector's source language
    double accuracy = 0.0;
    std::string vector_digest;
};

struct EnglishImpactReport {
    std::vector<EnglishImpactRow> rows;  // baseline first
    std::string model_digest;
    std::string corpus_digest;

    Json to_json() const {
        Json j;
        j["model_digest"] = model_digest;
        j["corpus_digest"] = corpus_digest;
        j["rows"] = Json::array();
        for (const auto& r : rows) {
            j["rows"].push_back(Json{{"label", r.label},
                                     {"accuracy", r.accuracy},
                                     {"vector_digest", r.vector_digest}});
        }
        return j;
    }

    std::string to_csv() const {
        std::string out = "vector,accuracy\n";
        for (const auto& r : rows) {
            out += r.label + "," + fmt17(r.accuracy) + "\n";
        }
        return out;
    }
};

/// English accuracy under each language's steering vector plus the unsteered
/// baseline (first row).
inline EnglishImpactReport english_impact_eval(const TransformerModel& model,
                                               const LanguageFamily& family,
                                               const std::vector<SteeringVector>& vectors,
                                               const ParallelCorpus& en_corpus,
                                               std::optional<double> coefficient = {},
                                               std::uint64_t seed = 0) {
    EnglishImpactReport report;
    report.model_digest = model.digest();
    report.corpus_digest = langforge::corpus_digest(en_corpus);
    auto base = run_eval(model, family, "en", en_corpus, EvalCondition::basic(), seed);
    report.rows.push_back({"baseline", base.accuracy, ""});
    for (const auto& sv : vectors) {
        auto eval = run_eval(model, family, "en", en_corpus,
                             EvalCondition::steered(sv, coefficient), seed);
        report.rows.push_back({sv.source_lang, eval.accuracy, sv.digest()});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Fine-tuning vs steering comparison.
// ---------------------------------------------------------------------------

struct SftConfig {
    int epochs = 5;
    double learning_rate = 1e-3;
    double weight_decay = 0.001;
    double warmup_ratio = 0.05;
    std::uint64_t seed = 0;
    bool freeze_token_embeddings = true;  // keep the lab's lexical geometry fixed
};

struct SftCompareReport {
    std::string language;
    std::vector<double> sft_epoch_loss;
    lens::LogitLensReport lens_base;
    lens::LogitLensReport lens_sft;
    lens::LogitLensReport lens_steered;
    double accuracy_base = 0.0;
    double accuracy_sft = 0.0;
    double accuracy_steered = 0.0;
    std::string model_digest;
    std::string sft_model_digest;
    std::string vector_digest;

    Json to_json() const {
        Json j;
        j["language"] = language;
        j["sft_epoch_loss"] = sft_epoch_loss;
        j["accuracy"] = Json{{"base", accuracy_base},
                             {"sft", accuracy_sft},
                             {"steered", accuracy_steered}};
        j["model_digest"] = model_digest;
        j["sft_model_digest"] = sft_model_digest;
        j["vector_digest"] = vector_digest;
        j["lens_base"] = lens_base.to_json();
        j["lens_sft"] = lens_sft.to_json();
        j["lens_steered"] = lens_steered.to_json();
        return j;
    }
};

/// Clones the model, fine-tunes the clone on English->target translation
/// pairs with the loss restricted to target tokens, and reports logit-lens
/// language masses plus accuracies for base, fine-tuned and steered runs.
inline SftCompareReport sft_vs_steering(const TransformerModel& model,
                                        const LanguageFamily& family,
                                        const std::string& lang,
                                        const ParallelCorpus& train_corpus,
                                        const ParallelCorpus& eval_corpus,
                                        const SteeringVector& vector,
                                        const SftConfig& cfg,
                                        std::optional<double> coefficient = {}) {
    if (train_corpus.empty()) {
        throw InvariantError("sft_vs_steering: empty translation corpus");
    }
    SftCompareReport report;
    report.language = lang;
    report.model_digest = model.digest();
    report.vector_digest = vector.digest();

    std::vector<tinylm::TokenSeq> prompts;
    for (const auto& rec : eval_corpus) {
        prompts.push_back(rec.src);
    }

    report.lens_base = lens::logit_lens_masses(model, family, prompts);
    report.accuracy_base =
        run_eval(model, family, lang, eval_corpus, EvalCondition::basic()).accuracy;

    auto inj = vector.to_injection(coefficient);
    report.lens_steered = lens::logit_lens_masses(model, family, prompts, inj);
    report.accuracy_steered =
        run_eval(model, family, lang, eval_corpus,
                 EvalCondition::steered(vector, coefficient))
            .accuracy;

    TransformerModel tuned = model.clone();
    if (cfg.epochs > 0) {
        std::vector<tinylm::TrainSequence> sft_data;
        sft_data.reserve(train_corpus.size());
        for (const auto& rec : train_corpus) {
            auto rendered = langforge::render_sft_sequence(family, rec);
            sft_data.push_back({std::move(rendered.tokens), rendered.score_from});
        }
        numerics::OptimizerConfig opt;
        opt.kind = numerics::OptKind::adamw;
        opt.learning_rate = cfg.learning_rate;
        opt.weight_decay = cfg.weight_decay;
        opt.schedule = numerics::LrSchedule::cosine_warmup;
        opt.warmup_steps = static_cast<std::size_t>(
            cfg.warmup_ratio * static_cast<double>(sft_data.size()) *
            static_cast<double>(cfg.epochs));
        auto log = tinylm::train_lm(tuned, sft_data, opt, cfg.epochs, cfg.seed,
                                    cfg.freeze_token_embeddings);
        report.sft_epoch_loss = log.epoch_mean_loss;
    }
    report.sft_model_digest = tuned.digest();
    report.lens_sft = lens::logit_lens_masses(tuned, family, prompts);
    report.accuracy_sft =
        run_eval(tuned, family, lang, eval_corpus, EvalCondition::basic()).accuracy;
    return report;
}

}  // namespace steerlab::harness
