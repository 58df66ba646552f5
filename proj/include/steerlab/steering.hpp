// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerlab/checkpoint.hpp"
#include "steerlab/langforge.hpp"
#include "steerlab/linalg.hpp"
#include "steerlab/model.hpp"

namespace steerlab::steering {

using Json = nlohmann::ordered_json;
using langforge::CorpusRecord;
using langforge::LanguageFamily;
using langforge::ParallelCorpus;
using tinylm::TokenSeq;
using tinylm::TransformerModel;

enum class Method { bipo, mse, meandiff, pca };

enum class Pooling { mean_pool, last_token };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::bipo: return "bipo";
        case Method::mse: return "mse";
        case Method::meandiff: return "meandiff";
        case Method::pca: return "pca";
    }
    throw InvariantError("bad method");
}

inline Method method_from_string(const std::string& s) {
    if (s == "bipo") return Method::bipo;
    if (s == "mse") return Method::mse;
    if (s == "meandiff") return Method::meandiff;
    if (s == "pca") return Method::pca;
    throw UsageError("unknown steering method: " + s);
}

inline std::string to_string(Pooling p) {
    return p == Pooling::mean_pool ? "mean_pool" : "last_token";
}

inline Pooling pooling_from_string(const std::string& s) {
    if (s == "mean_pool") return Pooling::mean_pool;
    if (s == "last_token") return Pooling::last_token;
    throw UsageError("unknown pooling: " + s);
}

/// A learned steering direction bound to its hook layer, language pair,
/// method and training provenance.
struct SteeringVector {
    std::vector<double> vector;
    int layer = 0;
    std::string source_lang;
    std::string target_lang = "en";
    Method method = Method::meandiff;
    double default_coefficient = 1.0;
    Pooling pooling = Pooling::mean_pool;
    std::string trained_on;    // corpus digest
    std::string model_digest;  // model the vector was trained against
    Json hyperparams = Json::object();

    tinylm::InjectionSpec to_injection(std::optional<double> coefficient = {},
                                       int direction = +1) const {
        tinylm::InjectionSpec inj;
        inj.layer = layer;
        inj.vector = vector;
        inj.coefficient = coefficient.value_or(default_coefficient);
        inj.direction = direction;
        return inj;
    }

    Json to_json() const {
        Json j;
        j["version"] = 1;
        j["method"] = to_string(method);
        j["layer"] = layer;
        j["pooling"] = to_string(pooling);
        j["source_lang"] = source_lang;
        j["target_lang"] = target_lang;
        j["default_coefficient"] = default_coefficient;
        j["hyperparams"] = hyperparams;
        j["corpus_digest"] = trained_on;
        j["model_digest"] = model_digest;
        j["vector"] = vector;
        return j;
    }

    static SteeringVector from_json(const Json& j) {
        SteeringVector sv;
        sv.method = method_from_string(j.at("method").get<std::string>());
        sv.layer = j.at("layer").get<int>();
        sv.pooling = pooling_from_string(j.at("pooling").get<std::string>());
        sv.source_lang = j.at("source_lang").get<std::string>();
        sv.target_lang = j.at("target_lang").get<std::string>();
        sv.default_coefficient = j.at("default_coefficient").get<double>();
        sv.hyperparams = j.at("hyperparams");
        sv.trained_on = j.at("corpus_digest").get<std::string>();
        sv.model_digest = j.value("model_digest", "");
        sv.vector = j.at("vector").get<std::vector<double>>();
        return sv;
    }

    std::string digest() const { return digest_of_bytes(to_json().dump()); }
};

inline void save_vector(const SteeringVector& sv, const std::string& path) {
    write_file_bytes(path, sv.to_json().dump(2) + "\n");
}

inline SteeringVector load_vector(const std::string& path) {
    return SteeringVector::from_json(Json::parse(read_file_bytes(path)));
}

// ---------------------------------------------------------------------------
// The injection primitive.
// ---------------------------------------------------------------------------

/// Returns h with c*v added to every row; the input is untouched.
inline Matrix inject(const Matrix& h, const std::vector<double>& v, double c) {
    if (v.size() != h.cols) {
        throw ShapeError("inject: vector length " + std::to_string(v.size()) +
                         " vs residual width " + std::to_string(h.cols));
    }
    Matrix out = h;
    for (std::size_t r = 0; r < h.rows; ++r) {
        double* row = out.row(r);
        for (std::size_t c_i = 0; c_i < h.cols; ++c_i) {
            row[c_i] += c * v[c_i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activation extraction.
// ---------------------------------------------------------------------------

inline std::vector<double> pool_states(const Matrix& states, Pooling pooling) {
    if (states.rows == 0) {
        throw ShapeError("pool_states: empty state matrix");
    }
    if (pooling == Pooling::mean_pool) {
        return states.mean_rows();
    }
    return std::vector<double>(states.row(states.rows - 1),
                               states.row(states.rows - 1) + states.cols);
}

/// Pooled raw residual at hook `layer` for one prompt.
inline std::vector<double> pooled_state(const TransformerModel& model,
                                        const TokenSeq& tokens, int layer,
                                        Pooling pooling) {
    auto trace = tinylm::forward_with_trace(model, tokens);
    if (layer < 0 || static_cast<std::size_t>(layer) >= trace.residuals.size()) {
        throw IndexError("pooled_state: layer out of range");
    }
    return pool_states(trace.residuals[static_cast<std::size_t>(layer)], pooling);
}

struct PooledPairs {
    Matrix en;  // one row per corpus item
    Matrix src;
};

inline PooledPairs extract_pooled_pairs(const TransformerModel& model,
                                        const ParallelCorpus& corpus, int layer,
                                        Pooling pooling) {
    if (corpus.empty()) {
        throw InvariantError("extract_pooled_pairs: empty corpus");
    }
    const auto d = static_cast<std::size_t>(model.config().d_model);
    PooledPairs out;
    out.en = Matrix(corpus.size(), d);
    out.src = Matrix(corpus.size(), d);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto he = pooled_state(model, corpus[i].en, layer, pooling);
        auto hx = pooled_state(model, corpus[i].src, layer, pooling);
        std::copy(he.begin(), he.end(), out.en.row(i));
        std::copy(hx.begin(), hx.end(), out.src.row(i));
    }
    return out;
}

inline std::string corpus_language(const ParallelCorpus& corpus) {
    if (corpus.empty()) {
        throw InvariantError("empty corpus");
    }
    const std::string& lang = corpus.front().lang;
    for (const auto& rec : corpus) {
        if (rec.lang != lang) {
            throw InvariantError("corpus mixes languages: " + lang + " and " + rec.lang);
        }
    }
    return lang;
}

// ---------------------------------------------------------------------------
// Mean-difference and PCA baselines.
// ---------------------------------------------------------------------------

/// v = mean(pooled h_en) - mean(pooled h_x) over per-prompt state matrices.
inline SteeringVector extract_meandiff(const std::vector<Matrix>& states_en,
                                       const std::vector<Matrix>& states_x,
                                       Pooling pooling = Pooling::mean_pool) {
    if (states_en.empty() || states_x.empty()) {
        throw InvariantError("extract_meandiff: empty state set");
    }
    const std::size_t d = states_en.front().cols;
    for (const auto& m : states_en) {
        if (m.cols != d) {
            throw ShapeError("extract_meandiff: width mismatch");
        }
    }
    for (const auto& m : states_x) {
        if (m.cols != d) {
            throw ShapeError("extract_meandiff: width mismatch");
        }
    }
    std::vector<double> mean_en(d, 0.0), mean_x(d, 0.0);
    for (const auto& m : states_en) {
        auto p = pool_states(m, pooling);
        for (std::size_t i = 0; i < d; ++i) {
            mean_en[i] += p[i];
        }
    }
    for (const auto& m : states_x) {
        auto p = pool_states(m, pooling);
        for (std::size_t i = 0; i < d; ++i) {
            mean_x[i] += p[i];
        }
    }
    SteeringVector sv;
    sv.method = Method::meandiff;
    sv.pooling = pooling;
    sv.vector.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        sv.vector[i] = mean_en[i] / static_cast<double>(states_en.size()) -
                       mean_x[i] / static_cast<double>(states_x.size());
    }
    return sv;
}

/// First principal component of centered difference rows; unit L2 norm, sign
/// fixed so the first nonzero coordinate is positive.
inline SteeringVector extract_pca(const Matrix& state_differences) {
    if (state_differences.rows < 2) {
        throw InvariantError("extract_pca: need at least 2 samples");
    }
    auto fit = linalg::pca(state_differences, 1);
    if (!(fit.variances[0] > 0.0)) {
        throw NumericError("extract_pca: degenerate input with zero variance");
    }
    std::vector<double> v(fit.components.row(0),
                          fit.components.row(0) + fit.components.cols);
    const double norm = l2_norm(v);
    for (double& x : v) {
        x /= norm;
    }
    for (double x : v) {
        if (x != 0.0) {
            if (x < 0.0) {
                for (double& y : v) {
                    y = -y;
                }
            }
            break;
        }
    }
    SteeringVector sv;
    sv.method = Method::pca;
    sv.vector = std::move(v);
    return sv;
}

// ---------------------------------------------------------------------------
// MSE steering (gradient descent on pooled activation pairs).
// ---------------------------------------------------------------------------

struct MseConfig {
    double learning_rate = 1e-2;  // desk-scale default; paper preset below
    int epochs = 8;
    double coefficient_c = 1.0;   // fixed during learning; free at inference
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) {
            throw InvariantError("mse config: learning_rate must be positive");
        }
        if (epochs < 1) {
            throw InvariantError("mse config: epochs must be >= 1");
        }
    }
};

/// Epoch grid used in the reference experiments.
constexpr std::array<int, 4> kMseEpochGrid = {3, 5, 8, 12};
/// Learning rate used by the reference experiments on full-size models.
constexpr double kMseReferenceLearningRate = 1e-8;

struct FitResult {
    std::vector<double> vector;
    std::vector<double> epoch_mean_loss;
};

/// Core MSE fit over pooled activation rows: starting from v = 0, per-example
/// gradient steps on (1/d)*||h_x + c*v - h_en||^2 in a fixed pass order.
inline FitResult learn_mse_from_states(const Matrix& states_en, const Matrix& states_x,
                                       const MseConfig& cfg) {
    cfg.validate();
    if (states_en.rows == 0 || states_en.rows != states_x.rows ||
        states_en.cols != states_x.cols) {
        throw ShapeError("learn_mse: state matrices must be equal non-empty shapes");
    }
    const std::size_t n = states_en.rows, d = states_en.cols;
    auto v = numerics::zeros({d}, true);
    FitResult out;
    out.epoch_mean_loss.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int e = 0; e < cfg.epochs; ++e) {
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto hx = numerics::constant({d}, std::vector<double>(states_x.row(i),
                                                                  states_x.row(i) + d));
            auto he = numerics::constant({d}, std::vector<double>(states_en.row(i),
                                                                  states_en.row(i) + d));
            auto diff = numerics::sub(
                numerics::add(hx, numerics::scale(v, cfg.coefficient_c)), he);
            auto loss = numerics::mean_square(diff);
            v->zero_grad();
            numerics::backward(loss);
            for (std::size_t k = 0; k < d; ++k) {
                v->value[k] -= cfg.learning_rate * v->grad[k];
            }
            loss_sum += loss->scalar();
        }
        out.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n));
    }
    out.vector = v->value;
    return out;
}

/// MSE steering vector from a parallel corpus at hook `layer`.
inline SteeringVector learn_mse(const TransformerModel& model,
                                const ParallelCorpus& corpus, int layer,
                                const MseConfig& cfg,
                                std::vector<double>* loss_log = nullptr) {
    auto pairs = extract_pooled_pairs(model, corpus, layer, Pooling::mean_pool);
    auto fit = learn_mse_from_states(pairs.en, pairs.src, cfg);
    if (loss_log) {
        *loss_log = fit.epoch_mean_loss;
    }
    SteeringVector sv;
    sv.vector = std::move(fit.vector);
    sv.layer = layer;
    sv.source_lang = corpus_language(corpus);
    sv.target_lang = "en";
    sv.method = Method::mse;
    sv.default_coefficient = 1.0;
    sv.pooling = Pooling::mean_pool;
    sv.trained_on = langforge::corpus_digest(corpus);
    sv.model_digest = model.digest();
    sv.hyperparams = {{"learning_rate", cfg.learning_rate},
                      {"epochs", cfg.epochs},
                      {"coefficient_c", cfg.coefficient_c},
                      {"seed", cfg.seed}};
    return sv;
}

// ---------------------------------------------------------------------------
// BiPO: bidirectional preference optimization of the steering vector.
// ---------------------------------------------------------------------------

struct BipoConfig {
    double beta = 0.1;
    double learning_rate = 5e-4;
    double weight_decay = 0.05;
    int batch_size = 1;
    std::size_t warmup_steps = 100;
    int epochs = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(beta > 0.0)) {
            throw InvariantError("bipo config: beta must be positive");
        }
        if (!(learning_rate > 0.0)) {
            throw InvariantError("bipo config: learning_rate must be positive");
        }
        if (batch_size < 1 || epochs < 1) {
            throw InvariantError("bipo config: batch_size and epochs must be >= 1");
        }
    }
};

/// One preference example: a target-language question with paired responses,
/// preferred (English-worded) and dispreferred (source-language-worded).
struct PreferenceExample {
    TokenSeq prompt;
    TokenSeq preferred;     // r_T
    TokenSeq dispreferred;  // r_O
};

inline std::vector<PreferenceExample> preference_examples(
    const LanguageFamily& family, const ParallelCorpus& corpus) {
    std::vector<PreferenceExample> out;
    out.reserve(corpus.size());
    for (const auto& rec : corpus) {
        if (rec.task_tag != "arith" || rec.answer.empty()) {
            throw InvariantError("bipo corpus needs solved task records");
        }
        PreferenceExample ex;
        ex.prompt = rec.src;
        ex.preferred = langforge::task_response(family, "en", rec.answer);
        ex.dispreferred = langforge::task_response(family, rec.lang, rec.answer);
        out.push_back(std::move(ex));
    }
    return out;
}

/// The per-example preference loss as a graph over v:
///   -log sigma( d*beta*[dlogpi(r_T)] - d*beta*[dlogpi(r_O)] ),
/// with dlogpi(r) = logpi(r | q, +d*v at layer) - logpi(r | q).
inline numerics::Tensor bipo_example_loss(const TransformerModel& model,
                                          const PreferenceExample& ex, int layer,
                                          const numerics::Tensor& v, int d, double beta,
                                          double base_pref, double base_dispref) {
    auto lp_t = tinylm::sequence_logprob_graph(model, ex.prompt, ex.preferred, layer, v,
                                               static_cast<double>(d));
    auto lp_o = tinylm::sequence_logprob_graph(model, ex.prompt, ex.dispreferred, layer,
                                               v, static_cast<double>(d));
    const double db = static_cast<double>(d) * beta;
    auto z = numerics::sub(
        numerics::scale(numerics::sub(lp_t, numerics::scalar_constant(base_pref)), db),
        numerics::scale(numerics::sub(lp_o, numerics::scalar_constant(base_dispref)),
                        db));
    return numerics::neg_log_sigmoid(z);
}

/// BiPO fit: AdamW over v with cosine warmup, direction d resampled per step.
inline FitResult learn_bipo_from_examples(const TransformerModel& model,
                                          const std::vector<PreferenceExample>& examples,
                                          int layer, const BipoConfig& cfg) {
    cfg.validate();
    if (examples.empty()) {
        throw InvariantError("learn_bipo: empty corpus");
    }
    if (layer < 0 || layer > model.config().n_layers) {
        throw IndexError("learn_bipo: layer out of range");
    }
    const auto d_model = static_cast<std::size_t>(model.config().d_model);

    // Base (injection-free) log-probs do not depend on v; compute once.
    std::vector<double> base_pref(examples.size()), base_dispref(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        base_pref[i] = tinylm::sequence_logprob(model, examples[i].prompt,
                                                examples[i].preferred);
        base_dispref[i] = tinylm::sequence_logprob(model, examples[i].prompt,
                                                   examples[i].dispreferred);
    }

    auto v = numerics::zeros({d_model}, true);
    numerics::OptimizerConfig opt_cfg;
    opt_cfg.kind = numerics::OptKind::adamw;
    opt_cfg.learning_rate = cfg.learning_rate;
    opt_cfg.weight_decay = cfg.weight_decay;
    opt_cfg.schedule = numerics::LrSchedule::cosine_warmup;
    opt_cfg.warmup_steps = cfg.warmup_steps;
    const std::size_t total_steps =
        (examples.size() * static_cast<std::size_t>(cfg.epochs) +
         static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    numerics::Optimizer opt(opt_cfg, {v}, total_steps);

    Rng dir_rng(hash_combine(cfg.seed, 0x6269706fULL));
    FitResult out;
    std::size_t in_batch = 0;
    for (int e = 0; e < cfg.epochs; ++e) {
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            const int d = dir_rng.below(2) == 0 ? +1 : -1;
            auto loss = bipo_example_loss(model, examples[i], layer, v, d, cfg.beta,
                                          base_pref[i], base_dispref[i]);
            numerics::backward(loss);
            loss_sum += loss->scalar();
            if (++in_batch == static_cast<std::size_t>(cfg.batch_size)) {
                opt.step();
                in_batch = 0;
            }
        }
        out.epoch_mean_loss.push_back(loss_sum / static_cast<double>(examples.size()));
    }
    if (in_batch > 0) {
        opt.step();
    }
    out.vector = v->value;
    return out;
}

inline SteeringVector learn_bipo(const TransformerModel& model,
                                 const LanguageFamily& family,
                                 const ParallelCorpus& corpus, int layer,
                                 const BipoConfig& cfg,
                                 std::vector<double>* loss_log = nullptr) {
    auto fit = learn_bipo_from_examples(model, preference_examples(family, corpus),
                                        layer, cfg);
    if (loss_log) {
        *loss_log = fit.epoch_mean_loss;
    }
    SteeringVector sv;
    sv.vector = std::move(fit.vector);
    sv.layer = layer;
    sv.source_lang = corpus_language(corpus);
    sv.target_lang = "en";
    sv.method = Method::bipo;
    sv.default_coefficient = 1.0;
    sv.pooling = Pooling::mean_pool;
    sv.trained_on = langforge::corpus_digest(corpus);
    sv.model_digest = model.digest();
    sv.hyperparams = {{"beta", cfg.beta},
                      {"learning_rate", cfg.learning_rate},
                      {"weight_decay", cfg.weight_decay},
                      {"batch_size", cfg.batch_size},
                      {"warmup_steps", cfg.warmup_steps},
                      {"epochs", cfg.epochs},
                      {"seed", cfg.seed}};
    return sv;
}

// ---------------------------------------------------------------------------
// Wrappers giving the two contrastive baselines full corpus provenance.
// ---------------------------------------------------------------------------

inline SteeringVector learn_meandiff(const TransformerModel& model,
                                     const ParallelCorpus& corpus, int layer) {
    auto pairs = extract_pooled_pairs(model, corpus, layer, Pooling::mean_pool);
    std::vector<Matrix> en_rows, src_rows;
    for (std::size_t i = 0; i < pairs.en.rows; ++i) {
        en_rows.emplace_back(1, pairs.en.cols,
                             std::vector<double>(pairs.en.row(i),
                                                 pairs.en.row(i) + pairs.en.cols));
        src_rows.emplace_back(1, pairs.src.cols,
                              std::vector<double>(pairs.src.row(i),
                                                  pairs.src.row(i) + pairs.src.cols));
    }
    SteeringVector sv = extract_meandiff(en_rows, src_rows, Pooling::mean_pool);
    sv.layer = layer;
    sv.source_lang = corpus_language(corpus);
    sv.trained_on = langforge::corpus_digest(corpus);
    sv.model_digest = model.digest();
    return sv;
}

inline SteeringVector learn_pca(const TransformerModel& model,
                                const ParallelCorpus& corpus, int layer) {
    auto pairs = extract_pooled_pairs(model, corpus, layer, Pooling::mean_pool);
    Matrix diffs(pairs.en.rows, pairs.en.cols);
    for (std::size_t i = 0; i < diffs.rows * diffs.cols; ++i) {
        diffs.a[i] = pairs.en.a[i] - pairs.src.a[i];
    }
    SteeringVector sv = extract_pca(diffs);
    sv.layer = layer;
    sv.source_lang = corpus_language(corpus);
    sv.trained_on = langforge::corpus_digest(corpus);
    sv.model_digest = model.digest();
    return sv;
}

/// Single entry point used by the sweep/CLI layers.
inline SteeringVector learn_vector(const TransformerModel& model,
                                   const LanguageFamily& family,
                                   const ParallelCorpus& corpus, int layer,
                                   Method method, const BipoConfig& bipo_cfg,
                                   const MseConfig& mse_cfg,
                                   std::vector<double>* loss_log = nullptr) {
    switch (method) {
        case Method::bipo:
            return learn_bipo(model, family, corpus, layer, bipo_cfg, loss_log);
        case Method::mse:
            return learn_mse(model, corpus, layer, mse_cfg, loss_log);
        case Method::meandiff:
            return learn_meandiff(model, corpus, layer);
        case Method::pca:
            return learn_pca(model, corpus, layer);
    }
    throw InvariantError("bad method");
}

}  // namespace steerlab::steering
