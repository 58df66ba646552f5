// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "steerlab/common.hpp"
#include "steerlab/ops.hpp"
#include "steerlab/optim.hpp"

namespace steerlab::tinylm {

using numerics::Tensor;

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

constexpr double kRmsEps = 1e-5;

struct ModelConfig {
    int vocab_size = 512;
    int d_model = 64;
    int n_layers = 8;
    int n_heads = 4;
    int ctx_len = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 ||
            ctx_len <= 0) {
            throw InvariantError("model config: all dimensions must be positive");
        }
        if (d_model % n_heads != 0) {
            throw InvariantError("model config: d_model must be divisible by n_heads");
        }
    }
};

/// A steering intervention: add direction*coefficient*vector to the residual
/// stream at a hook point, at every token position.
struct InjectionSpec {
    int layer = 0;                  // hook index in [0, n_layers]
    std::vector<double> vector;     // length d_model
    double coefficient = 1.0;
    int direction = +1;             // +1 or -1
};

/// Residual-stream snapshot of one forward pass. residuals[l] is the raw
/// (pre-final-norm) [T x d] state at hook l; hook 0 is the embedding output,
/// hook l>=1 is the output of block l. Injection, when present, is already
/// folded into its hook and everything downstream.
struct ForwardTrace {
    std::vector<Matrix> residuals;  // n_layers + 1 entries
    Matrix logits;                  // [T x V]
};

struct LayerWeights {
    Tensor norm_attn, wq, wk, wv, wo;
    Tensor norm_mlp, w1, w2;
};

/// Pre-norm decoder-only transformer: RMS norm, learned positional
/// embeddings, causal multi-head attention, GELU MLP, untied unembedding.
class TransformerModel {
public:
    explicit TransformerModel(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(hash_combine(cfg.seed, 0x7472616e73666d72ULL));
        const auto V = static_cast<std::size_t>(cfg.vocab_size);
        const auto d = static_cast<std::size_t>(cfg.d_model);
        const auto ff = d * 4;
        const auto ctx = static_cast<std::size_t>(cfg.ctx_len);
        const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
        const double ff_std = 1.0 / std::sqrt(static_cast<double>(ff));
        const double resid_scale = 1.0 / std::sqrt(2.0 * cfg.n_layers);

        tok_emb_ = init({V, d}, rng, 0.02);
        pos_emb_ = init({ctx, d}, rng, 0.02);
        layers_.reserve(static_cast<std::size_t>(cfg.n_layers));
        for (int l = 0; l < cfg.n_layers; ++l) {
            LayerWeights w;
            w.norm_attn = numerics::leaf({d}, std::vector<double>(d, 1.0), false);
            w.wq = init({d, d}, rng, w_std);
            w.wk = init({d, d}, rng, w_std);
            w.wv = init({d, d}, rng, w_std);
            w.wo = init({d, d}, rng, w_std * resid_scale);
            w.norm_mlp = numerics::leaf({d}, std::vector<double>(d, 1.0), false);
            w.w1 = init({d, ff}, rng, w_std);
            w.w2 = init({ff, d}, rng, ff_std * resid_scale);
            layers_.push_back(std::move(w));
        }
        final_norm_ = numerics::leaf({d}, std::vector<double>(d, 1.0), false);
        unembed_ = init({d, V}, rng, w_std);
    }

    const ModelConfig& config() const { return cfg_; }
    const Tensor& unembedding() const { return unembed_; }
    const Tensor& final_norm_gain() const { return final_norm_; }
    const Tensor& token_embedding() const { return tok_emb_; }

    /// Replaces the token-embedding table (e.g. with an aligned geometry).
    void set_token_embedding(const Matrix& emb) {
        if (emb.rows != static_cast<std::size_t>(cfg_.vocab_size) ||
            emb.cols != static_cast<std::size_t>(cfg_.d_model)) {
            throw ShapeError("set_token_embedding: shape mismatch");
        }
        tok_emb_->value = emb.a;
    }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.emplace_back("tok_emb", tok_emb_);
        out.emplace_back("pos_emb", pos_emb_);
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            out.emplace_back(p + "norm_attn", layers_[l].norm_attn);
            out.emplace_back(p + "wq", layers_[l].wq);
            out.emplace_back(p + "wk", layers_[l].wk);
            out.emplace_back(p + "wv", layers_[l].wv);
            out.emplace_back(p + "wo", layers_[l].wo);
            out.emplace_back(p + "norm_mlp", layers_[l].norm_mlp);
            out.emplace_back(p + "w1", layers_[l].w1);
            out.emplace_back(p + "w2", layers_[l].w2);
        }
        out.emplace_back("final_norm", final_norm_);
        out.emplace_back("unembed", unembed_);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) {
            (void)name;
            out.push_back(t);
        }
        return out;
    }

    void set_requires_grad(bool on) const {
        for (auto& t : parameters()) {
            t->requires_grad = on;
            t->needs_grad = on;
            if (on) {
                t->ensure_grad();
            }
        }
    }

    /// Deep copy with independent weights (used by the SFT comparison).
    TransformerModel clone() const {
        TransformerModel out(cfg_);
        auto src = parameters();
        auto dst = out.parameters();
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i]->value = src[i]->value;
        }
        return out;
    }

    /// Digest over config and fp32-rounded weights; matches the checkpoint digest.
    std::string digest() const;

    struct GraphTrace {
        std::vector<Tensor> residuals;
        Tensor logits;
    };

    /// Graph-building forward pass. When `steer` is non-null, it is added to
    /// every row of the hook-`steer_layer` residual scaled by `steer_coeff`
    /// (direction folded in); the steer tensor may be a learnable leaf.
    GraphTrace forward_graph(const TokenSeq& tokens, int steer_layer = -1,
                             const Tensor& steer = nullptr,
                             double steer_coeff = 0.0) const {
        if (tokens.empty()) {
            throw InvariantError("forward: empty token sequence");
        }
        if (tokens.size() > static_cast<std::size_t>(cfg_.ctx_len)) {
            throw InvariantError("forward: sequence length " +
                                 std::to_string(tokens.size()) + " exceeds ctx_len " +
                                 std::to_string(cfg_.ctx_len));
        }
        if (steer) {
            if (steer_layer < 0 || steer_layer > cfg_.n_layers) {
                throw IndexError("forward: injection layer " +
                                 std::to_string(steer_layer) + " out of range [0, " +
                                 std::to_string(cfg_.n_layers) + "]");
            }
            if (steer->shape != numerics::Shape{static_cast<std::size_t>(cfg_.d_model)}) {
                throw ShapeError("forward: injection vector length must equal d_model");
            }
        }
        const std::size_t T = tokens.size();
        const auto d = static_cast<std::size_t>(cfg_.d_model);
        const auto heads = static_cast<std::size_t>(cfg_.n_heads);
        const std::size_t dh = d / heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

        TokenSeq positions(T);
        for (std::size_t i = 0; i < T; ++i) {
            positions[i] = static_cast<TokenId>(i);
        }

        auto apply_steer = [&](Tensor x, int hook) {
            if (!steer || steer_layer != hook) {
                return x;
            }
            // Exact no-op guarantee for c == 0 or v == 0.
            bool all_zero = steer_coeff == 0.0;
            if (!all_zero) {
                all_zero = true;
                for (double v : steer->value) {
                    all_zero = all_zero && v == 0.0;
                }
                if (all_zero && !steer->needs_grad) {
                    return x;
                }
                all_zero = false;
            } else if (!steer->needs_grad) {
                return x;
            }
            return numerics::add_row(x, numerics::scale(steer, steer_coeff));
        };

        GraphTrace trace;
        trace.residuals.reserve(static_cast<std::size_t>(cfg_.n_layers) + 1);

        Tensor x = numerics::add(numerics::gather_rows(tok_emb_, tokens),
                                 numerics::gather_rows(pos_emb_, positions));
        x = apply_steer(x, 0);
        trace.residuals.push_back(x);

        for (int l = 0; l < cfg_.n_layers; ++l) {
            const auto& w = layers_[static_cast<std::size_t>(l)];
            Tensor normed = numerics::rms_norm_rows(x, w.norm_attn, kRmsEps);
            Tensor q = numerics::matmul(normed, w.wq);
            Tensor k = numerics::matmul(normed, w.wk);
            Tensor v = numerics::matmul(normed, w.wv);
            std::vector<Tensor> head_outs;
            head_outs.reserve(heads);
            for (std::size_t hh = 0; hh < heads; ++hh) {
                Tensor qh = numerics::slice_cols(q, hh * dh, dh);
                Tensor kh = numerics::slice_cols(k, hh * dh, dh);
                Tensor vh = numerics::slice_cols(v, hh * dh, dh);
                Tensor scores = numerics::scale(numerics::matmul_nt(qh, kh), inv_sqrt_dh);
                Tensor probs = numerics::causal_softmax_rows(scores);
                head_outs.push_back(numerics::matmul(probs, vh));
            }
            Tensor attn = numerics::matmul(numerics::concat_cols(head_outs), w.wo);
            x = numerics::add(x, attn);
            Tensor mlp_in = numerics::rms_norm_rows(x, w.norm_mlp, kRmsEps);
            Tensor h1 = numerics::gelu(numerics::matmul(mlp_in, w.w1));
            x = numerics::add(x, numerics::matmul(h1, w.w2));
            x = apply_steer(x, l + 1);
            trace.residuals.push_back(x);
        }
        trace.logits = numerics::matmul(
            numerics::rms_norm_rows(x, final_norm_, kRmsEps), unembed_);
        return trace;
    }

private:
    static Tensor init(numerics::Shape shape, Rng& rng, double std_dev) {
        std::vector<double> v(numerics::shape_numel(shape));
        for (double& x : v) {
            x = rng.normal() * std_dev;
        }
        return numerics::leaf(std::move(shape), std::move(v), false);
    }

    ModelConfig cfg_;
    Tensor tok_emb_, pos_emb_;
    std::vector<LayerWeights> layers_;
    Tensor final_norm_, unembed_;
};

inline Tensor injection_tensor(const ModelConfig& cfg, const InjectionSpec& inj) {
    if (inj.vector.size() != static_cast<std::size_t>(cfg.d_model)) {
        throw ShapeError("injection vector length " + std::to_string(inj.vector.size()) +
                         " does not match d_model " + std::to_string(cfg.d_model));
    }
    if (inj.direction != 1 && inj.direction != -1) {
        throw InvariantError("injection direction must be +1 or -1");
    }
    return numerics::constant({inj.vector.size()}, inj.vector);
}

inline Matrix tensor_to_matrix(const Tensor& t) {
    if (t->shape.size() != 2) {
        throw ShapeError("tensor_to_matrix: rank-2 tensor required");
    }
    return Matrix(t->shape[0], t->shape[1], t->value);
}

/// Value-level forward pass with optional injection; no gradient tracking.
inline ForwardTrace forward_with_trace(const TransformerModel& model,
                                       const TokenSeq& tokens,
                                       const std::optional<InjectionSpec>& inj = {}) {
    TransformerModel::GraphTrace g;
    if (inj.has_value()) {
        Tensor v = injection_tensor(model.config(), *inj);
        g = model.forward_graph(tokens, inj->layer, v,
                                inj->coefficient * inj->direction);
    } else {
        g = model.forward_graph(tokens);
    }
    ForwardTrace out;
    out.residuals.reserve(g.residuals.size());
    for (const auto& r : g.residuals) {
        out.residuals.push_back(tensor_to_matrix(r));
    }
    out.logits = tensor_to_matrix(g.logits);
    return out;
}

/// Teacher-forced log-probability of `response` after `prompt`:
/// sum over response positions of log softmax(logits)[token]. Empty response
/// returns 0 by convention.
inline double sequence_logprob(const TransformerModel& model, const TokenSeq& prompt,
                               const TokenSeq& response,
                               const std::optional<InjectionSpec>& inj = {}) {
    if (prompt.empty()) {
        throw InvariantError("sequence_logprob: empty prompt");
    }
    if (response.empty()) {
        return 0.0;
    }
    TokenSeq full = prompt;
    full.insert(full.end(), response.begin(), response.end());
    ForwardTrace trace = forward_with_trace(model, full, inj);
    double total = 0.0;
    const std::size_t V = trace.logits.cols;
    for (std::size_t j = 0; j < response.size(); ++j) {
        const std::size_t row = prompt.size() - 1 + j;
        const TokenId tok = response[j];
        if (tok < 0 || static_cast<std::size_t>(tok) >= V) {
            throw IndexError("sequence_logprob: token out of vocab");
        }
        const double* r = trace.logits.row(row);
        total += r[tok] - numerics::log_sum_exp(r, V);
    }
    return total;
}

/// Graph variant used by preference-based steering: the steering vector stays
/// a learnable leaf so the log-probability differentiates through it.
inline Tensor sequence_logprob_graph(const TransformerModel& model,
                                     const TokenSeq& prompt, const TokenSeq& response,
                                     int layer, const Tensor& steer,
                                     double signed_coeff) {
    if (prompt.empty()) {
        throw InvariantError("sequence_logprob: empty prompt");
    }
    if (response.empty()) {
        return numerics::scalar_constant(0.0);
    }
    TokenSeq full = prompt;
    full.insert(full.end(), response.begin(), response.end());
    auto g = model.forward_graph(full, layer, steer, signed_coeff);
    std::vector<std::pair<std::size_t, TokenId>> picks;
    picks.reserve(response.size());
    for (std::size_t j = 0; j < response.size(); ++j) {
        picks.emplace_back(prompt.size() - 1 + j, response[j]);
    }
    return numerics::sum_log_softmax_picks(g.logits, picks);
}

/// Greedy decoding; deterministic, ties broken toward the lowest token id.
/// Stops after max_new_tokens, at stop_token (which is included in the
/// output), or when the context window is exhausted.
inline TokenSeq generate(const TransformerModel& model, const TokenSeq& prompt,
                         std::size_t max_new_tokens,
                         const std::optional<InjectionSpec>& inj = {},
                         TokenId stop_token = -1) {
    if (prompt.empty()) {
        throw InvariantError("generate: empty prompt");
    }
    if (prompt.size() > static_cast<std::size_t>(model.config().ctx_len)) {
        throw InvariantError("generate: prompt exceeds ctx_len");
    }
    TokenSeq seq = prompt;
    TokenSeq out;
    for (std::size_t i = 0; i < max_new_tokens; ++i) {
        if (seq.size() >= static_cast<std::size_t>(model.config().ctx_len)) {
            break;
        }
        ForwardTrace trace = forward_with_trace(model, seq, inj);
        const double* last = trace.logits.row(trace.logits.rows - 1);
        std::size_t best = 0;
        for (std::size_t c = 1; c < trace.logits.cols; ++c) {
            if (last[c] > last[best]) {
                best = c;
            }
        }
        const auto tok = static_cast<TokenId>(best);
        out.push_back(tok);
        seq.push_back(tok);
        if (tok == stop_token) {
            break;
        }
    }
    return out;
}

}  // namespace steerlab::tinylm
