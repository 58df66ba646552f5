// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "steerlab/tensor.hpp"

namespace steerlab::numerics {

enum class OptKind { adamw, sgd };

enum class LrSchedule { constant, cosine_warmup };

struct OptimizerConfig {
    OptKind kind = OptKind::adamw;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    LrSchedule schedule = LrSchedule::constant;
    std::size_t warmup_steps = 0;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw InvariantError("optimizer: learning_rate must be non-negative");
        }
        if (!(weight_decay >= 0.0)) {
            throw InvariantError("optimizer: weight_decay must be non-negative");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw InvariantError("optimizer: betas must lie in [0, 1)");
        }
    }
};

/// Learning-rate multiplier in [0, 1] at a given 0-based step. The warmup ramp
/// is 0 at step 0 and reaches 1 at warmup_steps; the cosine tail decays to 0
/// at total_steps and stays there.
inline double schedule_value(LrSchedule schedule, std::size_t step,
                             std::size_t warmup_steps, std::size_t total_steps) {
    if (schedule == LrSchedule::constant) {
        return 1.0;
    }
    if (warmup_steps > 0 && step < warmup_steps) {
        return static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (total_steps <= warmup_steps) {
        return 1.0;
    }
    if (step >= total_steps) {
        return 0.0;
    }
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return 0.5 * (1.0 + std::cos(M_PI * progress));
}

/// AdamW (decoupled weight decay) or SGD over a fixed parameter list.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::vector<Tensor> params,
              std::size_t total_steps = 0)
        : cfg_(config), params_(std::move(params)), total_steps_(total_steps) {
        cfg_.validate();
        if (cfg_.kind == OptKind::adamw) {
            m_.resize(params_.size());
            u_.resize(params_.size());
            for (std::size_t i = 0; i < params_.size(); ++i) {
                m_[i].assign(params_[i]->numel(), 0.0);
                u_[i].assign(params_[i]->numel(), 0.0);
            }
        }
        for (const auto& p : params_) {
            p->ensure_grad();
        }
    }

    const OptimizerConfig& config() const { return cfg_; }
    std::size_t step_count() const { return steps_taken_; }
    void set_total_steps(std::size_t n) { total_steps_ = n; }

    double current_lr() const {
        return cfg_.learning_rate *
               schedule_value(cfg_.schedule, steps_taken_, cfg_.warmup_steps, total_steps_);
    }

    /// Applies one update from accumulated gradients, then clears them.
    void step() {
        const double lr = current_lr();
        const std::size_t t = steps_taken_ + 1;
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi]->value;
            auto& g = params_[pi]->grad;
            for (double gv : g) {
                if (!std::isfinite(gv)) {
                    throw NumericError("optimizer: non-finite gradient");
                }
            }
            if (cfg_.kind == OptKind::adamw) {
                const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
                const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m_[pi][i] = cfg_.beta1 * m_[pi][i] + (1.0 - cfg_.beta1) * g[i];
                    u_[pi][i] = cfg_.beta2 * u_[pi][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                    if (lr == 0.0) continue;  // moments advance, weights stay bit-identical
                    const double mhat = m_[pi][i] / bc1;
                    const double uhat = u_[pi][i] / bc2;
                    p[i] -= lr * (mhat / (std::sqrt(uhat) + cfg_.eps) +
                                  cfg_.weight_decay * p[i]);
                }
            } else if (lr != 0.0) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    p[i] -= lr * (g[i] + cfg_.weight_decay * p[i]);
                }
            }
            for (double pv : p) {
                if (!std::isfinite(pv)) {
                    throw NumericError("optimizer: parameter became non-finite");
                }
            }
        }
        ++steps_taken_;
        zero_grad();
    }

    void zero_grad() {
        for (const auto& p : params_) {
            p->zero_grad();
        }
    }

private:
    OptimizerConfig cfg_;
    std::vector<Tensor> params_;
    std::size_t total_steps_ = 0;
    std::size_t steps_taken_ = 0;
    std::vector<std::vector<double>> m_, u_;
};

inline OptKind opt_kind_from_string(const std::string& s) {
    if (s == "adamw") return OptKind::adamw;
    if (s == "sgd") return OptKind::sgd;
    throw UsageError("unknown optimizer kind: " + s);
}

}  // namespace steerlab::numerics
