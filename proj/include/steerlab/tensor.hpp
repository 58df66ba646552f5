// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "steerlab/common.hpp"

namespace steerlab::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           std::multiplies<std::size_t>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

class TensorNode;
using Tensor = std::shared_ptr<TensorNode>;

/// One value in the reverse-mode graph. Nodes are created in forward order;
/// their creation serial is a topological order, and the backward pass walks
/// serials in descending order, so gradient accumulation is deterministic.
class TensorNode {
public:
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;    // allocated iff gradients are tracked here
    bool requires_grad = false;  // learnable leaf
    bool needs_grad = false;     // this node or an ancestor requires grad
    std::uint64_t serial = 0;
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backprop;

    std::size_t numel() const { return value.size(); }

    bool is_scalar() const { return value.size() == 1; }

    double scalar() const {
        if (!is_scalar()) {
            throw ShapeError("scalar() on tensor of shape " + shape_str(shape));
        }
        return value[0];
    }

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), 0.0);
        }
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline std::atomic<std::uint64_t> g_tensor_serial{1};

inline Tensor make_tensor_node(Shape shape, std::vector<double> value) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (shape_numel(node->shape) != node->value.size()) {
        throw ShapeError("tensor data length " + std::to_string(node->value.size()) +
                         " does not match shape " + shape_str(node->shape));
    }
    node->serial = g_tensor_serial.fetch_add(1, std::memory_order_relaxed);
    return node;
}

/// Learnable or constant leaf. Input data must be finite.
inline Tensor leaf(Shape shape, std::vector<double> value, bool requires_grad) {
    for (double x : value) {
        if (!std::isfinite(x)) {
            throw NumericError("non-finite value in tensor leaf");
        }
    }
    Tensor t = make_tensor_node(std::move(shape), std::move(value));
    t->requires_grad = requires_grad;
    t->needs_grad = requires_grad;
    if (requires_grad) {
        t->ensure_grad();
    }
    return t;
}

inline Tensor constant(Shape shape, std::vector<double> value) {
    return leaf(std::move(shape), std::move(value), false);
}

inline Tensor scalar_constant(double x) {
    return constant({1}, {x});
}

inline Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return leaf(std::move(shape), std::move(v), requires_grad);
}

/// Result node of an op. Parent links and the backprop closure are recorded
/// only when some ancestor wants gradients; otherwise the op is pure eager.
inline Tensor op_result(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backprop) {
    Tensor t = make_tensor_node(std::move(shape), std::move(value));
    bool track = false;
    for (const auto& p : parents) {
        track = track || p->needs_grad;
    }
    if (track) {
        t->needs_grad = true;
        t->parents = std::move(parents);
        t->backprop = std::move(backprop);
    }
    return t;
}

/// Reverse pass from a scalar loss. Accumulates into requires_grad leaves;
/// interior gradient buffers are temporary. Traversal order is the descending
/// creation serial of the reachable subgraph, which is a topological order.
inline void backward(const Tensor& loss) {
    if (!loss->is_scalar()) {
        throw ShapeError("backward() requires a scalar loss, got shape " +
                         shape_str(loss->shape));
    }
    if (!std::isfinite(loss->value[0])) {
        throw NumericError("backward() on non-finite loss");
    }
    if (!loss->needs_grad) {
        return;
    }

    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{loss.get()};
    seen.insert(loss.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->needs_grad && seen.insert(p.get()).second) {
                stack.push_back(p.get());
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->serial > b->serial; });

    for (TensorNode* n : order) {
        if (n != loss.get() && !n->requires_grad) {
            n->grad.assign(n->value.size(), 0.0);
        } else {
            n->ensure_grad();
        }
    }
    loss->grad[0] += 1.0;

    for (TensorNode* n : order) {
        if (n->backprop) {
            n->backprop(*n);
        }
    }
    // Drop temporary interior buffers.
    for (TensorNode* n : order) {
        if (!n->requires_grad) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

}  // namespace steerlab::numerics
