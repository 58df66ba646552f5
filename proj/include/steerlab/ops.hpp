// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "steerlab/tensor.hpp"

namespace steerlab::numerics {

// ---------------------------------------------------------------------------
// Raw kernels on contiguous row-major buffers. These carry the arithmetic;
// the graph ops below wrap them with backward closures.
// ---------------------------------------------------------------------------

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
inline void matmul_nn_acc(const double* A, const double* B, double* C,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                c[j] += av * b[j];
            }
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
inline void matmul_nt_acc(const double* A, const double* B, double* C,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += a[p] * b[p];
            }
            c[j] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
inline void matmul_tn_acc(const double* A, const double* B, double* C,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                c[j] += av * b[j];
            }
        }
    }
}

inline double* grad_buf(const Tensor& t) {
    return t->grad.empty() ? nullptr : t->grad.data();
}

inline void check_rank2(const Tensor& t, const char* what) {
    if (t->shape.size() != 2) {
        throw ShapeError(std::string(what) + ": expected a matrix, got shape " +
                         shape_str(t->shape));
    }
}

inline void check_rank1(const Tensor& t, const char* what) {
    if (t->shape.size() != 1) {
        throw ShapeError(std::string(what) + ": expected a vector, got shape " +
                         shape_str(t->shape));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain numeric kernels, exported for direct use and as test anchors.
// ---------------------------------------------------------------------------

/// Numerically stable softmax of a vector. Shift-invariant by construction.
inline std::vector<double> softmax(const std::vector<double>& x) {
    if (x.empty()) {
        throw ShapeError("softmax of empty vector");
    }
    double mx = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw NumericError("softmax: non-finite input");
        }
        mx = std::max(mx, v);
    }
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

/// RMS normalization: out_i = gain_i * x_i / sqrt(mean(x^2) + eps).
inline std::vector<double> rms_norm(const std::vector<double>& x,
                                    const std::vector<double>& gain, double eps) {
    if (x.size() != gain.size()) {
        throw ShapeError("rms_norm: length mismatch " + std::to_string(x.size()) +
                         " vs " + std::to_string(gain.size()));
    }
    if (!(eps > 0.0)) {
        throw NumericError("rms_norm: eps must be positive");
    }
    double ms = 0.0;
    for (double v : x) {
        ms += v * v;
    }
    ms /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(ms + eps);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = gain[i] * x[i] * inv;
    }
    return out;
}

inline double log_sum_exp(const double* x, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        mx = std::max(mx, x[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += std::exp(x[i] - mx);
    }
    return mx + std::log(sum);
}

// ---------------------------------------------------------------------------
// Graph ops.
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a->shape != b->shape) {
        throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->value[i] + b->value[i];
    }
    return op_result(a->shape, std::move(out), {a, b}, [](TensorNode& n) {
        for (int side = 0; side < 2; ++side) {
            if (double* g = detail::grad_buf(n.parents[side])) {
                for (std::size_t i = 0; i < n.grad.size(); ++i) {
                    g[i] += n.grad[i];
                }
            }
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a->shape != b->shape) {
        throw ShapeError("sub: shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->value[i] - b->value[i];
    }
    return op_result(a->shape, std::move(out), {a, b}, [](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                g[i] += n.grad[i];
            }
        }
        if (double* g = detail::grad_buf(n.parents[1])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                g[i] -= n.grad[i];
            }
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a->shape != b->shape) {
        throw ShapeError("mul: shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->value[i] * b->value[i];
    }
    return op_result(a->shape, std::move(out), {a, b}, [](TensorNode& n) {
        const auto& av = n.parents[0]->value;
        const auto& bv = n.parents[1]->value;
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                g[i] += n.grad[i] * bv[i];
            }
        }
        if (double* g = detail::grad_buf(n.parents[1])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                g[i] += n.grad[i] * av[i];
            }
        }
    });
}

inline Tensor scale(const Tensor& a, double k) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a->value[i] * k;
    }
    return op_result(a->shape, std::move(out), {a}, [k](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                g[i] += n.grad[i] * k;
            }
        }
    });
}

/// Broadcast-add a d-vector to every row of a [T x d] matrix.
inline Tensor add_row(const Tensor& mat, const Tensor& vec) {
    detail::check_rank2(mat, "add_row");
    detail::check_rank1(vec, "add_row");
    const std::size_t rows = mat->shape[0];
    const std::size_t cols = mat->shape[1];
    if (vec->shape[0] != cols) {
        throw ShapeError("add_row: vector length " + std::to_string(vec->shape[0]) +
                         " vs matrix width " + std::to_string(cols));
    }
    std::vector<double> out(mat->numel());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = mat->value[r * cols + c] + vec->value[c];
        }
    }
    return op_result(mat->shape, std::move(out), {mat, vec},
                     [rows, cols](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                g[i] += n.grad[i];
            }
        }
        if (double* g = detail::grad_buf(n.parents[1])) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    g[c] += n.grad[r * cols + c];
                }
            }
        }
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check_rank2(a, "matmul");
    detail::check_rank2(b, "matmul");
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    if (b->shape[0] != k) {
        throw ShapeError("matmul: inner dims " + shape_str(a->shape) + " * " +
                         shape_str(b->shape));
    }
    std::vector<double> out(m * n, 0.0);
    detail::matmul_nn_acc(a->value.data(), b->value.data(), out.data(), m, k, n);
    return op_result({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& node) {
        // dA = dC * B^T, dB = A^T * dC
        if (double* g = detail::grad_buf(node.parents[0])) {
            detail::matmul_nt_acc(node.grad.data(), node.parents[1]->value.data(), g,
                                  m, n, k);
        }
        if (double* g = detail::grad_buf(node.parents[1])) {
            detail::matmul_tn_acc(node.parents[0]->value.data(), node.grad.data(), g,
                                  m, k, n);
        }
    });
}

/// A[m x k] * B[n x k]^T -> [m x n].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    detail::check_rank2(a, "matmul_nt");
    detail::check_rank2(b, "matmul_nt");
    const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[0];
    if (b->shape[1] != k) {
        throw ShapeError("matmul_nt: inner dims " + shape_str(a->shape) + " * " +
                         shape_str(b->shape) + "^T");
    }
    std::vector<double> out(m * n, 0.0);
    detail::matmul_nt_acc(a->value.data(), b->value.data(), out.data(), m, k, n);
    return op_result({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& node) {
        // dA = dC * B, dB = dC^T * A
        if (double* g = detail::grad_buf(node.parents[0])) {
            detail::matmul_nn_acc(node.grad.data(), node.parents[1]->value.data(), g,
                                  m, n, k);
        }
        if (double* g = detail::grad_buf(node.parents[1])) {
            detail::matmul_tn_acc(node.grad.data(), node.parents[0]->value.data(), g,
                                  m, n, k);
        }
    });
}

/// Embedding-style row gather: out[i] = table[ids[i]].
inline Tensor gather_rows(const Tensor& table, const std::vector<std::int32_t>& ids) {
    detail::check_rank2(table, "gather_rows");
    const std::size_t rows = table->shape[0];
    const std::size_t cols = table->shape[1];
    for (std::int32_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw IndexError("gather_rows: id " + std::to_string(id) +
                             " out of range [0, " + std::to_string(rows) + ")");
        }
    }
    std::vector<double> out(ids.size() * cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = table->value.data() + static_cast<std::size_t>(ids[i]) * cols;
        std::copy(src, src + cols, out.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
    return op_result({ids.size(), cols}, std::move(out), {table},
                     [ids, cols](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                double* dst = g + static_cast<std::size_t>(ids[i]) * cols;
                const double* src = n.grad.data() + i * cols;
                for (std::size_t c = 0; c < cols; ++c) {
                    dst[c] += src[c];
                }
            }
        }
    });
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t width) {
    detail::check_rank2(a, "slice_cols");
    const std::size_t rows = a->shape[0], cols = a->shape[1];
    if (c0 + width > cols) {
        throw IndexError("slice_cols: [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + width) + ") out of width " +
                         std::to_string(cols));
    }
    std::vector<double> out(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = a->value.data() + r * cols + c0;
        std::copy(src, src + width, out.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return op_result({rows, width}, std::move(out), {a},
                     [rows, cols, c0, width](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t r = 0; r < rows; ++r) {
                double* dst = g + r * cols + c0;
                const double* src = n.grad.data() + r * width;
                for (std::size_t c = 0; c < width; ++c) {
                    dst[c] += src[c];
                }
            }
        }
    });
}

inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t count) {
    detail::check_rank2(a, "slice_rows");
    const std::size_t rows = a->shape[0], cols = a->shape[1];
    if (r0 + count > rows) {
        throw IndexError("slice_rows: [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + count) + ") out of " +
                         std::to_string(rows) + " rows");
    }
    std::vector<double> out(a->value.begin() + static_cast<std::ptrdiff_t>(r0 * cols),
                            a->value.begin() + static_cast<std::ptrdiff_t>((r0 + count) * cols));
    return op_result({count, cols}, std::move(out), {a}, [r0, cols](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            double* dst = g + r0 * cols;
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                dst[i] += n.grad[i];
            }
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no parts");
    }
    const std::size_t rows = parts[0]->shape[0];
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::check_rank2(p, "concat_cols");
        if (p->shape[0] != rows) {
            throw ShapeError("concat_cols: row mismatch");
        }
        total += p->shape[1];
    }
    std::vector<double> out(rows * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p->shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(p->value.begin() + static_cast<std::ptrdiff_t>(r * w),
                      p->value.begin() + static_cast<std::ptrdiff_t>((r + 1) * w),
                      out.begin() + static_cast<std::ptrdiff_t>(r * total + off));
        }
        off += w;
    }
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        widths.push_back(p->shape[1]);
    }
    return op_result({rows, total}, std::move(out), parts,
                     [rows, total, widths](TensorNode& n) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
            const std::size_t w = widths[pi];
            if (double* g = detail::grad_buf(n.parents[pi])) {
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* src = n.grad.data() + r * total + off;
                    double* dst = g + r * w;
                    for (std::size_t c = 0; c < w; ++c) {
                        dst[c] += src[c];
                    }
                }
            }
            off += w;
        }
    });
}

/// Row-wise causal softmax of a square score matrix: row i is a distribution
/// over columns 0..i, masked columns are exactly zero.
inline Tensor causal_softmax_rows(const Tensor& scores) {
    detail::check_rank2(scores, "causal_softmax_rows");
    const std::size_t t = scores->shape[0];
    if (scores->shape[1] != t) {
        throw ShapeError("causal_softmax_rows: matrix must be square, got " +
                         shape_str(scores->shape));
    }
    std::vector<double> out(t * t, 0.0);
    for (std::size_t r = 0; r < t; ++r) {
        const double* x = scores->value.data() + r * t;
        double mx = x[0];
        for (std::size_t c = 1; c <= r; ++c) {
            mx = std::max(mx, x[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c <= r; ++c) {
            out[r * t + c] = std::exp(x[c] - mx);
            sum += out[r * t + c];
        }
        for (std::size_t c = 0; c <= r; ++c) {
            out[r * t + c] /= sum;
        }
    }
    return op_result(scores->shape, std::move(out), {scores}, [t](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t r = 0; r < t; ++r) {
                const double* p = n.value.data() + r * t;
                const double* gy = n.grad.data() + r * t;
                double dot = 0.0;
                for (std::size_t c = 0; c <= r; ++c) {
                    dot += gy[c] * p[c];
                }
                for (std::size_t c = 0; c <= r; ++c) {
                    g[r * t + c] += p[c] * (gy[c] - dot);
                }
            }
        }
    });
}

/// Row-wise RMS norm with a learned gain vector.
inline Tensor rms_norm_rows(const Tensor& a, const Tensor& gain, double eps) {
    detail::check_rank2(a, "rms_norm_rows");
    detail::check_rank1(gain, "rms_norm_rows");
    const std::size_t rows = a->shape[0], cols = a->shape[1];
    if (gain->shape[0] != cols) {
        throw ShapeError("rms_norm_rows: gain length mismatch");
    }
    if (!(eps > 0.0)) {
        throw NumericError("rms_norm_rows: eps must be positive");
    }
    std::vector<double> out(rows * cols);
    std::vector<double> inv_r(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->value.data() + r * cols;
        double ms = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            ms += x[c] * x[c];
        }
        ms /= static_cast<double>(cols);
        inv_r[r] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = gain->value[c] * x[c] * inv_r[r];
        }
    }
    return op_result(a->shape, std::move(out), {a, gain},
                     [rows, cols, inv_r](TensorNode& n) {
        const auto& x = n.parents[0]->value;
        const auto& gn = n.parents[1]->value;
        double* gx = detail::grad_buf(n.parents[0]);
        double* gg = detail::grad_buf(n.parents[1]);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = x.data() + r * cols;
            const double* gy = n.grad.data() + r * cols;
            const double inv = inv_r[r];
            if (gx) {
                double dot = 0.0;  // sum_j gain_j gy_j x_j
                for (std::size_t c = 0; c < cols; ++c) {
                    dot += gn[c] * gy[c] * xr[c];
                }
                const double k = dot * inv * inv * inv / static_cast<double>(cols);
                for (std::size_t c = 0; c < cols; ++c) {
                    gx[r * cols + c] += gn[c] * gy[c] * inv - xr[c] * k;
                }
            }
            if (gg) {
                for (std::size_t c = 0; c < cols; ++c) {
                    gg[c] += gy[c] * xr[c] * inv;
                }
            }
        }
    });
}

/// Exact (erf-based) GELU, applied elementwise.
inline Tensor gelu(const Tensor& a) {
    std::vector<double> out(a->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a->value[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    return op_result(a->shape, std::move(out), {a}, [](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const double x = n.parents[0]->value[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                g[i] += n.grad[i] * (cdf + x * pdf);
            }
        }
    });
}

/// Mean over rows of a [T x d] matrix -> d-vector.
inline Tensor mean_rows(const Tensor& a) {
    detail::check_rank2(a, "mean_rows");
    const std::size_t rows = a->shape[0], cols = a->shape[1];
    if (rows == 0) {
        throw ShapeError("mean_rows: empty matrix");
    }
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] += a->value[r * cols + c];
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(rows);
    }
    return op_result({cols}, std::move(out), {a}, [rows, cols](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            const double inv = 1.0 / static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    g[r * cols + c] += n.grad[c] * inv;
                }
            }
        }
    });
}

/// Sum of all elements -> scalar.
inline Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (double v : a->value) {
        acc += v;
    }
    return op_result({1}, {acc}, {a}, [](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (std::size_t i = 0; i < n.parents[0]->value.size(); ++i) {
                g[i] += n.grad[0];
            }
        }
    });
}

/// Mean of elementwise squares -> scalar. mean_square(a - b) is the
/// (1/d)*||a-b||^2 loss used for steering-vector fitting.
inline Tensor mean_square(const Tensor& a) {
    const std::size_t n = a->numel();
    double acc = 0.0;
    for (double v : a->value) {
        acc += v * v;
    }
    acc /= static_cast<double>(n);
    return op_result({1}, {acc}, {a}, [n](TensorNode& node) {
        if (double* g = detail::grad_buf(node.parents[0])) {
            const double k = 2.0 * node.grad[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                g[i] += k * node.parents[0]->value[i];
            }
        }
    });
}

/// Token-level cross entropy, averaged over rows >= score_from:
///   -(1/n_scored) * sum_t log softmax(logits_t)[targets_t]
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::int32_t>& targets,
                            std::size_t score_from = 0) {
    detail::check_rank2(logits, "cross_entropy");
    const std::size_t rows = logits->shape[0], vocab = logits->shape[1];
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
    }
    if (score_from >= rows) {
        throw IndexError("cross_entropy: score_from out of range");
    }
    for (std::size_t t = score_from; t < rows; ++t) {
        if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
            throw IndexError("cross_entropy: target id " + std::to_string(targets[t]) +
                             " out of vocab " + std::to_string(vocab));
        }
    }
    const std::size_t scored = rows - score_from;
    double loss = 0.0;
    for (std::size_t t = score_from; t < rows; ++t) {
        const double* row = logits->value.data() + t * vocab;
        const double lse = log_sum_exp(row, vocab);
        loss += lse - row[targets[t]];
    }
    loss /= static_cast<double>(scored);
    if (!std::isfinite(loss)) {
        throw NumericError("cross_entropy: non-finite loss");
    }
    return op_result({1}, {loss}, {logits},
                     [targets, score_from, rows, vocab, scored](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            const double k = n.grad[0] / static_cast<double>(scored);
            for (std::size_t t = score_from; t < rows; ++t) {
                const double* row = n.parents[0]->value.data() + t * vocab;
                const double lse = log_sum_exp(row, vocab);
                double* gr = g + t * vocab;
                for (std::size_t c = 0; c < vocab; ++c) {
                    gr[c] += k * std::exp(row[c] - lse);
                }
                gr[static_cast<std::size_t>(targets[t])] -= k;
            }
        }
    });
}

/// Sum over picks of log softmax(logits_row)[token] -> scalar (always <= 0).
inline Tensor sum_log_softmax_picks(
    const Tensor& logits,
    const std::vector<std::pair<std::size_t, std::int32_t>>& picks) {
    detail::check_rank2(logits, "sum_log_softmax_picks");
    const std::size_t rows = logits->shape[0], vocab = logits->shape[1];
    double total = 0.0;
    for (const auto& [row, tok] : picks) {
        if (row >= rows) {
            throw IndexError("sum_log_softmax_picks: row out of range");
        }
        if (tok < 0 || static_cast<std::size_t>(tok) >= vocab) {
            throw IndexError("sum_log_softmax_picks: token out of vocab");
        }
        const double* r = logits->value.data() + row * vocab;
        total += r[tok] - log_sum_exp(r, vocab);
    }
    if (!std::isfinite(total)) {
        throw NumericError("sum_log_softmax_picks: non-finite result");
    }
    return op_result({1}, {total}, {logits}, [picks, vocab](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            for (const auto& [row, tok] : picks) {
                const double* r = n.parents[0]->value.data() + row * vocab;
                const double lse = log_sum_exp(r, vocab);
                double* gr = g + row * vocab;
                for (std::size_t c = 0; c < vocab; ++c) {
                    gr[c] -= n.grad[0] * std::exp(r[c] - lse);
                }
                gr[static_cast<std::size_t>(tok)] += n.grad[0];
            }
        }
    });
}

/// -log sigmoid(x) == softplus(-x), computed without overflow.
inline Tensor neg_log_sigmoid(const Tensor& x) {
    if (!x->is_scalar()) {
        throw ShapeError("neg_log_sigmoid: scalar input required");
    }
    const double v = x->value[0];
    // softplus(-v) = max(-v, 0) + log1p(exp(-| v |))
    const double out = std::max(-v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    return op_result({1}, {out}, {x}, [](TensorNode& n) {
        if (double* g = detail::grad_buf(n.parents[0])) {
            const double v = n.parents[0]->value[0];
            const double sig = 1.0 / (1.0 + std::exp(-v));
            g[0] += n.grad[0] * (sig - 1.0);
        }
    });
}

// ---------------------------------------------------------------------------
// Gradient checking: reverse-mode vs central finite differences.
// ---------------------------------------------------------------------------

/// Rebuilds `f` around perturbed parameter entries and returns the worst
/// relative error between reverse-mode and central-difference gradients.
/// The denominator floor keeps genuinely-zero gradients from dominating.
inline double grad_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double h = 1e-5) {
    if (!(h >= 1e-7 && h <= 1e-3)) {
        throw NumericError("grad_check: step h outside [1e-7, 1e-3]");
    }
    for (const auto& p : params) {
        if (!p->requires_grad) {
            throw InvariantError("grad_check: parameter without requires_grad");
        }
        p->ensure_grad();
        p->zero_grad();
    }
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<double>> ad;
    ad.reserve(params.size());
    for (const auto& p : params) {
        ad.push_back(p->grad);
    }

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& x = params[pi]->value;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + h;
            const double fp = f()->scalar();
            x[i] = saved - h;
            const double fm = f()->scalar();
            x[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("grad_check: non-finite loss at perturbed point");
            }
            const double fd = (fp - fm) / (2.0 * h);
            const double a = ad[pi][i];
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
            worst = std::max(worst, std::abs(a - fd) / denom);
        }
    }
    return worst;
}

}  // namespace steerlab::numerics
