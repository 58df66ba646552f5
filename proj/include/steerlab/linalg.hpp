// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "steerlab/common.hpp"

namespace steerlab::linalg {

struct EigenResult {
    std::vector<double> values;  // descending
    Matrix vectors;              // row k is the eigenvector of values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Deterministic
/// sweep order; adequate for the sub-1024 sizes used here.
inline EigenResult jacobi_eigen_symmetric(Matrix a, int max_sweeps = 64,
                                          double tol = 1e-12) {
    const std::size_t n = a.rows;
    if (a.cols != n) {
        throw ShapeError("jacobi: matrix must be square");
    }
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        v.at(i, i) = 1.0;
    }
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a.at(p, q) * a.at(p, q);
            }
        }
        if (off <= tol * tol) {
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                const double app = a.at(p, p);
                const double aqq = a.at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0)
                                     ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                     : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p);
                    const double akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k);
                    const double aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p);
                    const double vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    // Sort eigenpairs by descending eigenvalue; stable order for ties.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return a.at(x, x) > a.at(y, y);
    });
    EigenResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a.at(idx[k], idx[k]);
        for (std::size_t i = 0; i < n; ++i) {
            out.vectors.at(k, i) = v.at(i, idx[k]);
        }
    }
    return out;
}

/// Column means of a point matrix (rows are samples).
inline std::vector<double> column_means(const Matrix& points) {
    return points.mean_rows();
}

/// Covariance of row-sample points (1/n normalization; only directions and
/// ratios matter downstream).
inline Matrix covariance(const Matrix& points) {
    const std::size_t n = points.rows, d = points.cols;
    if (n == 0) {
        throw ShapeError("covariance: no samples");
    }
    const auto mu = column_means(points);
    Matrix cov(d, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = points.at(r, i) - mu[i];
            for (std::size_t j = i; j < d; ++j) {
                cov.at(i, j) += xi * (points.at(r, j) - mu[j]);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov.at(i, j) *= inv;
            cov.at(j, i) = cov.at(i, j);
        }
    }
    return cov;
}

struct PcaResult {
    std::vector<double> mean;
    Matrix components;            // k x d, unit rows, descending variance
    std::vector<double> variances;  // length k
};

/// Top-k principal components of row-sample points.
inline PcaResult pca(const Matrix& points, std::size_t k) {
    if (points.rows < 2) {
        throw InvariantError("pca: need at least 2 samples");
    }
    if (k > points.cols) {
        throw ShapeError("pca: more components than dimensions");
    }
    auto eig = jacobi_eigen_symmetric(covariance(points));
    PcaResult out;
    out.mean = column_means(points);
    out.components = Matrix(k, points.cols);
    out.variances.assign(eig.values.begin(),
                         eig.values.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < points.cols; ++j) {
            out.components.at(c, j) = eig.vectors.at(c, j);
        }
    }
    return out;
}

}  // namespace steerlab::linalg
