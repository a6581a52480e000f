#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpca_attn/decomp.hpp"
#include "kpca_attn/kernel.hpp"
#include "kpca_attn/mat.hpp"

namespace kpca_attn::kpca {

inline constexpr double kDegenerateScaleFloor = 1e-300;
inline constexpr double kEigenvalueFloorFactor = 1e-10;

/// Normalized kernel values of the keys against themselves.
/// gram(i,j) = k(k_i,k_j) / (g(k_i) g(k_j)); centered subtracts the
/// feature-space mean on both sides, so its rows and columns sum to zero.
struct GramBundle {
    std::vector<double> g;  // g(k_j) per key
    Mat gram;               // uncentered, N x N
    Mat centered;           // centered, N x N
};

inline GramBundle gram(const Mat& keys, const KernelSpec& spec) {
    const std::size_t n = keys.rows();
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j) {
        g[j] = g_scaling(keys.row(j), keys, spec);
        if (g[j] <= kDegenerateScaleFloor)
            throw std::domain_error("gram: degenerate scaling g(k_" + std::to_string(j) +
                                    ") = " + std::to_string(g[j]));
    }
    std::vector<double> raw(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double v = kernel_eval(keys.row(i), keys.row(j), spec) / (g[i] * g[j]);
            raw[i * n + j] = v;
            raw[j * n + i] = v;  // exact symmetry by construction
        }
    }
    Mat uncentered(n, n, std::move(raw));

    // centered(i,j) = gram(i,j) - rowmean_i - rowmean_j + overall mean,
    // the matrix identity K - 1K - K1 + 1K1 with 1 the constant-1/N matrix.
    std::vector<double> mean(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += uncentered(i, j);
        mean[i] = s / static_cast<double>(n);
        total += s;
    }
    total /= static_cast<double>(n * n);
    Mat centered = Mat::build(n, n, [&](std::size_t i, std::size_t j) {
        return uncentered(i, j) - mean[i] - mean[j] + total;
    });
    return GramBundle{std::move(g), std::move(uncentered), std::move(centered)};
}

/// Top eigenpairs of the centered Gram matrix, solved as
/// centered * a_d = (N lambda_d) a_d and rescaled so a_d . a_d = 1/(N lambda_d),
/// which makes the feature-space axes u_d unit vectors.
struct EigenBasis {
    std::size_t num_components = 0;
    std::vector<double> eigenvalues;  // lambda_d, descending, positive
    Mat coefficients;                 // N x D_v, column d is a_d
};

struct InsufficientEigenpairs : std::runtime_error {
    std::size_t usable;
    InsufficientEigenpairs(std::size_t usable_, std::size_t requested)
        : std::runtime_error("solve_coefficients: only " + std::to_string(usable_) +
                             " eigenvalues above floor, requested " +
                             std::to_string(requested)),
          usable(usable_) {}
};

inline EigenBasis solve_coefficients(const GramBundle& bundle, std::size_t num_components) {
    const std::size_t n = bundle.centered.rows();
    if (num_components < 1 || num_components > n)
        throw std::invalid_argument("solve_coefficients: need 1 <= D_v <= " +
                                    std::to_string(n) + ", got " +
                                    std::to_string(num_components));
    SymEig eig = sym_eig(bundle.centered);
    const double floor = kEigenvalueFloorFactor * frobenius_norm(bundle.centered);
    std::size_t usable = 0;
    while (usable < n && eig.eigenvalues[usable] > floor) ++usable;
    if (usable < num_components)
        throw InsufficientEigenpairs(usable, num_components);

    std::vector<double> lambdas(num_components);
    std::vector<double> data(n * num_components);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < num_components; ++d)
            data[i * num_components + d] = eig.eigenvectors(i, d);
    for (std::size_t d = 0; d < num_components; ++d) {
        double n_lambda = eig.eigenvalues[d];
        lambdas[d] = n_lambda / static_cast<double>(n);
        double rescale = 1.0 / std::sqrt(n_lambda);  // unit vector -> a.a = 1/(N lambda)
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            data[i * num_components + d] *= rescale;
            double mag = std::abs(data[i * num_components + d]);
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (data[arg * num_components + d] < 0.0)
            for (std::size_t i = 0; i < n; ++i) data[i * num_components + d] *= -1.0;
    }
    return EigenBasis{num_components, std::move(lambdas),
                      Mat(n, num_components, std::move(data))};
}

/// Closed-form value matrix: V(j,d) = (a_d[j] - mean_j'(a_d[j'])) / g(k_j),
/// equivalently V = G A - G 1_N A with G = diag(1/g). Softmax attention with
/// these values reproduces the kernel-PCA projection of the queries.
inline Mat build_values(const EigenBasis& basis, const GramBundle& bundle) {
    const std::size_t n = bundle.gram.rows();
    const Mat& a = basis.coefficients;
    if (a.rows() != n)
        throw std::invalid_argument("build_values: basis for " + std::to_string(a.rows()) +
                                    " keys, bundle has " + std::to_string(n));
    std::vector<double> mean(basis.num_components, 0.0);
    for (std::size_t d = 0; d < basis.num_components; ++d) {
        for (std::size_t j = 0; j < n; ++j) mean[d] += a(j, d);
        mean[d] /= static_cast<double>(n);
    }
    return Mat::build(n, basis.num_components, [&](std::size_t j, std::size_t d) {
        return (a(j, d) - mean[d]) / bundle.g[j];
    });
}

/// Kernel-trick projection of a query onto the principal axes:
/// h(d) = sum_j a_d[j] (k_phi(q,k_j) - mean_j' k_phi(q,k_j')) with
/// k_phi(q,y) = k(q,y)/(g(q) g(y)). The query feature is left uncentered.
inline std::vector<double> project(std::span<const double> query, const Mat& keys,
                                   const EigenBasis& basis, const GramBundle& bundle,
                                   const KernelSpec& spec) {
    const std::size_t n = keys.rows();
    double gq = g_scaling(query, keys, spec);
    if (gq <= kDegenerateScaleFloor)
        throw std::domain_error("project: degenerate scaling g(q) = " + std::to_string(gq));
    std::vector<double> kphi(n);
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        kphi[j] = kernel_eval(query, keys.row(j), spec) / (gq * bundle.g[j]);
        mean += kphi[j];
    }
    mean /= static_cast<double>(n);
    std::vector<double> h(basis.num_components, 0.0);
    for (std::size_t d = 0; d < basis.num_components; ++d)
        for (std::size_t j = 0; j < n; ++j)
            h[d] += basis.coefficients(j, d) * (kphi[j] - mean);
    return h;
}

/// ||phi(q)||^2 = exp(q.q * scale) / (sum_j exp(q.k_j * scale))^2, evaluated in
/// the log domain so large logits cannot overflow.
inline double query_feature_norm2(std::span<const double> query, const Mat& keys,
                                  const KernelSpec& spec) {
    if (spec.kind != KernelKind::ScaledExpDot)
        throw std::invalid_argument("query_feature_norm2: ScaledExpDot only");
    std::vector<double> logits(keys.rows());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < keys.rows(); ++j) {
        logits[j] = spec.scale * dot(query, keys.row(j));
        m = std::max(m, logits[j]);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    double log_g = m + std::log(sum);
    return std::exp(spec.scale * dot(query, query) - 2.0 * log_g);
}

/// Mean projection error J_proj = mean_i(||phi(q_i)||^2 - ||h_i||^2).
/// Not clamped: negative per-query terms are the diagnostic signal when H is
/// not an exact projection.
inline double projection_loss(const Mat& queries, const Mat& keys, const Mat& h,
                              const KernelSpec& spec) {
    if (spec.kind != KernelKind::ScaledExpDot)
        throw std::invalid_argument("projection_loss: ScaledExpDot only");
    if (h.rows() != queries.rows())
        throw std::invalid_argument("projection_loss: H has " + std::to_string(h.rows()) +
                                    " rows for " + std::to_string(queries.rows()) +
                                    " queries");
    double total = 0.0;
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        double h2 = 0.0;
        for (std::size_t d = 0; d < h.cols(); ++d) h2 += h(i, d) * h(i, d);
        total += query_feature_norm2(queries.row(i), keys, spec) - h2;
    }
    return total / static_cast<double>(queries.rows());
}

/// Per-query terms of J_proj, for localizing failures.
inline std::vector<double> projection_loss_terms(const Mat& queries, const Mat& keys,
                                                 const Mat& h, const KernelSpec& spec) {
    if (spec.kind != KernelKind::ScaledExpDot)
        throw std::invalid_argument("projection_loss_terms: ScaledExpDot only");
    if (h.rows() != queries.rows())
        throw std::invalid_argument("projection_loss_terms: H has " +
                                    std::to_string(h.rows()) + " rows for " +
                                    std::to_string(queries.rows()) + " queries");
    std::vector<double> terms(queries.rows());
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        double h2 = 0.0;
        for (std::size_t d = 0; d < h.cols(); ++d) h2 += h(i, d) * h(i, d);
        terms[i] = query_feature_norm2(queries.row(i), keys, spec) - h2;
    }
    return terms;
}

}  // namespace kpca_attn::kpca
