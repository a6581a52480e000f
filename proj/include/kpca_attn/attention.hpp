#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kpca_attn/kpca.hpp"
#include "kpca_attn/mat.hpp"

namespace kpca_attn::attn {

struct AttentionBatch {
    Mat q;
    Mat k;
    Mat v;
    double scale;

    AttentionBatch(Mat q_, Mat k_, Mat v_, double scale_)
        : q(std::move(q_)), k(std::move(k_)), v(std::move(v_)), scale(scale_) {
        if (q.cols() != k.cols())
            throw std::invalid_argument("AttentionBatch: Q " + q.shape() + " vs K " +
                                        k.shape() + " dimension mismatch");
        if (k.rows() != v.rows())
            throw std::invalid_argument("AttentionBatch: K " + k.shape() + " vs V " +
                                        v.shape() + " row mismatch");
        if (!(scale > 0.0))
            throw std::invalid_argument("AttentionBatch: scale must be positive");
    }
};

inline double default_scale(std::size_t dim) {
    return 1.0 / std::sqrt(static_cast<double>(dim));
}

/// Q = X W_Q^T, K = X W_K^T, V = X W_V^T.
inline AttentionBatch linear_projections(const Mat& x, const Mat& w_q, const Mat& w_k,
                                         const Mat& w_v, double scale) {
    if (w_q.rows() != w_k.rows())
        throw std::invalid_argument("linear_projections: W_Q " + w_q.shape() + " vs W_K " +
                                    w_k.shape() + " row mismatch");
    if (w_q.cols() != x.cols() || w_k.cols() != x.cols() || w_v.cols() != x.cols())
        throw std::invalid_argument("linear_projections: weight columns must equal X columns (" +
                                    std::to_string(x.cols()) + "); got W_Q " + w_q.shape() +
                                    ", W_K " + w_k.shape() + ", W_V " + w_v.shape());
    return AttentionBatch(matmul(x, transpose(w_q)), matmul(x, transpose(w_k)),
                          matmul(x, transpose(w_v)), scale);
}

struct AttentionResult {
    Mat h;  // N_q x D_v
    Mat a;  // N_q x N, rows on the simplex
};

/// H = softmax(scale * Q K^T) V.
inline AttentionResult softmax_attention(const AttentionBatch& batch) {
    Mat a = row_softmax(batch.scale * matmul(batch.q, transpose(batch.k)));
    Mat h = matmul(a, batch.v);
    return AttentionResult{std::move(h), std::move(a)};
}

/// Softmax attention with Q := K.
inline AttentionResult symmetric_attention(const Mat& k, const Mat& v, double scale) {
    return softmax_attention(AttentionBatch(k, k, v, scale));
}

namespace detail {

inline Mat apply_i_minus_s(const Mat& s, const Mat& v) {
    const std::size_t n = v.rows();
    return Mat::build(n, v.cols(), [&](std::size_t j, std::size_t d) {
        double acc = v(j, d);
        for (std::size_t jp = 0; jp < n; ++jp) acc -= s(j, jp) * v(jp, d);
        return acc;
    });
}

}  // namespace detail

/// Scaled Attention with a caller-supplied mixing matrix S:
/// H = softmax(scale * Q K^T) (I - S) V. Injection point for learned variants.
inline Mat scaled_attention(const Mat& q, const Mat& k, const Mat& v, const Mat& s,
                            double scale) {
    if (s.rows() != k.rows() || s.cols() != k.rows())
        throw std::invalid_argument("scaled_attention: S " + s.shape() + " must be " +
                                    std::to_string(k.rows()) + "x" + std::to_string(k.rows()));
    AttentionBatch batch(q, k, detail::apply_i_minus_s(s, v), scale);
    return softmax_attention(batch).h;
}

/// Scaled Attention with the closed-form S: S(j,j') = (1/N) g(k_j')/g(k_j),
/// g taken over the keys with the exp kernel at the attention scale.
inline Mat scaled_attention(const Mat& q, const Mat& k, const Mat& v, double scale) {
    const std::size_t n = k.rows();
    kpca::KernelSpec spec = kpca::KernelSpec::scaled_exp_dot(scale);
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j) g[j] = kpca::g_scaling(k.row(j), k, spec);
    Mat s = Mat::build(n, n, [&](std::size_t j, std::size_t jp) {
        return g[jp] / (g[j] * static_cast<double>(n));
    });
    return scaled_attention(q, k, v, s, scale);
}

/// Same contract as scaled_attention, with S built from attention-score
/// ratios instead of g: S = (1/N) A_sym ./ A_sym^T.
inline Mat scaled_attention_ratio_form(const Mat& q, const Mat& k, const Mat& v,
                                       double scale) {
    const std::size_t n = k.rows();
    Mat a_sym = row_softmax(scale * matmul(k, transpose(k)));
    Mat s = Mat::build(n, n, [&](std::size_t j, std::size_t jp) {
        return a_sym(j, jp) / (a_sym(jp, j) * static_cast<double>(n));
    });
    return scaled_attention(q, k, v, s, scale);
}

/// Attention computed end to end from the kernel-PCA pipeline: Gram bundle,
/// coefficient eigenproblem, value construction, then plain softmax attention.
/// Numerically identical to kpca::project applied per query.
inline Mat kpca_exact_attention(const Mat& queries, const Mat& keys,
                                const kpca::KernelSpec& spec, std::size_t num_components) {
    if (spec.kind != kpca::KernelKind::ScaledExpDot)
        throw std::invalid_argument("kpca_exact_attention: ScaledExpDot only");
    kpca::GramBundle bundle = kpca::gram(keys, spec);
    kpca::EigenBasis basis = kpca::solve_coefficients(bundle, num_components);
    Mat values = kpca::build_values(basis, bundle);
    return softmax_attention(AttentionBatch(queries, keys, values, spec.scale)).h;
}

struct AttentionGrads {
    Mat dq;
    Mat dk;
    Mat dv;
};

/// Analytic gradients of <upstream, H> with respect to Q, K, V.
inline AttentionGrads softmax_attention_vjp(const AttentionBatch& batch, const Mat& upstream) {
    if (upstream.rows() != batch.q.rows() || upstream.cols() != batch.v.cols())
        throw std::invalid_argument("softmax_attention_vjp: upstream " + upstream.shape() +
                                    " must be " + std::to_string(batch.q.rows()) + "x" +
                                    std::to_string(batch.v.cols()));
    Mat a = row_softmax(batch.scale * matmul(batch.q, transpose(batch.k)));
    Mat dv = matmul(transpose(a), upstream);
    Mat g = matmul(upstream, transpose(batch.v));  // N_q x N
    // softmax backward: dZ = A .* (G - rowdot(G, A)) with Z = scale * Q K^T
    Mat dz = Mat::build(a.rows(), a.cols(), [&](std::size_t i, std::size_t j) {
        double rowdot = 0.0;
        for (std::size_t jp = 0; jp < a.cols(); ++jp) rowdot += g(i, jp) * a(i, jp);
        return a(i, j) * (g(i, j) - rowdot);
    });
    Mat dq = batch.scale * matmul(dz, batch.k);
    Mat dk = batch.scale * matmul(transpose(dz), batch.q);
    return AttentionGrads{std::move(dq), std::move(dk), std::move(dv)};
}

/// Multi-head attention as a thin loop over independent single-head calls,
/// head outputs concatenated along columns.
inline Mat multi_head_attention(const std::vector<AttentionBatch>& heads) {
    if (heads.empty())
        throw std::invalid_argument("multi_head_attention: no heads");
    std::vector<Mat> outs;
    outs.reserve(heads.size());
    std::size_t total_cols = 0;
    for (const auto& head : heads) {
        if (head.q.rows() != heads.front().q.rows())
            throw std::invalid_argument("multi_head_attention: heads disagree on query count");
        outs.push_back(softmax_attention(head).h);
        total_cols += outs.back().cols();
    }
    return Mat::build(heads.front().q.rows(), total_cols, [&](std::size_t i, std::size_t j) {
        for (const auto& out : outs) {
            if (j < out.cols()) return out(i, j);
            j -= out.cols();
        }
        return 0.0;  // unreachable
    });
}

}  // namespace kpca_attn::attn
