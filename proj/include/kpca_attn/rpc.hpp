#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kpca_attn/attention.hpp"
#include "kpca_attn/decomp.hpp"
#include "kpca_attn/mat.hpp"

namespace kpca_attn::rpc {

/// Elementwise soft threshold sgn(x) max(|x| - tau, 0), the prox of the l1 norm.
inline Mat shrink(const Mat& x, double tau) {
    if (tau < 0.0)
        throw std::invalid_argument("shrink: tau must be nonnegative");
    return Mat::build(x.rows(), x.cols(), [&](std::size_t i, std::size_t j) {
        double v = x(i, j);
        double m = std::abs(v) - tau;
        return m > 0.0 ? (v > 0.0 ? m : -m) : 0.0;
    });
}

/// Singular value thresholding: soft threshold on the spectrum, the prox of
/// the nuclear norm.
inline Mat svt(const Mat& x, double tau) {
    if (tau < 0.0)
        throw std::invalid_argument("svt: tau must be nonnegative");
    Svd s = svd(x);
    const std::size_t k = s.sigma.size();
    return Mat::build(x.rows(), x.cols(), [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
            double sv = s.sigma[r] - tau;
            if (sv <= 0.0) break;  // sigma descending
            acc += s.u(i, r) * sv * s.vt(r, j);
        }
        return acc;
    });
}

/// mu = N D / (4 ||K||_1) with the entrywise l1 norm.
inline double default_mu(const Mat& k) {
    double l1 = entrywise_l1(k);
    if (l1 <= 0.0)
        throw std::domain_error("default_mu: zero matrix has no scale");
    return static_cast<double>(k.rows() * k.cols()) / (4.0 * l1);
}

inline double default_pcp_lambda(std::size_t rows, std::size_t cols) {
    return 1.0 / std::sqrt(static_cast<double>(std::max(rows, cols)));
}

inline constexpr double kDefaultPcpTol = 1e-7;
inline constexpr std::size_t kDefaultPcpMaxIter = 1000;

/// Two circulating readings of the L update. The classical ADMM derivation
/// thresholds the singular values at 1/mu with +Y/mu inside the prox; the
/// other reading thresholds at mu with -Y/mu. Only the classical form admits
/// the exact-recovery fixed point, so it is the default; the mu-threshold
/// form stays available for side-by-side runs.
enum class LStepRule { Classical, MuThreshold };

struct PcpState {
    Mat l;
    Mat s;
    Mat y;
    double mu;
    double lambda;
    std::size_t iterations;
    double rel_residual;
};

inline PcpState admm_pcp(const Mat& m, double lambda, double mu, double tol = kDefaultPcpTol,
                         std::size_t max_iter = kDefaultPcpMaxIter,
                         LStepRule rule = LStepRule::Classical) {
    if (!(lambda > 0.0) || !(mu > 0.0) || !(tol > 0.0))
        throw std::invalid_argument("admm_pcp: lambda, mu, tol must be positive");
    if (max_iter < 1)
        throw std::invalid_argument("admm_pcp: max_iter must be at least 1");
    const double denom = std::max(1.0, frobenius_norm(m));
    Mat l = Mat::zeros(m.rows(), m.cols());
    Mat s = l;
    Mat y = l;
    double rel = 0.0;
    std::size_t iter = 0;
    while (iter < max_iter) {
        ++iter;
        s = shrink(m - l + (1.0 / mu) * y, lambda / mu);
        if (rule == LStepRule::Classical)
            l = svt(m - s + (1.0 / mu) * y, 1.0 / mu);
        else
            l = svt(m - s - (1.0 / mu) * y, mu);
        Mat residual = m - l - s;
        y = y + mu * residual;
        rel = frobenius_norm(residual) / denom;
        if (rel <= tol) break;
    }
    return PcpState{std::move(l), std::move(s), std::move(y), mu, lambda, iter, rel};
}

enum class PapVariant { Symmetric, Asymmetric };

inline constexpr double kDefaultPapLambda = 4.0;

/// mu empty means Auto: resolve via default_mu(K) at call time.
struct PapConfig {
    std::size_t n_iter = 1;
    double lambda = kDefaultPapLambda;
    std::optional<double> mu;
    PapVariant variant = PapVariant::Symmetric;
    double scale = 1.0;

    void validate() const {
        if (n_iter < 1)
            throw std::invalid_argument("PapConfig: n_iter must be at least 1");
        if (!(lambda > 0.0))
            throw std::invalid_argument("PapConfig: lambda must be positive");
        if (mu && !(*mu > 0.0))
            throw std::invalid_argument("PapConfig: mu must be positive");
        if (!(scale > 0.0))
            throw std::invalid_argument("PapConfig: scale must be positive");
    }
};

struct PapTraceEntry {
    std::size_t iteration;
    double rel_residual;  // ||K - L - S||_F / max(1, ||K||_F)
    double s_l1;
    double l_nuclear;
};

struct PapResult {
    Mat l;
    std::vector<PapTraceEntry> trace;
};

/// Principal Attention Pursuit: ADMM on K = L + S with the singular value
/// thresholding step replaced by a softmax attention step over the modified
/// matrix M_k = K - S_{k+1} - Y_k/mu (queries, keys and values all M_k; the
/// asymmetric variant keeps the caller's queries). Runs exactly n_iter
/// iterations, no early stop.
inline PapResult pap(const Mat& k, const PapConfig& config,
                     const std::optional<Mat>& queries = std::nullopt) {
    config.validate();
    if (config.variant == PapVariant::Asymmetric) {
        if (!queries)
            throw std::invalid_argument("pap: asymmetric variant requires queries");
        // The dual update forces L to share K's shape, so Q must match K.
        if (queries->rows() != k.rows() || queries->cols() != k.cols())
            throw std::invalid_argument("pap: queries " + queries->shape() +
                                        " must match keys " + k.shape());
    } else if (queries) {
        throw std::invalid_argument("pap: symmetric variant takes no queries");
    }

    if (!config.mu && entrywise_l1(k) <= 0.0) {
        // Auto mu has no scale on a zero matrix; the zero decomposition is exact.
        return PapResult{Mat::zeros(k.rows(), k.cols()), {}};
    }
    const double mu = config.mu ? *config.mu : default_mu(k);
    const double denom = std::max(1.0, frobenius_norm(k));

    Mat l = Mat::zeros(k.rows(), k.cols());
    Mat s = l;
    Mat y = l;
    std::vector<PapTraceEntry> trace;
    trace.reserve(config.n_iter);
    for (std::size_t iter = 1; iter <= config.n_iter; ++iter) {
        s = shrink(k - l + (1.0 / mu) * y, config.lambda / mu);
        Mat modified = k - s - (1.0 / mu) * y;
        const Mat& q = config.variant == PapVariant::Symmetric ? modified : *queries;
        l = attn::softmax_attention(attn::AttentionBatch(q, modified, modified, config.scale)).h;
        Mat residual = k - l - s;
        y = y + mu * residual;
        trace.push_back(PapTraceEntry{iter, frobenius_norm(residual) / denom,
                                      entrywise_l1(s), nuclear_norm(l)});
    }
    return PapResult{std::move(l), std::move(trace)};
}

/// RPC-Attention: the output is the low-rank iterate L of PAP. Lives in
/// key-space dimension D; callers needing D_v apply their own projection.
inline Mat rpc_attention(const Mat& k, const PapConfig& config,
                         const std::optional<Mat>& queries = std::nullopt) {
    return pap(k, config, queries).l;
}

}  // namespace kpca_attn::rpc
