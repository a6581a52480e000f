#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kpca_attn/attention.hpp"
#include "kpca_attn/decomp.hpp"
#include "kpca_attn/kpca.hpp"
#include "kpca_attn/mat.hpp"
#include "kpca_attn/rng.hpp"

namespace kpca_attn::verify {

inline constexpr double kDefaultEntryFloor = 1e-6;

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v, double m) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

/// Estimate the eigenvector coefficients back from a value matrix:
/// A_hat = pinv(I - 1_N) G^{-1} V with G^{-1} = diag(g(k_j)). The projector
/// pseudoinverse recovers exactly the mean-zero part of each a_d, which is
/// all build_values ever uses.
inline Mat recover_coefficients(const Mat& v, const kpca::GramBundle& bundle) {
    const std::size_t n = v.rows();
    if (bundle.g.size() != n)
        throw std::invalid_argument("recover_coefficients: V has " + std::to_string(n) +
                                    " rows for " + std::to_string(bundle.g.size()) + " keys");
    Mat scaled = Mat::build(n, v.cols(), [&](std::size_t j, std::size_t d) {
        return bundle.g[j] * v(j, d);
    });
    Mat centering = Mat::build(n, n, [&](std::size_t i, std::size_t j) {
        double one_n = 1.0 / static_cast<double>(n);
        return (i == j ? 1.0 : 0.0) - one_n;
    });
    return matmul(pinv(centering), scaled);
}

struct GammaComponentStats {
    std::size_t d;
    double mean_abs_pairwise_diff;
    double std_abs_pairwise_diff;
    double gamma_median;
    std::size_t usable_entries;
    bool flagged;  // fewer than 2 usable entries: no pairwise statistics
};

struct EigAbsStats {
    double max;
    double min;
    double mean;
    double median;
};

struct GammaStats {
    std::vector<GammaComponentStats> per_component;
    EigAbsStats eig_abs;  // |N lambda_d| over the top components of the bundle
};

/// gamma = (K_centered a_hat_d) ./ (N a_hat_d) entrywise; constant exactly
/// when a_hat_d is an eigenvector. Entries with |a_hat_d[j]| below
/// entry_floor * ||a_hat_d||_inf are excluded from the division.
inline GammaStats gamma_check(const kpca::GramBundle& bundle, const Mat& a_hat,
                              double entry_floor = kDefaultEntryFloor) {
    if (!(entry_floor > 0.0))
        throw std::invalid_argument("gamma_check: entry_floor must be positive");
    const std::size_t n = bundle.centered.rows();
    if (a_hat.rows() != n)
        throw std::invalid_argument("gamma_check: A_hat has " + std::to_string(a_hat.rows()) +
                                    " rows for " + std::to_string(n) + " keys");
    Mat t = matmul(bundle.centered, a_hat);

    GammaStats stats;
    for (std::size_t d = 0; d < a_hat.cols(); ++d) {
        double inf = 0.0;
        for (std::size_t j = 0; j < n; ++j) inf = std::max(inf, std::abs(a_hat(j, d)));
        std::vector<double> gamma;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(a_hat(j, d)) > entry_floor * inf)
                gamma.push_back(t(j, d) / (static_cast<double>(n) * a_hat(j, d)));
        }
        GammaComponentStats c{};
        c.d = d;
        c.usable_entries = gamma.size();
        c.gamma_median = detail::median(gamma);
        if (gamma.size() < 2) {
            c.flagged = true;
        } else {
            std::vector<double> diffs;
            diffs.reserve(gamma.size() * (gamma.size() - 1) / 2);
            for (std::size_t i = 0; i < gamma.size(); ++i)
                for (std::size_t j = i + 1; j < gamma.size(); ++j)
                    diffs.push_back(std::abs(gamma[i] - gamma[j]));
            c.mean_abs_pairwise_diff = detail::mean(diffs);
            c.std_abs_pairwise_diff = detail::stddev(diffs, c.mean_abs_pairwise_diff);
        }
        stats.per_component.push_back(c);
    }

    // Magnitude scale for comparison: |N lambda_d| from the centered Gram itself.
    SymEig eig = sym_eig(bundle.centered);
    std::size_t top = std::min<std::size_t>(a_hat.cols(), eig.eigenvalues.size());
    std::vector<double> mags;
    for (std::size_t d = 0; d < top; ++d) mags.push_back(std::abs(eig.eigenvalues[d]));
    stats.eig_abs.max = mags.empty() ? 0.0 : *std::max_element(mags.begin(), mags.end());
    stats.eig_abs.min = mags.empty() ? 0.0 : *std::min_element(mags.begin(), mags.end());
    stats.eig_abs.mean = detail::mean(mags);
    stats.eig_abs.median = detail::median(mags);
    return stats;
}

struct TraceStep {
    Mat queries;
    Mat keys;
    Mat h;
};

inline std::vector<std::pair<std::size_t, double>> projection_loss_trace(
    const std::vector<TraceStep>& steps, const kpca::KernelSpec& spec) {
    std::vector<std::pair<std::size_t, double>> trace;
    trace.reserve(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i)
        trace.emplace_back(i, kpca::projection_loss(steps[i].queries, steps[i].keys,
                                                    steps[i].h, spec));
    return trace;
}

/// Worst relative error between the analytic VJP and central finite
/// differences of <upstream, H> over every entry of Q, K, V.
inline double gradient_check_on(const attn::AttentionBatch& batch, const Mat& upstream,
                                double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3)
        throw std::invalid_argument("gradient_check: epsilon must lie in [1e-7, 1e-3]");
    attn::AttentionGrads grads = attn::softmax_attention_vjp(batch, upstream);

    auto objective = [&](const Mat& q, const Mat& k, const Mat& v) {
        Mat h = attn::softmax_attention(attn::AttentionBatch(q, k, v, batch.scale)).h;
        double s = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) s += h.data()[i] * upstream.data()[i];
        return s;
    };
    auto perturbed = [](const Mat& m, std::size_t flat, double delta) {
        std::vector<double> e(m.data().begin(), m.data().end());
        e[flat] += delta;
        return Mat(m.rows(), m.cols(), std::move(e));
    };

    double worst = 0.0;
    auto check = [&](const Mat& param, const Mat& analytic, int which) {
        for (std::size_t f = 0; f < param.size(); ++f) {
            Mat plus = perturbed(param, f, epsilon);
            Mat minus = perturbed(param, f, -epsilon);
            double jp, jm;
            switch (which) {
                case 0:
                    jp = objective(plus, batch.k, batch.v);
                    jm = objective(minus, batch.k, batch.v);
                    break;
                case 1:
                    jp = objective(batch.q, plus, batch.v);
                    jm = objective(batch.q, minus, batch.v);
                    break;
                default:
                    jp = objective(batch.q, batch.k, plus);
                    jm = objective(batch.q, batch.k, minus);
                    break;
            }
            double numeric = (jp - jm) / (2.0 * epsilon);
            double a = analytic.data()[f];
            double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, err);
        }
    };
    check(batch.q, grads.dq, 0);
    check(batch.k, grads.dk, 1);
    check(batch.v, grads.dv, 2);
    return worst;
}

inline attn::AttentionBatch random_attention_batch(SplitMix64& rng, std::size_t max_rows = 8,
                                                   std::size_t max_dim = 5) {
    std::size_t nq = 1 + rng.next_below(max_rows);
    std::size_t n = 1 + rng.next_below(max_rows);
    std::size_t d = 1 + rng.next_below(max_dim);
    std::size_t dv = 1 + rng.next_below(max_dim);
    auto gauss = [&](std::size_t r, std::size_t c) {
        return Mat::build(r, c, [&](std::size_t, std::size_t) { return rng.next_gaussian(); });
    };
    return attn::AttentionBatch(gauss(nq, d), gauss(n, d), gauss(n, dv),
                                attn::default_scale(d));
}

inline double gradient_check(std::uint64_t seed, double epsilon) {
    SplitMix64 rng(seed);
    attn::AttentionBatch batch = random_attention_batch(rng);
    Mat upstream = Mat::build(batch.q.rows(), batch.v.cols(),
                              [&](std::size_t, std::size_t) { return rng.next_gaussian(); });
    return gradient_check_on(batch, upstream, epsilon);
}

struct DiagnosticsReport {
    std::vector<std::pair<std::size_t, double>> j_proj_trace;
    GammaStats gamma;
    std::vector<double> eigen_residuals;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const GammaStats& stats) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& c : stats.per_component) {
        per.push_back({{"d", c.d},
                       {"mean_diff", c.mean_abs_pairwise_diff},
                       {"std_diff", c.std_abs_pairwise_diff},
                       {"median_gamma", c.gamma_median},
                       {"usable_entries", c.usable_entries},
                       {"flagged", c.flagged}});
    }
    return {{"per_component", per},
            {"eig_abs",
             {{"max", stats.eig_abs.max},
              {"min", stats.eig_abs.min},
              {"mean", stats.eig_abs.mean},
              {"median", stats.eig_abs.median}}}};
}

inline nlohmann::json to_json(const DiagnosticsReport& report) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& [step, value] : report.j_proj_trace)
        trace.push_back({step, value});
    return {{"j_proj_trace", trace},
            {"gamma", to_json(report.gamma)},
            {"eigen_residuals", report.eigen_residuals},
            {"seed", report.seed}};
}

}  // namespace kpca_attn::verify
