#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "kpca_attn/mat.hpp"

namespace kpca_attn::kpca {

enum class KernelKind {
    ScaledExpDot,  // exp(scale * x.y), the attention kernel with scale = 1/sqrt(D)
    LinearDot,     // x.y, a test kernel whose feature map is the identity
};

struct KernelSpec {
    KernelKind kind = KernelKind::ScaledExpDot;
    double scale = 1.0;

    static KernelSpec scaled_exp_dot(double scale) {
        if (!(scale > 0.0))
            throw std::invalid_argument("KernelSpec: scale must be positive");
        return KernelSpec{KernelKind::ScaledExpDot, scale};
    }

    static KernelSpec scaled_exp_dot_for_dim(std::size_t dim) {
        return scaled_exp_dot(1.0 / std::sqrt(static_cast<double>(dim)));
    }

    // LinearDot ignores scale (pinned to 1).
    static KernelSpec linear_dot() { return KernelSpec{KernelKind::LinearDot, 1.0}; }
};

inline double kernel_eval(std::span<const double> x, std::span<const double> y,
                          const KernelSpec& spec) {
    if (x.size() != y.size())
        throw std::invalid_argument("kernel_eval: length mismatch: " +
                                    std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()));
    double d = dot(x, y);
    if (spec.kind == KernelKind::LinearDot) return d;
    double v = std::exp(spec.scale * d);
    if (!std::isfinite(v))
        throw std::domain_error("kernel_eval: exp overflow at logit " +
                                std::to_string(spec.scale * d));
    return v;
}

/// g(x) = sum_j k(x, k_j) over the key rows. The softmax normalizer for the
/// exp kernel; may hit zero for LinearDot, which downstream ops reject.
inline double g_scaling(std::span<const double> x, const Mat& keys, const KernelSpec& spec) {
    if (x.size() != keys.cols())
        throw std::invalid_argument("g_scaling: point length " + std::to_string(x.size()) +
                                    " vs key dimension " + std::to_string(keys.cols()));
    double s = 0.0;
    for (std::size_t j = 0; j < keys.rows(); ++j) s += kernel_eval(x, keys.row(j), spec);
    return s;
}

}  // namespace kpca_attn::kpca
