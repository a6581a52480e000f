#pragma once

#include <Eigen/Dense>

#include "kpca_attn/mat.hpp"

namespace kpca_attn {

namespace detail {

inline Eigen::MatrixXd to_eigen(const Mat& a) {
    Eigen::MatrixXd m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
    return m;
}

inline Mat from_eigen(const Eigen::MatrixXd& m) {
    return Mat::build(m.rows(), m.cols(),
                      [&](std::size_t i, std::size_t j) { return m(i, j); });
}

}  // namespace detail

/// Thin SVD: u is rows x k, vt is k x cols with k = min(rows, cols),
/// sigma descending and nonnegative.
struct Svd {
    Mat u;
    std::vector<double> sigma;
    Mat vt;
};

inline Svd svd(const Mat& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> solver(detail::to_eigen(a),
                                             Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("svd: solver did not converge on " + a.shape());
    Eigen::VectorXd s = solver.singularValues();
    return Svd{detail::from_eigen(solver.matrixU()),
               std::vector<double>(s.data(), s.data() + s.size()),
               detail::from_eigen(solver.matrixV().transpose())};
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending,
/// eigenvectors as orthonormal columns.
struct SymEig {
    std::vector<double> eigenvalues;
    Mat eigenvectors;
};

inline SymEig sym_eig(const Mat& a, double sym_tol = 1e-10) {
    if (a.rows() != a.cols())
        throw std::invalid_argument("sym_eig: matrix must be square, got " + a.shape());
    double asym = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            asym = std::max(asym, std::abs(a(i, j) - a(j, i)));
    if (asym > sym_tol) {
        std::ostringstream msg;
        msg << "sym_eig: matrix not symmetric, max |a_ij - a_ji| = " << asym;
        throw std::invalid_argument(msg.str());
    }
    Eigen::MatrixXd m = detail::to_eigen(a);
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("sym_eig: solver did not converge on " + a.shape());
    const std::size_t n = a.rows();
    // Eigen returns ascending order; flip to descending.
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = solver.eigenvalues()(n - 1 - i);
    Mat vecs = Mat::build(n, n, [&](std::size_t i, std::size_t j) {
        return solver.eigenvectors()(i, n - 1 - j);
    });
    return SymEig{std::move(vals), std::move(vecs)};
}

/// Moore-Penrose pseudoinverse via SVD, discarding sigma_i <= rank_tol * sigma_max.
inline Mat pinv(const Mat& a, double rank_tol = 1e-10) {
    if (rank_tol <= 0.0)
        throw std::invalid_argument("pinv: rank_tol must be positive");
    Svd s = svd(a);
    double smax = s.sigma.empty() ? 0.0 : s.sigma.front();
    std::vector<double> inv(s.sigma.size(), 0.0);
    for (std::size_t i = 0; i < s.sigma.size(); ++i)
        if (s.sigma[i] > rank_tol * smax && s.sigma[i] > 0.0) inv[i] = 1.0 / s.sigma[i];
    // pinv = V * diag(inv) * U^T, shape cols x rows.
    const Mat& u = s.u;
    const Mat& vt = s.vt;
    return Mat::build(a.cols(), a.rows(), [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < inv.size(); ++k) acc += vt(k, i) * inv[k] * u(j, k);
        return acc;
    });
}

struct MatNorms {
    double frobenius;
    double entrywise_l1;
    double nuclear;
};

inline double nuclear_norm(const Mat& a) {
    Svd s = svd(a);
    double t = 0.0;
    for (double v : s.sigma) t += v;
    return t;
}

inline MatNorms norms(const Mat& a) {
    return MatNorms{frobenius_norm(a), entrywise_l1(a), nuclear_norm(a)};
}

}  // namespace kpca_attn
