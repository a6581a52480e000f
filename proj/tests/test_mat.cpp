#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "kpca_attn/csv.hpp"
#include "kpca_attn/decomp.hpp"
#include "kpca_attn/mat.hpp"
#include "kpca_attn/rng.hpp"
#include "test_util.hpp"

using namespace kpca_attn;
using test_util::random_mat;

namespace {

// Independent oracle: naive triple loop, never shared with matmul.
Mat matmul_oracle(const Mat& a, const Mat& b) {
    return Mat::build(a.rows(), b.cols(), [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
        return s;
    });
}

double reconstruction_residual(const Mat& a, const Svd& s) {
    Mat recon = Mat::build(a.rows(), a.cols(), [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < s.sigma.size(); ++k)
            acc += s.u(i, k) * s.sigma[k] * s.vt(k, j);
        return acc;
    });
    return frobenius_norm(recon - a);
}

double orthogonality_defect(const Mat& cols) {
    Mat gram = matmul(transpose(cols), cols);
    return max_abs_diff(gram, Mat::identity(gram.rows()));
}

}  // namespace

TEST_CASE("Mat invariants") {
    REQUIRE_THROWS_AS(Mat(0, 2, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(Mat(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(Mat(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(Mat(1, 1, {std::numeric_limits<double>::infinity()}),
                      std::invalid_argument);
    Mat a = Mat::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    REQUIRE(a(1, 0) == 3.0);
    REQUIRE(a.shape() == "2x2");
}

TEST_CASE("matmul identity and hand example") {
    SplitMix64 rng(11);
    Mat x = random_mat(rng, 3, 5);
    REQUIRE(max_abs_diff(matmul(Mat::identity(3), x), x) == 0.0);

    Mat a = Mat::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    Mat b = Mat::from_rows({{0.0}, {1.0}});
    Mat c = matmul(a, b);
    REQUIRE(c(0, 0) == 2.0);
    REQUIRE(c(1, 0) == 4.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    SplitMix64 rng(12);
    Mat a = random_mat(rng, 5, 4);
    Mat b = random_mat(rng, 4, 3);
    REQUIRE(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    Mat a = Mat::zeros(3, 4);
    Mat b = Mat::zeros(5, 2);
    REQUIRE_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("3x4") &&
                                          Catch::Matchers::ContainsSubstring("5x2"));
}

TEST_CASE("row_softmax basics") {
    Mat z = row_softmax(Mat::zeros(1, 3));
    for (std::size_t j = 0; j < 3; ++j)
        REQUIRE_THAT(z(0, j), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));

    for (double c : {-7.5, 0.0, 3.25, 1000.0}) {
        Mat r = row_softmax(Mat::from_rows({{c, c + std::log(2.0)}}));
        REQUIRE_THAT(r(0, 0), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
        REQUIRE_THAT(r(0, 1), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    }

    Mat big = row_softmax(Mat::from_rows({{1000.0, 0.0}}));
    REQUIRE_THAT(big(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(big(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("row_softmax rows sum to one and shift invariance") {
    SplitMix64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t r = 1 + rng.next_below(6);
        std::size_t c = 1 + rng.next_below(6);
        Mat a = random_mat(rng, r, c, 3.0);
        Mat s = row_softmax(a);
        for (std::size_t i = 0; i < r; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                REQUIRE(s(i, j) >= 0.0);
                sum += s(i, j);
            }
            REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
        double shift = rng.next_uniform(-20.0, 20.0);
        Mat shifted = Mat::build(r, c, [&](std::size_t i, std::size_t j) {
            return a(i, j) + shift;
        });
        REQUIRE(max_abs_diff(row_softmax(shifted), s) <= 1e-12);
    }
}

TEST_CASE("svd diagonal and rank-1 cases") {
    Svd s = svd(Mat::from_rows({{3.0, 0.0}, {0.0, 1.0}}));
    REQUIRE_THAT(s.sigma[0], Catch::Matchers::WithinAbs(3.0, 1e-12));
    REQUIRE_THAT(s.sigma[1], Catch::Matchers::WithinAbs(1.0, 1e-12));

    SplitMix64 rng(14);
    Mat u = random_mat(rng, 5, 1);
    Mat v = random_mat(rng, 4, 1);
    Mat outer = matmul(u, transpose(v));
    double nu = std::sqrt(dot(u.data(), u.data())) * std::sqrt(dot(v.data(), v.data()));
    Svd so = svd(outer);
    REQUIRE_THAT(so.sigma[0], Catch::Matchers::WithinAbs(nu, 1e-9));
    for (std::size_t i = 1; i < so.sigma.size(); ++i)
        REQUIRE(so.sigma[i] <= 1e-9 * nu);
}

TEST_CASE("svd reconstruction on a random 6x4") {
    SplitMix64 rng(15);
    Mat a = random_mat(rng, 6, 4);
    Svd s = svd(a);
    REQUIRE(reconstruction_residual(a, s) <= 1e-9 * std::max(1.0, frobenius_norm(a)));
}

TEST_CASE("svd residual and orthogonality bounds on 1000 seeded matrices") {
    SplitMix64 rng(16);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t r = 1 + rng.next_below(32);
        std::size_t c = 1 + rng.next_below(32);
        Mat a = random_mat(rng, r, c, rng.next_uniform(0.1, 10.0));
        Svd s = svd(a);
        double bound = 1e-9 * std::max(1.0, frobenius_norm(a));
        REQUIRE(reconstruction_residual(a, s) <= bound);
        REQUIRE(orthogonality_defect(s.u) <= 1e-9);
        REQUIRE(orthogonality_defect(transpose(s.vt)) <= 1e-9);
        for (std::size_t i = 0; i + 1 < s.sigma.size(); ++i)
            REQUIRE(s.sigma[i] >= s.sigma[i + 1]);
        REQUIRE(s.sigma.back() >= 0.0);
    }
}

TEST_CASE("sym_eig closed forms") {
    SymEig d = sym_eig(Mat::from_rows({{2.0, 0.0}, {0.0, 5.0}}));
    REQUIRE_THAT(d.eigenvalues[0], Catch::Matchers::WithinAbs(5.0, 1e-12));
    REQUIRE_THAT(d.eigenvalues[1], Catch::Matchers::WithinAbs(2.0, 1e-12));

    double a = 1.7, b = 0.6;
    SymEig e = sym_eig(Mat::from_rows({{a, b}, {b, a}}));
    REQUIRE_THAT(e.eigenvalues[0], Catch::Matchers::WithinAbs(a + b, 1e-12));
    REQUIRE_THAT(e.eigenvalues[1], Catch::Matchers::WithinAbs(a - b, 1e-12));
    double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    // top eigenvector is +-[1,1]/sqrt(2)
    REQUIRE_THAT(std::abs(e.eigenvectors(0, 0)), Catch::Matchers::WithinAbs(inv_sqrt2, 1e-12));
    REQUIRE_THAT(std::abs(e.eigenvectors(1, 0)), Catch::Matchers::WithinAbs(inv_sqrt2, 1e-12));
    REQUIRE_THAT(e.eigenvectors(0, 0) * e.eigenvectors(1, 0),
                 Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("sym_eig residuals on random symmetric 8x8") {
    SplitMix64 rng(17);
    Mat raw = random_mat(rng, 8, 8);
    Mat sym = 0.5 * (raw + transpose(raw));
    SymEig e = sym_eig(sym);
    double bound = 1e-9 * std::max(1.0, frobenius_norm(sym));
    for (std::size_t d = 0; d < 8; ++d) {
        double res = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            double av = 0.0;
            for (std::size_t j = 0; j < 8; ++j) av += sym(i, j) * e.eigenvectors(j, d);
            double diff = av - e.eigenvalues[d] * e.eigenvectors(i, d);
            res += diff * diff;
        }
        REQUIRE(std::sqrt(res) <= bound);
    }
    REQUIRE(orthogonality_defect(e.eigenvectors) <= 1e-9);
}

TEST_CASE("sym_eig rejects asymmetric input reporting the defect") {
    Mat a = Mat::from_rows({{1.0, 2.0}, {0.5, 1.0}});
    REQUIRE_THROWS_WITH(sym_eig(a), Catch::Matchers::ContainsSubstring("1.5"));
}

TEST_CASE("pinv identity, zero and centering projector") {
    REQUIRE(max_abs_diff(pinv(Mat::identity(4)), Mat::identity(4)) <= 1e-12);
    REQUIRE(max_abs_diff(pinv(Mat::zeros(3, 2)), Mat::zeros(2, 3)) == 0.0);

    // I - 1_3 is singular; pinv(I - 1_3) * (I - 1_3) must be the orthogonal
    // projector onto the mean-zero subspace. Oracle: explicit orthonormal
    // basis of that subspace.
    std::size_t n = 3;
    Mat centering = Mat::build(n, n, [&](std::size_t i, std::size_t j) {
        return (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
    });
    Mat product = matmul(pinv(centering), centering);
    double b1[] = {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0), 0.0};
    double b2[] = {1.0 / std::sqrt(6.0), 1.0 / std::sqrt(6.0), -2.0 / std::sqrt(6.0)};
    Mat projector = Mat::build(n, n, [&](std::size_t i, std::size_t j) {
        return b1[i] * b1[j] + b2[i] * b2[j];
    });
    REQUIRE(max_abs_diff(product, projector) <= 1e-10);
}

TEST_CASE("pinv satisfies the Penrose identities") {
    SplitMix64 rng(18);
    for (int trial = 0; trial < 25; ++trial) {
        std::size_t r = 1 + rng.next_below(7);
        std::size_t c = 1 + rng.next_below(7);
        Mat a = random_mat(rng, r, c);
        Mat p = pinv(a);
        REQUIRE(max_abs_diff(matmul(matmul(a, p), a), a) <= 1e-8);
        REQUIRE(max_abs_diff(matmul(matmul(p, a), p), p) <= 1e-8);
        Mat ap = matmul(a, p);
        REQUIRE(max_abs_diff(ap, transpose(ap)) <= 1e-8);
        Mat pa = matmul(p, a);
        REQUIRE(max_abs_diff(pa, transpose(pa)) <= 1e-8);
    }
}

TEST_CASE("pinv is an involution on full-rank matrices") {
    SplitMix64 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        Mat a = random_mat(rng, 5, 5);
        REQUIRE(max_abs_diff(pinv(pinv(a)), a) <= 1e-8);
    }
}

TEST_CASE("norms hand values and ordering") {
    MatNorms z = norms(Mat::zeros(3, 3));
    REQUIRE(z.frobenius == 0.0);
    REQUIRE(z.entrywise_l1 == 0.0);
    REQUIRE_THAT(z.nuclear, Catch::Matchers::WithinAbs(0.0, 1e-15));

    MatNorms d = norms(Mat::from_rows({{3.0, 0.0}, {0.0, 4.0}}));
    REQUIRE_THAT(d.frobenius, Catch::Matchers::WithinAbs(5.0, 1e-12));
    REQUIRE_THAT(d.entrywise_l1, Catch::Matchers::WithinAbs(7.0, 1e-12));
    REQUIRE_THAT(d.nuclear, Catch::Matchers::WithinAbs(7.0, 1e-12));

    SplitMix64 rng(20);
    Mat u = random_mat(rng, 6, 1);
    Mat v = random_mat(rng, 3, 1);
    double expect = std::sqrt(dot(u.data(), u.data())) * std::sqrt(dot(v.data(), v.data()));
    REQUIRE_THAT(norms(matmul(u, transpose(v))).nuclear,
                 Catch::Matchers::WithinAbs(expect, 1e-9));

    for (int trial = 0; trial < 20; ++trial) {
        Mat a = random_mat(rng, 1 + rng.next_below(6), 1 + rng.next_below(6));
        MatNorms nm = norms(a);
        REQUIRE(nm.nuclear >= nm.frobenius - 1e-10);
        REQUIRE(nm.frobenius >= max_abs(a) - 1e-12);
    }
}

TEST_CASE("matrix CSV round-trips doubles exactly") {
    SplitMix64 rng(21);
    Mat a = random_mat(rng, 4, 3, 1e3);
    std::ostringstream out;
    write_matrix_csv(out, a);
    std::istringstream in(out.str());
    Mat back = read_matrix_csv(in, "<mem>");
    REQUIRE(back.rows() == a.rows());
    REQUIRE(back.cols() == a.cols());
    REQUIRE(max_abs_diff(back, a) == 0.0);
}

TEST_CASE("matrix CSV errors name the path and line") {
    {
        std::istringstream in("2,2\n1,2\n3,oops\n");
        REQUIRE_THROWS_WITH(read_matrix_csv(in, "bad.csv"),
                            Catch::Matchers::ContainsSubstring("bad.csv:3"));
    }
    {
        std::istringstream in("nonsense\n");
        REQUIRE_THROWS_WITH(read_matrix_csv(in, "h.csv"),
                            Catch::Matchers::ContainsSubstring("h.csv:1"));
    }
    {
        std::istringstream in("2,2\n1,2\n");
        REQUIRE_THROWS_WITH(read_matrix_csv(in, "short.csv"),
                            Catch::Matchers::ContainsSubstring("short.csv:3"));
    }
    {
        std::istringstream in("1,2\n1,nan\n");
        REQUIRE_THROWS_WITH(read_matrix_csv(in, "nf.csv"),
                            Catch::Matchers::ContainsSubstring("nf.csv:2"));
    }
}
