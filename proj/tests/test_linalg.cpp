#include <doctest.h>

#include <cmath>
#include <numeric>

#include "clora/linalg.hpp"
#include "oracles.hpp"

using namespace clora;

TEST_CASE("matmul small cases") {
    Rng rng(1);
    const Matrix m = oracle::random(3, 4, rng);
    CHECK(matmul(Matrix::identity(3), m) == m);
    CHECK(matmul(Matrix(2, 3), m) == Matrix(2, 4));

    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{5, 6}, {7, 8}};
    CHECK(matmul(a, b) == Matrix{{19, 22}, {43, 50}});
    CHECK(matmul(a, b) == oracle::matmul(a, b));
}

TEST_CASE("matmul agrees with the dot-product reference") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.uniform_index(6), n = 1 + rng.uniform_index(6),
                          p = 1 + rng.uniform_index(6);
        const Matrix a = oracle::random(m, n, rng), b = oracle::random(n, p, rng);
        CHECK(oracle::max_abs_diff(matmul(a, b), oracle::matmul(a, b)) < 1e-13);
    }
}

TEST_CASE("matmul shape error names both shapes") {
    try {
        (void)matmul(Matrix(2, 3), Matrix(4, 5));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x5") != std::string::npos);
    }
}

TEST_CASE("transpose") {
    CHECK(transpose(Matrix{{1, 2, 3}}) == Matrix{{1}, {2}, {3}});
    CHECK(transpose(Matrix::identity(4)) == Matrix::identity(4));
    Rng rng(3);
    const Matrix m = oracle::random(5, 7, rng);
    CHECK(transpose(transpose(m)) == m);
    CHECK(transpose(m) == oracle::transpose(m));
}

TEST_CASE("frobenius norm") {
    CHECK(frobenius_norm_sq(Matrix(3, 3)) == 0.0);
    CHECK(frobenius_norm_sq(Matrix::identity(3)) == 3.0);
    CHECK(frobenius_norm_sq(Matrix{{1, 2}, {3, 4}}) == 1.0 + 4.0 + 9.0 + 16.0);
    CHECK(frobenius_norm(Matrix{{3, 4}}) == doctest::Approx(5.0));
}

TEST_CASE("constructor and element-wise errors") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), ShapeError);
    Matrix a(2, 2);
    CHECK_THROWS_AS(a += Matrix(2, 3), ShapeError);
    CHECK_THROWS_AS(hadamard(a, Matrix(3, 2)), ShapeError);
    CHECK_THROWS_AS(trace(Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(cholesky(Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(min_symmetric_eigenvalue(Matrix(2, 3)), ShapeError);
}

TEST_CASE("gaussian_matrix") {
    Rng rng(4);
    CHECK(gaussian_matrix(3, 4, 0.0, 0.0, rng) == Matrix(3, 4));
    CHECK(gaussian_matrix(2, 2, 1.5, 0.0, rng) == Matrix(2, 2, 1.5));
    CHECK_THROWS_AS(gaussian_matrix(2, 2, 0.0, -1.0, rng), std::invalid_argument);

    Rng r1(99), r2(99);
    CHECK(gaussian_matrix(6, 6, 0.0, 1.0, r1) == gaussian_matrix(6, 6, 0.0, 1.0, r2));

    // Law of large numbers: standard error of the mean is 1/sqrt(1e5) ~ 0.003.
    const Matrix big = gaussian_matrix(1, 100000, 0.0, 1.0, rng);
    const double mean = std::accumulate(big.data().begin(), big.data().end(), 0.0) / 1e5;
    double var = 0.0;
    for (double v : big.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / (1e5 - 1));
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sd - 1.0) < 0.02);
}

namespace {

// det(M - t I) for a 4x4 symmetric matrix by cofactor expansion.
double charpoly4(const Matrix& m, double t) {
    double a[4][4];
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) a[i][j] = m(i, j) - (i == j ? t : 0.0);
    auto det3 = [&](int skip_row, int skip_col) {
        double b[3][3];
        for (int i = 0, ii = 0; i < 4; ++i) {
            if (i == skip_row) continue;
            for (int j = 0, jj = 0; j < 4; ++j) {
                if (j == skip_col) continue;
                b[ii][jj++] = a[i][j];
            }
            ++ii;
        }
        return b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
               b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
               b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    };
    double det = 0.0;
    for (int j = 0; j < 4; ++j) det += (j % 2 ? -1.0 : 1.0) * a[0][j] * det3(0, j);
    return det;
}

// Smallest root of the characteristic polynomial: scan up from a Gershgorin
// lower bound to the first sign change, then bisect.
double smallest_root(const Matrix& m) {
    double lo = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double radius = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
            if (j != i) radius += std::abs(m(i, j));
        lo = std::min(lo, m(i, i) - radius);
    }
    lo -= 1.0;
    const double step = 1e-3;
    double a = lo, fa = charpoly4(m, a);
    for (;;) {
        const double b = a + step, fb = charpoly4(m, b);
        if ((fa > 0) != (fb > 0) || fb == 0.0) {
            double x = a, y = b;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (x + y);
                if ((charpoly4(m, mid) > 0) == (charpoly4(m, x) > 0)) x = mid; else y = mid;
            }
            return 0.5 * (x + y);
        }
        a = b;
        fa = fb;
    }
}

}  // namespace

TEST_CASE("min_symmetric_eigenvalue") {
    CHECK(min_symmetric_eigenvalue(Matrix::identity(3)) == doctest::Approx(1.0));
    const std::vector<double> diag{2.0, -1.0};
    CHECK(min_symmetric_eigenvalue(Matrix::diagonal(diag)) == doctest::Approx(-1.0));

    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix s = symmetric_part(oracle::random(4, 4, rng));
        CHECK(std::abs(min_symmetric_eigenvalue(s) - smallest_root(s)) < 1e-8);
    }
    // A non-symmetric input is judged by its symmetric part.
    const Matrix skewed{{1, 10}, {-10, 1}};
    CHECK(min_symmetric_eigenvalue(skewed) == doctest::Approx(1.0));
}

TEST_CASE("symmetric_eigenvalues sum to the trace") {
    Rng rng(6);
    const Matrix s = symmetric_part(oracle::random(6, 6, rng));
    const auto ev = symmetric_eigenvalues(s);
    CHECK(std::is_sorted(ev.begin(), ev.end()));
    CHECK(std::accumulate(ev.begin(), ev.end(), 0.0) == doctest::Approx(trace(s)).epsilon(1e-10));
}

TEST_CASE("cholesky") {
    CHECK(cholesky(Matrix::identity(4)) == Matrix::identity(4));
    const std::vector<double> d{4.0, 9.0};
    const std::vector<double> r{2.0, 3.0};
    CHECK(cholesky(Matrix::diagonal(d)) == Matrix::diagonal(r));

    Rng rng(7);
    const Matrix a = oracle::random(5, 5, rng);
    const Matrix spd = oracle::matmul(oracle::transpose(a), a);
    const Matrix L = cholesky(spd);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j) CHECK(L(i, j) == 0.0);
    const Matrix back = oracle::matmul(L, oracle::transpose(L));
    CHECK(frobenius_norm(back - spd) / frobenius_norm(spd) <= 1e-9);

    // Rank-deficient PSD input is accepted.
    const Matrix v{{1.0}, {2.0}};
    const Matrix L2 = cholesky(matmul(v, transpose(v)));
    CHECK(oracle::max_abs_diff(matmul(L2, transpose(L2)), Matrix{{1, 2}, {2, 4}}) < 1e-12);

    CHECK_THROWS_AS(cholesky(Matrix{{1, 0}, {0, -1}}), NumericalError);
}

TEST_CASE("property: matmul is associative to round-off") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.uniform_index(7), n = 1 + rng.uniform_index(7),
                          p = 1 + rng.uniform_index(7), q = 1 + rng.uniform_index(7);
        const Matrix a = oracle::random(m, n, rng), b = oracle::random(n, p, rng),
                     c = oracle::random(p, q, rng);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        CHECK(frobenius_norm(left - right) <= 1e-10 * std::max(frobenius_norm(left), 1e-300));
    }
}

TEST_CASE("property: orthogonal transforms preserve the Frobenius norm") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(6);
        const Matrix q = orthonormal_columns(oracle::random(n, n, rng));
        const Matrix qtq = matmul(transpose(q), q);
        CHECK(oracle::max_abs_diff(qtq, Matrix::identity(n)) < 1e-12);
        const Matrix m = oracle::random(n, 3, rng);
        const double before = frobenius_norm_sq(m);
        CHECK(std::abs(frobenius_norm_sq(matmul(q, m)) - before) <= 1e-10 * before);
    }
}

TEST_CASE("Rng determinism and state round trip") {
    Rng a(2024), b(2024);
    CHECK(gaussian_matrix(4, 4, 0.0, 1.0, a) == gaussian_matrix(4, 4, 0.0, 1.0, b));

    Rng c(11);
    (void)c.normal();  // leaves a cached Box-Muller value
    const Rng::State s = c.state();
    CHECK(s.has_spare);
    Rng d = Rng::from_state(s);
    CHECK(d == c);
    for (int i = 0; i < 10; ++i) CHECK(c.normal() == d.normal());
    CHECK(c.uniform_index(17) == d.uniform_index(17));

    Rng::State broken = s;
    broken.engine.resize(3);
    CHECK_THROWS_AS(Rng::from_state(broken), std::invalid_argument);
    CHECK_THROWS_AS(c.uniform_index(0), std::invalid_argument);
}

TEST_CASE("uniform draws stay in range") {
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(rng.uniform_index(3) < 3);
    }
}

TEST_CASE("shuffle_indices is a deterministic permutation") {
    std::vector<std::size_t> a(50), b(50);
    std::iota(a.begin(), a.end(), 0);
    b = a;
    Rng r1(13), r2(13);
    shuffle_indices(a, r1);
    shuffle_indices(b, r2);
    CHECK(a == b);
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}
