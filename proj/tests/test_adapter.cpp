#include <doctest.h>

#include <cmath>

#include "clora/adapter.hpp"
#include "oracles.hpp"

using namespace clora;

namespace {

CLoraAdapter random_adapter(std::size_t d, std::size_t k, std::size_t r, Rng& rng) {
    CLoraAdapter ad;
    ad.A = oracle::random(d, r, rng);
    ad.B = oracle::random(r, k, rng);
    ad.R_old = oracle::random(r, r, rng);
    ad.R_delta = oracle::random(r, r, rng);
    ad.A_snapshot = oracle::random(d, r, rng);
    return ad;
}

double weighted_sum(const Matrix& G, const Matrix& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < G.size(); ++i) s += G.data()[i] * y.data()[i];
    return s;
}

}  // namespace

TEST_CASE("routing_from_moe") {
    const std::vector<double> one{2.5};
    CHECK(routing_from_moe(one, 3) == 2.5 * Matrix::identity(3));
    const std::vector<double> two{0.3, 0.7};
    const std::vector<double> expect{0.3, 0.3, 0.7, 0.7};
    CHECK(routing_from_moe(two, 4) == Matrix::diagonal(expect));
    const std::vector<double> gate{1, 0, 0, 0};
    CHECK(routing_from_moe(gate, 4) == Matrix::diagonal(gate));
    CHECK_THROWS_AS(routing_from_moe(two, 3), std::invalid_argument);
    CHECK_THROWS_AS(routing_from_moe(std::vector<double>{}, 3), std::invalid_argument);
}

TEST_CASE("MoE equivalence: A R B equals the weighted sum of expert products") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 1 + rng.uniform_index(4);
        const std::size_t block = 1 + rng.uniform_index(3);
        const std::size_t r = h * block;
        const std::size_t d = r + rng.uniform_index(4), k = r + rng.uniform_index(4);
        const Matrix A = oracle::random(d, r, rng), B = oracle::random(r, k, rng);
        std::vector<double> w(h);
        for (double& v : w) v = rng.normal();
        const Matrix routed = matmul(matmul(A, routing_from_moe(w, r)), B);
        Matrix experts(d, k);
        for (std::size_t e = 0; e < h; ++e)
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < k; ++q) {
                    double s = 0.0;
                    for (std::size_t c = e * block; c < (e + 1) * block; ++c) s += A(p, c) * B(c, q);
                    experts(p, q) += w[e] * s;
                }
        CHECK(oracle::max_abs_diff(routed, experts) <= 1e-12 * std::max(1.0, oracle::max_abs(experts)));
    }
}

TEST_CASE("effective_weight examples") {
    Rng rng(22);
    CLoraAdapter ad = random_adapter(4, 5, 2, rng);
    ad.R_old = Matrix(2, 2);
    ad.R_delta = Matrix(2, 2);
    CHECK(effective_weight(ad) == Matrix(4, 5));

    CLoraAdapter eye{Matrix::identity(3), Matrix::identity(3), Matrix(3, 3), Matrix::identity(3), {}};
    CHECK(effective_weight(eye) == Matrix::identity(3));

    CLoraAdapter ex{Matrix{{1, 0}, {0, 1}, {1, 1}}, Matrix::identity(2), Matrix{{1, 2}, {3, 4}},
                    Matrix(2, 2), {}};
    const Matrix expect{{1, 2}, {3, 4}, {4, 6}};
    CHECK(effective_weight(ex) == expect);
    CHECK(oracle::rank_one_expansion(ex.A, ex.R_old, ex.B) == expect);
}

TEST_CASE("property: effective_weight equals the rank-1 expansion") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t r = 1 + rng.uniform_index(8);
        const std::size_t d = r + rng.uniform_index(4), k = r + rng.uniform_index(4);
        const CLoraAdapter ad = random_adapter(d, k, r, rng);
        const Matrix brute = oracle::rank_one_expansion(ad.A, ad.R_old + ad.R_delta, ad.B);
        CHECK(frobenius_norm(effective_weight(ad) - brute) <= 1e-10 * frobenius_norm(brute));
    }
}

TEST_CASE("forward examples") {
    Rng rng(24);
    CLoraAdapter ad = random_adapter(5, 4, 3, rng);
    CHECK(forward(ad, Matrix(2, 3)) == Matrix(2, 4));

    const Matrix z = oracle::random(3, 3, rng);
    ad.R_old = Matrix(3, 3);
    CHECK(oracle::max_abs_diff(forward(ad, z), oracle::matmul(oracle::matmul(z, ad.R_delta), ad.B)) <
          1e-12);

    CHECK_THROWS_AS(forward(ad, Matrix(2, 4)), ShapeError);
}

TEST_CASE("property: decomposed forward equals the undecomposed product") {
    Rng rng(25);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t r = 1 + rng.uniform_index(4);
        const CLoraAdapter ad = random_adapter(r + 2, r + 1, r, rng);
        const Matrix z = oracle::random(3, r, rng);
        const Matrix split = oracle::matmul(oracle::matmul(z, ad.R_old), ad.B) +
                             oracle::matmul(oracle::matmul(z, ad.R_delta), ad.B);
        CHECK(oracle::max_abs_diff(forward(ad, z), split) <= 1e-12 * std::max(1.0, oracle::max_abs(split)));
    }
}

TEST_CASE("backward matches finite differences of the stop-gradient forward") {
    Rng rng(26);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3, d = 5, k = 4, r = 2;
        CLoraAdapter ad = random_adapter(d, k, r, rng);
        const Matrix x = oracle::random(n, d, rng);
        const Matrix G = oracle::random(n, k, rng);
        // The old path is evaluated with frozen copies of A and B.
        const Matrix A0 = ad.A, B0 = ad.B;
        auto f = [&] {
            const Matrix old_path =
                oracle::matmul(oracle::matmul(oracle::relu(oracle::matmul(x, A0)), ad.R_old), B0);
            const Matrix new_path =
                oracle::matmul(oracle::matmul(oracle::relu(oracle::matmul(x, ad.A)), ad.R_delta), ad.B);
            return weighted_sum(G, old_path + new_path);
        };
        const DownProjection dp = down_project(ad, x);
        const AdapterGrads g = backward(ad, dp.z, x, G, dp.mask);
        CHECK(oracle::grad_rel_error(g.dA, oracle::finite_difference(ad.A, f)) <= 1e-5);
        CHECK(oracle::grad_rel_error(g.dB, oracle::finite_difference(ad.B, f)) <= 1e-5);
        CHECK(oracle::grad_rel_error(g.dR_delta, oracle::finite_difference(ad.R_delta, f)) <= 1e-5);
    }
}

TEST_CASE("with R_old = 0 the gradients are those of plain routed LoRA") {
    Rng rng(27);
    for (int trial = 0; trial < 10; ++trial) {
        CLoraAdapter ad = random_adapter(6, 5, 3, rng);
        ad.R_old = Matrix(3, 3);
        const Matrix x = oracle::random(4, 6, rng), G = oracle::random(4, 5, rng);
        Matrix R = ad.R_delta;
        auto f = [&] {
            return weighted_sum(G, oracle::matmul(oracle::matmul(oracle::relu(oracle::matmul(x, ad.A)), R), ad.B));
        };
        const DownProjection dp = down_project(ad, x);
        const AdapterGrads g = backward(ad, dp.z, x, G, dp.mask);
        CHECK(oracle::grad_rel_error(g.dR_delta, oracle::finite_difference(R, f)) <= 1e-5);
        CHECK(oracle::grad_rel_error(g.dA, oracle::finite_difference(ad.A, f)) <= 1e-5);
        CHECK(oracle::grad_rel_error(g.dB, oracle::finite_difference(ad.B, f)) <= 1e-5);
    }
}

TEST_CASE("property: backward does not depend on R_old") {
    Rng rng(28);
    CLoraAdapter ad = random_adapter(5, 4, 2, rng);
    const Matrix x = oracle::random(3, 5, rng), G = oracle::random(3, 4, rng);
    const DownProjection dp = down_project(ad, x);
    const AdapterGrads before = backward(ad, dp.z, x, G, dp.mask);
    const Matrix y_before = forward(ad, dp.z);
    ad.R_old = oracle::random(2, 2, rng, 10.0);
    const AdapterGrads after = backward(ad, dp.z, x, G, dp.mask);
    CHECK(before.dA == after.dA);
    CHECK(before.dB == after.dB);
    CHECK(before.dR_delta == after.dR_delta);
    CHECK(forward(ad, dp.z) != y_before);
}

TEST_CASE("backward shape errors") {
    Rng rng(29);
    const CLoraAdapter ad = random_adapter(5, 4, 2, rng);
    const Matrix x = oracle::random(3, 5, rng);
    const DownProjection dp = down_project(ad, x);
    CHECK_THROWS_AS(backward(ad, dp.z, x, Matrix(3, 5), dp.mask), ShapeError);
    CHECK_THROWS_AS(backward(ad, dp.z, Matrix(2, 5), Matrix(3, 4), dp.mask), ShapeError);
    CHECK_THROWS_AS(backward(ad, dp.z, x, Matrix(3, 4), Matrix(3, 3)), ShapeError);
}

TEST_CASE("make_adapter") {
    Rng rng(30);
    const CLoraAdapter ad = make_adapter(8, 6, 4, rng);
    CHECK(ad.R_old == Matrix(4, 4));
    REQUIRE(ad.A_snapshot.has_value());
    CHECK(*ad.A_snapshot == ad.A);
    CHECK(oracle::max_abs(ad.R_delta) < 1e-2);
    CHECK_THROWS_AS(make_adapter(3, 6, 4, rng), ShapeError);
    CHECK_THROWS_AS(make_adapter(6, 6, 0, rng), ShapeError);
    Rng r1(5), r2(5);
    CHECK(make_adapter(6, 6, 2, r1) == make_adapter(6, 6, 2, r2));
    CHECK_NOTHROW(make_adapter(4, 4, 1, rng).validate());
}

TEST_CASE("consolidate") {
    Rng rng(31);
    CLoraAdapter ad = random_adapter(8, 8, 4, rng);
    const Matrix W = effective_weight(ad);
    const CLoraAdapter same = consolidate(ad, rng, 0.0);
    CHECK(effective_weight(same) == W);
    CHECK(same.R_delta == Matrix(4, 4));
    CHECK(*same.A_snapshot == ad.A);

    const CLoraAdapter noisy = consolidate(ad, rng, 1e-3);
    const double drift = frobenius_norm(effective_weight(noisy) - W);
    CHECK(drift <= frobenius_norm(ad.A) * frobenius_norm(ad.B) * frobenius_norm(noisy.R_delta));

    CLoraAdapter fresh = random_adapter(6, 6, 3, rng);
    fresh.R_old = Matrix(3, 3);
    const Matrix D1 = oracle::random(3, 3, rng), D2 = oracle::random(3, 3, rng);
    fresh.R_delta = D1;
    fresh = consolidate(fresh, rng, 0.0);
    fresh.R_delta = D2;
    fresh = consolidate(fresh, rng, 0.0);
    CHECK(oracle::max_abs_diff(fresh.R_old, D1 + D2) == 0.0);
}

TEST_CASE("orthogonality loss examples") {
    Rng rng(32);
    CLoraAdapter ad = random_adapter(6, 4, 3, rng);
    ad.R_delta = Matrix(3, 3);
    const OrthogonalityLoss zero = orthogonality_loss(ad);
    CHECK(zero.loss == 0.0);
    CHECK(zero.dR_delta == Matrix(3, 3));

    // Old subspace spans e1, e2; the new directions A R_delta live in e3..e6.
    CLoraAdapter orth;
    orth.A_snapshot = Matrix{{1, 0}, {0, 1}, {0, 0}, {0, 0}};
    orth.A = Matrix{{0, 0}, {0, 0}, {1, 2}, {3, 1}};
    orth.B = oracle::random(2, 3, rng);
    orth.R_old = Matrix(2, 2);
    orth.R_delta = oracle::random(2, 2, rng);
    CHECK(orthogonality_loss(orth).loss == 0.0);

    ad.A_snapshot.reset();
    CHECK_THROWS_AS(orthogonality_loss(ad), StateError);
}

TEST_CASE("orthogonality loss gradient matches finite differences") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        CLoraAdapter ad = random_adapter(6, 4, 3, rng);
        auto f = [&] {
            return oracle::fro_sq(oracle::matmul(oracle::matmul(oracle::transpose(*ad.A_snapshot), ad.A), ad.R_delta));
        };
        const OrthogonalityLoss ol = orthogonality_loss(ad);
        CHECK(std::abs(ol.loss - f()) <= 1e-12 * f());
        CHECK(oracle::grad_rel_error(ol.dR_delta, oracle::finite_difference(ad.R_delta, f)) <= 1e-6);
    }
}
