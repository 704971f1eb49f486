#include <doctest.h>

#include <cmath>
#include <numeric>

#include "clora/model.hpp"
#include "model_oracle.hpp"

using namespace clora;

using oracle::features_oracle;
using oracle::random_model;
using oracle::total_loss_oracle;

TEST_CASE("block_forward examples") {
    Rng rng(41);
    IncrementalModel m = random_model(6, 2, 3, rng);
    const Matrix x = oracle::random(4, 6, rng);

    IncrementalModel off = m;
    off.adapter.R_old = Matrix(2, 2);
    off.adapter.R_delta = Matrix(2, 2);
    CHECK(block_forward(off, x).features == x + mlp_forward(m.block, x));

    IncrementalModel nobias = m;
    nobias.block.b1 = Matrix(1, nobias.block.hidden());
    nobias.block.b2 = Matrix(1, 6);
    CHECK(block_forward(nobias, Matrix(3, 6)).features == Matrix(3, 6));

    for (int trial = 0; trial < 10; ++trial) {
        const IncrementalModel r = random_model(6, 2, 3, rng);
        const Matrix xr = oracle::random(5, 6, rng);
        const Matrix expect = features_oracle(r, xr, r.adapter.A, r.adapter.B);
        CHECK(oracle::max_abs_diff(block_forward(r, xr).features, expect) <=
              1e-12 * std::max(1.0, oracle::max_abs(expect)));
    }
    CHECK_THROWS_AS(block_forward(m, Matrix(2, 5)), ShapeError);
}

TEST_CASE("identity surrogate block") {
    Rng rng(42);
    const MlpBlock b = make_mlp_block(5, 8, rng, true);
    const Matrix x = oracle::random(3, 5, rng);
    CHECK(mlp_forward(b, x) == Matrix(3, 5));
}

TEST_CASE("cosine logits examples") {
    CosineHead head;
    head.weights = Matrix{{1, 2, 0}, {0, 0, 3}, {-1, -2, 0}};
    head.labels = {0, 1, 2};
    const std::vector<double> f{2, 4, 0};
    const auto z = cosine_logits(head, f);
    CHECK(z[0] == doctest::Approx(16.0).epsilon(1e-14));
    CHECK(z[1] == 0.0);
    CHECK(z[2] == doctest::Approx(-16.0).epsilon(1e-14));

    const std::vector<double> zero(3, 0.0);
    for (double v : cosine_logits(head, zero)) CHECK(v == 0.0);
}

TEST_CASE("property: cosine logits are bounded and scale invariant") {
    Rng rng(43);
    CosineHead head;
    const std::vector<int> labels{3, 5, 7, 9};
    extend_head(head, labels, 6, 1.0, rng);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix f = oracle::random(1, 6, rng);
        const auto z = cosine_logits(head, f.row(0));
        for (double v : z) CHECK(std::abs(v) <= head.scale * (1 + 1e-15));
        const Matrix g = 7.3 * f;
        CosineHead scaled = head;
        for (std::size_t j = 0; j < 6; ++j) scaled.weights(2, j) *= 0.01;
        const auto z2 = cosine_logits(scaled, g.row(0));
        for (std::size_t l = 0; l < z.size(); ++l)
            CHECK(std::abs(z2[l] - z[l]) <= 1e-10 * std::max(1.0, std::abs(z[l])));
    }
}

TEST_CASE("head bookkeeping") {
    Rng rng(44);
    CosineHead head;
    const std::vector<int> first{4, 2};
    extend_head(head, first, 3, 0.02, rng);
    CHECK(head.num_classes() == 2);
    CHECK(head.row_of(2) == 1);
    CHECK(head.has_class(4));
    CHECK_FALSE(head.has_class(5));
    CHECK_THROWS_AS((void)head.row_of(5), std::out_of_range);
}

TEST_CASE("cross entropy examples") {
    const std::vector<double> flat{0.3, 0.3};
    CHECK(cross_entropy(flat, 0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<double> five(5, -1.0);
    CHECK(cross_entropy(five, 3).loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));
    const std::vector<double> sat{45.0, 5.0, 2.0};
    const auto ce = cross_entropy(sat, 0);
    CHECK(ce.loss <= 1e-15);
    CHECK(ce.loss >= 0.0);

    CHECK_THROWS(cross_entropy(std::vector<double>{}, 0));
    CHECK_THROWS(cross_entropy(flat, 2));
}

TEST_CASE("cross entropy gradient and softmax normalization") {
    Rng rng(45);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix z = oracle::random(1, 5, rng, 3.0);
        const std::size_t c = rng.uniform_index(5);
        const auto ce = cross_entropy(z.row(0), c);
        CHECK(ce.loss >= 0.0);
        CHECK(ce.loss == doctest::Approx(oracle::cross_entropy(z.data(), c)).epsilon(1e-12));
        // softmax = dlogits + onehot
        double total = 0.0;
        for (std::size_t l = 0; l < 5; ++l) total += ce.dlogits[l] + (l == c ? 1.0 : 0.0);
        CHECK(std::abs(total - 1.0) <= 1e-12);
        const Matrix num = oracle::finite_difference(z, [&] { return oracle::cross_entropy(z.data(), c); });
        const Matrix ana(1, 5, ce.dlogits);
        CHECK(oracle::grad_rel_error(ana, num) <= 1e-6);
    }
}

TEST_CASE("batch cross entropy is the row mean") {
    const Matrix logits{{1, 2, 3}, {0, 0, 0}};
    const std::vector<std::size_t> t{2, 1};
    const auto b = batch_cross_entropy(logits, t);
    const double expect = 0.5 * (cross_entropy(logits.row(0), 2).loss + std::log(3.0));
    CHECK(b.loss == doctest::Approx(expect).epsilon(1e-14));
    CHECK(b.dlogits(1, 1) == doctest::Approx((1.0 / 3.0 - 1.0) / 2.0));
    CHECK_THROWS(batch_cross_entropy(logits, std::vector<std::size_t>{0}));
}

TEST_CASE("model_backward matches finite differences of the total loss") {
    Rng rng(46);
    for (const double lambda : {0.0, 0.3}) {
        for (int trial = 0; trial < 10; ++trial) {
            IncrementalModel m = random_model(6, 2, 3, rng);
            // A milder scale keeps the softmax away from saturation, where the
            // gradient shrinks below finite-difference round-off.
            m.head.scale = 4.0;
            const Matrix x = oracle::random(4, 6, rng);
            std::vector<std::size_t> y(4);
            for (auto& v : y) v = rng.uniform_index(3);
            const Matrix A0 = m.adapter.A, B0 = m.adapter.B;

            const BlockForward fwd = block_forward(m, x);
            const Matrix logits = cosine_logits(m.head, fwd.features);
            const auto ce = batch_cross_entropy(logits, y);
            const ModelGrads g = model_backward(m, fwd.cache, fwd.features, ce.dlogits, lambda);

            auto f = [&] { return total_loss_oracle(m, x, y, A0, B0, lambda); };
            CHECK(std::abs(f() - ce.loss - lambda * g.orth_loss) <= 1e-12 * std::max(1.0, f()));
            CHECK(oracle::grad_rel_error(g.adapter.dA, oracle::finite_difference(m.adapter.A, f)) <= 1e-5);
            CHECK(oracle::grad_rel_error(g.adapter.dB, oracle::finite_difference(m.adapter.B, f)) <= 1e-5);
            CHECK(oracle::grad_rel_error(g.adapter.dR_delta, oracle::finite_difference(m.adapter.R_delta, f)) <= 1e-5);
            CHECK(oracle::grad_rel_error(g.head, oracle::finite_difference(m.head.weights, f)) <= 1e-5);
        }
    }
}

TEST_CASE("lambda = 0 gives the pure cross-entropy gradient") {
    Rng rng(47);
    IncrementalModel m = random_model(6, 2, 3, rng);
    const Matrix x = oracle::random(4, 6, rng);
    const std::vector<std::size_t> y{0, 1, 2, 0};
    const BlockForward fwd = block_forward(m, x);
    const auto ce = batch_cross_entropy(cosine_logits(m.head, fwd.features), y);
    const ModelGrads g0 = model_backward(m, fwd.cache, fwd.features, ce.dlogits, 0.0);
    const ModelGrads g1 = model_backward(m, fwd.cache, fwd.features, ce.dlogits, 0.5);
    const HeadGrads hg = cosine_backward(m.head, fwd.features, ce.dlogits);
    const AdapterGrads ag = backward(m.adapter, fwd.cache.down.z, x, hg.dfeatures, fwd.cache.down.mask);
    CHECK(g0.adapter.dR_delta == ag.dR_delta);
    CHECK(g0.adapter.dA == ag.dA);
    CHECK(g0.head == hg.dweights);
    CHECK(g0.orth_loss == 0.0);
    CHECK(g1.adapter.dR_delta != ag.dR_delta);
    CHECK(g1.adapter.dA == ag.dA);
}

TEST_CASE("stale cache is rejected") {
    Rng rng(48);
    IncrementalModel m = random_model(6, 2, 3, rng);
    const Matrix x = oracle::random(2, 6, rng);
    const BlockForward fwd = block_forward(m, x);
    const Matrix dl(2, 3, 0.1);
    ++m.version;
    CHECK_THROWS_AS(model_backward(m, fwd.cache, fwd.features, dl, 0.0), StateError);
}

TEST_CASE("predict picks the best cosine, lowest row on ties") {
    Rng rng(49);
    IncrementalModel m = random_model(4, 2, 2, rng);
    m.block.W2 = Matrix(m.block.hidden(), 4);
    m.block.b2 = Matrix(1, 4);
    m.adapter.R_old = Matrix(2, 2);
    m.adapter.R_delta = Matrix(2, 2);
    m.head.weights = Matrix{{1, 0, 0, 0}, {0, 1, 0, 0}};
    m.head.labels = {10, 20};
    const Matrix x{{5, 1, 0, 0}, {0, 3, 1, 0}, {1, 1, 0, 0}};
    CHECK(predict(m, x) == std::vector<int>{10, 20, 10});
}

TEST_CASE("property: with the adapter disabled predictions depend only on block and head") {
    Rng rng(50);
    IncrementalModel m = random_model(6, 2, 3, rng);
    m.adapter.R_old = Matrix(2, 2);
    m.adapter.R_delta = Matrix(2, 2);
    IncrementalModel other = m;
    other.adapter.A = oracle::random(6, 2, rng);
    other.adapter.B = oracle::random(2, 6, rng);
    const Matrix x = oracle::random(20, 6, rng);
    CHECK(predict(m, x) == predict(other, x));
}
