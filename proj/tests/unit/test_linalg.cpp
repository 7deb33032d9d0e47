#include "dwifob/linalg.hpp"

#include "../support/test_support.hpp"

#include <doctest.h>

using namespace dwifob;
using testing::Rng;

TEST_CASE("apply on elementary operators") {
    const Vector v = (Vector(2) << 1.0, 2.0).finished();
    CHECK(apply(LinearOperator::identity(2), v) == v);
    CHECK(apply(LinearOperator::zero(3, 2), v) == Vector::Zero(3));

    const Matrix d = (Matrix(2, 2) << 3.0, 0.0, 0.0, 1.0).finished();
    const Vector ones = Vector::Ones(2);
    CHECK(apply(LinearOperator::from_dense(d), ones) == (Vector(2) << 3.0, 1.0).finished());
}

TEST_CASE("apply rejects a dimension mismatch") {
    const auto op = LinearOperator::identity(3);
    CHECK_THROWS_AS(op.apply(Vector::Ones(2)), DimensionError);
    CHECK_THROWS_AS(op.adjoint(Vector::Ones(4)), DimensionError);
}

TEST_CASE("sparse triplets are validated") {
    CHECK_THROWS(sparse_from_triplets(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}));
    CHECK_THROWS(sparse_from_triplets(2, 2, {{2, 0, 1.0}}));
    CHECK_THROWS(sparse_from_triplets(2, 2, {{0, -1, 1.0}}));
    const auto s = sparse_from_triplets(2, 3, {{1, 2, 4.0}, {0, 0, -1.0}});
    CHECK(s.coeff(1, 2) == 4.0);
    CHECK(s.coeff(0, 0) == -1.0);
    CHECK(s.nonZeros() == 2);
}

TEST_CASE("adjoint consistency on random operators") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int r = rng.integer(1, 12);
        const int c = rng.integer(1, 12);
        Matrix dense = rng.matrix(r, c);
        std::vector<Triplet> trip;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) {
                if (rng.uniform() > 0.3) trip.push_back({i, j, dense(i, j)});
            }
        }
        for (const auto& op : {LinearOperator::from_dense(dense),
                               LinearOperator::from_sparse(sparse_from_triplets(r, c, trip))}) {
            const Vector x = rng.vector(c);
            const Vector y = rng.vector(r);
            const double lhs = op.apply(x).dot(y);
            const double rhs = x.dot(op.adjoint(y));
            CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + x.norm() * y.norm()));
        }
    }
}

TEST_CASE("counted operators tally forward and adjoint applications") {
    auto counter = std::make_shared<ApplyCounter>();
    const auto op = LinearOperator::identity(3).counted(counter);
    const auto copy = op;
    op.apply(Vector::Ones(3));
    copy.apply(Vector::Ones(3));
    op.adjoint(Vector::Ones(3));
    CHECK(counter->forward == 2);
    CHECK(counter->adjoint == 1);
    counter->reset();
    CHECK(counter->forward == 0);
}

TEST_CASE("spectral norm on known operators") {
    CHECK(estimate_spectral_norm(LinearOperator::identity(3)).value == doctest::Approx(1.0));
    const Matrix d = (Matrix(2, 2) << 3.0, 0.0, 0.0, 1.0).finished();
    CHECK(estimate_spectral_norm(LinearOperator::from_dense(d)).value == doctest::Approx(3.0));

    const auto z = estimate_spectral_norm(LinearOperator::zero(4, 3));
    CHECK(z.value == 0.0);
    CHECK(z.converged);
}

TEST_CASE("spectral norm matches a dense SVD") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = rng.matrix(5, 3);
        const double truth = testing::dense_spectral_norm(a);
        const auto est = estimate_spectral_norm(LinearOperator::from_dense(a), 1e-12, 100000, 0);
        CHECK(est.converged);
        CHECK(std::abs(est.value - truth) <= 1e-8 * truth);
    }
}

TEST_CASE("spectral norm is deterministic for a seed and flags non-convergence") {
    Rng rng(6);
    const auto op = LinearOperator::from_dense(rng.matrix(30, 20));
    const auto a = estimate_spectral_norm(op, 1e-9, 10000, 42);
    const auto b = estimate_spectral_norm(op, 1e-9, 10000, 42);
    CHECK(a.value == b.value);
    CHECK(a.iterations == b.iterations);

    const auto short_run = estimate_spectral_norm(op, 1e-16, 2, 42);
    CHECK_FALSE(short_run.converged);
    CHECK(short_run.value > 0.0);
}

TEST_CASE("extrapolation weights: closed cases") {
    SUBCASE("single column") {
        const Matrix r = Vector::Ones(4);
        for (double xi : {0.0, 1e-5, 3.0}) {
            const auto w = solve_extrapolation_weights(r, xi);
            REQUIRE(w.alpha.size() == 1);
            CHECK(w.alpha[0] == 1.0);
            CHECK_FALSE(w.degenerate);
        }
    }
    SUBCASE("orthonormal columns, xi = 0") {
        const Matrix r = Matrix::Identity(3, 2);
        const auto w = solve_extrapolation_weights(r, 0.0);
        const Vector oracle = testing::dense_kkt_weights(r, 0.0);
        CHECK(w.alpha[0] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(w.alpha[1] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK((w.alpha - oracle).norm() < 1e-14);
    }
    SUBCASE("R = [2 e1, e2], xi = 0.1") {
        Matrix r = Matrix::Zero(2, 2);
        r(0, 0) = 2.0;
        r(1, 1) = 1.0;
        const auto w = solve_extrapolation_weights(r, 0.1);
        const Vector oracle = testing::dense_kkt_weights(r, 0.1);
        CHECK((w.alpha - oracle).norm() < 1e-13);
        CHECK(w.alpha[0] == doctest::Approx(0.2425).epsilon(1e-3));
        CHECK(w.alpha[1] == doctest::Approx(0.7575).epsilon(1e-3));
    }
}

TEST_CASE("extrapolation weights: KKT optimality and affine invariance on random data") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = rng.integer(2, 15);
        const int k = rng.integer(1, std::min(d, 6));
        const double xi = trial % 3 == 0 ? 0.0 : std::pow(10.0, rng.uniform(-8.0, 0.0));
        const Matrix r = rng.matrix(d, k);
        const auto w = solve_extrapolation_weights(r, xi);
        REQUIRE_FALSE(w.degenerate);
        CHECK(std::abs(w.alpha.sum() - 1.0) <= 1e-12);

        const Matrix g = r.transpose() * r;
        const Matrix h = g + xi * g.norm() * Matrix::Identity(k, k);
        const Vector grad = h * w.alpha;
        const double nu = grad.mean();
        CHECK((grad - nu * Vector::Ones(k)).norm() <= 1e-9 * (1.0 + h.norm()));

        auto objective = [&](const Vector& a) { return a.dot(h * a); };
        const double f0 = objective(w.alpha);
        for (int dir = 0; dir < 5 && k > 1; ++dir) {
            Vector v = rng.vector(k);
            v.array() -= v.mean();
            CHECK(objective(w.alpha + 1e-6 * v) >= f0 - 1e-14 * (1.0 + std::abs(f0)));
            CHECK(objective(w.alpha - 1e-6 * v) >= f0 - 1e-14 * (1.0 + std::abs(f0)));
        }
    }
}

TEST_CASE("extrapolation weights fall back on degenerate systems") {
    const Matrix zero = Matrix::Zero(3, 3);
    const auto w = solve_extrapolation_weights(zero, 0.0);
    CHECK(w.degenerate);
    CHECK(w.alpha == (Vector(3) << 0.0, 0.0, 1.0).finished());

    Matrix same(2, 2);
    same << 1.0, 1.0, 1.0, 1.0;
    const auto s = solve_extrapolation_weights(same, 0.0);
    CHECK(s.degenerate);
    CHECK(s.alpha[1] == 1.0);

    CHECK_THROWS(solve_extrapolation_weights(Matrix(3, 0), 0.1));
    CHECK_THROWS(solve_extrapolation_weights(same, -1.0));
}
