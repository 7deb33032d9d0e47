#include "dwifob/operators.hpp"
#include "dwifob/svm_problem.hpp"

#include "../support/test_support.hpp"

#include <doctest.h>

using namespace dwifob;
using testing::Rng;

namespace {

// prox of t * max(0, 1 - y) at v, by cases on where the minimiser lands.
double hinge_prox_oracle(double v, double t) {
    if (v >= 1.0) return v;        // flat part: y = v
    if (v + t <= 1.0) return v + t;  // sloped part: y - v = t
    return 1.0;                    // kink
}

// (v - mu)/sigma must lie in d f*(mu) = 1 + N_[-1,0](mu).
bool in_conjugate_subdifferential(double v, double mu, double sigma) {
    const double g = (v - mu) / sigma;
    if (mu < -1.0 || mu > 0.0) return false;
    if (mu > -1.0 && mu < 0.0) return g == 1.0 || std::abs(g - 1.0) <= 4e-16 * (1.0 + std::abs(v) / sigma);
    if (mu == 0.0) return g >= 1.0 - 1e-15;
    return g <= 1.0 + 1e-15;  // mu == -1
}

}  // namespace

TEST_CASE("prox_l1_skip_last examples") {
    CHECK(prox_l1_skip_last(Vector::Zero(4), 0.7) == Vector::Zero(4));
    Rng rng(1);
    const Vector v = rng.vector(6);
    CHECK(prox_l1_skip_last(v, 0.0) == v);

    const Vector w = (Vector(3) << 3.0, -1.0, 5.0).finished();
    const Vector p = prox_l1_skip_last(w, 1.0);
    CHECK(p == (Vector(3) << 2.0, 0.0, 5.0).finished());
    // 0 in (p - w) + theta d|p| on the penalised coordinates.
    CHECK(p[0] - w[0] + 1.0 == 0.0);
    CHECK(std::abs(p[1] - w[1]) <= 1.0);

    CHECK_THROWS(prox_l1_skip_last(w, -0.1));
    CHECK_THROWS(prox_l1_skip_last(Vector(0), 1.0));
}

TEST_CASE("prox_l1_skip_last satisfies subgradient optimality and is nonexpansive") {
    Rng rng(2);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = rng.integer(1, 10);
        const double theta = rng.uniform(0.0, 2.0);
        const Vector v = rng.vector(n, 2.0);
        const Vector p = prox_l1_skip_last(v, theta);
        CHECK(p[n - 1] == v[n - 1]);
        for (int j = 0; j + 1 < n; ++j) {
            const double g = v[j] - p[j];  // must lie in theta d|p_j|
            if (p[j] > 0.0) {
                CHECK(g == doctest::Approx(theta).epsilon(1e-14));
            } else if (p[j] < 0.0) {
                CHECK(g == doctest::Approx(-theta).epsilon(1e-14));
            } else {
                CHECK(std::abs(g) <= theta);
            }
        }
        const Vector u = rng.vector(n, 2.0);
        const Vector q = prox_l1_skip_last(u, theta);
        CHECK((p - q).norm() <= (v - u).norm() * (1.0 + 1e-15));
        CHECK((p - q).squaredNorm() <= (p - q).dot(v - u) + 1e-10);
    }
}

TEST_CASE("resolvent_hinge_conjugate examples via the Moreau identity") {
    auto moreau = [](const Vector& v, double sigma) {
        Vector out(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            out[i] = v[i] - sigma * hinge_prox_oracle(v[i] / sigma, 1.0 / sigma);
        }
        return out;
    };
    const Vector zero = Vector::Zero(3);
    CHECK((resolvent_hinge_conjugate(zero, 0.5) - moreau(zero, 0.5)).norm() < 1e-15);
    CHECK(resolvent_hinge_conjugate(zero, 0.5) == Vector::Constant(3, -0.5));

    const Vector five = Vector::Constant(1, 5.0);
    CHECK(resolvent_hinge_conjugate(five, 1.0)[0] == 0.0);
    CHECK(moreau(five, 1.0)[0] == 0.0);

    const Vector feasible = (Vector(4) << -1.0, -0.25, 0.0, -0.75).finished();
    CHECK((resolvent_hinge_conjugate(feasible, 1e-300) - feasible).norm() <= 1e-16);

    CHECK_THROWS(resolvent_hinge_conjugate(zero, 0.0));
}

TEST_CASE("hinge-conjugate resolvent: inclusion, Moreau decomposition, firm nonexpansiveness") {
    Rng rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        const double sigma = std::pow(10.0, rng.uniform(-3.0, 1.0));
        const Vector v = rng.vector(5, 2.0);
        const Vector mu = resolvent_hinge_conjugate(v, sigma);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            CHECK(in_conjugate_subdifferential(v[i], mu[i], sigma));
        }
        // prox_{sigma f*}(v) + sigma prox_{f/sigma}(v/sigma) = v
        const Vector prox = prox_hinge(v / sigma, 1.0 / sigma);
        CHECK((mu + sigma * prox - v).norm() <= 1e-12 * (1.0 + v.norm()));
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            CHECK(prox[i] == hinge_prox_oracle(v[i] / sigma, 1.0 / sigma));
        }
        const Vector u = rng.vector(5, 2.0);
        const Vector nu = resolvent_hinge_conjugate(u, sigma);
        CHECK((mu - nu).squaredNorm() <= (mu - nu).dot(v - u) + 1e-10);
    }
}

TEST_CASE("prox_hinge scalar cases") {
    CHECK(prox_hinge(Vector::Constant(1, 2.0), 0.5)[0] == 2.0);
    CHECK(prox_hinge(Vector::Constant(1, -1.0), 0.5)[0] == -0.5);
    CHECK(prox_hinge(Vector::Constant(1, 0.8), 0.5)[0] == 1.0);
}

TEST_CASE("objective_value") {
    const auto data = parse_libsvm_string("+1 1:1 2:2\n-1 1:-1\n+1 2:0.5\n");
    CHECK(objective_value(Vector::Zero(2), 0.0, data, 0.3) == 3.0);

    // Margins >= 1 and delta = 0.
    const Vector w = (Vector(2) << 1.0, 2.0).finished();
    CHECK(objective_value(w, 0.0, data, 0.0) == 0.0);
    CHECK(objective_value(w, 0.0, data, 0.5) == doctest::Approx(1.5));
}

TEST_CASE("objective_value matches an extended-precision accumulation") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const int samples = rng.integer(1, 30);
        const int features = rng.integer(1, 8);
        std::string text;
        for (int i = 0; i < samples; ++i) {
            text += rng.uniform() < 0.0 ? "-1" : "+1";
            for (int j = 0; j < features; ++j) {
                if (rng.uniform() < -0.3) continue;
                text += " " + std::to_string(j + 1) + ":" + std::to_string(rng.uniform(-3.0, 3.0));
            }
            text += "\n";
        }
        text += "+1 " + std::to_string(features) + ":1\n";
        const auto data = parse_libsvm_string(text);
        const Vector w = rng.vector(data.features());
        const double b = rng.uniform();
        const double delta = rng.uniform(0.0, 2.0);

        long double total = 0.0L;
        const Matrix theta = Matrix(data.theta);
        for (Eigen::Index i = 0; i < data.samples(); ++i) {
            long double margin = b;
            for (Eigen::Index j = 0; j < data.features(); ++j) {
                margin += static_cast<long double>(theta(i, j)) * w[j];
            }
            const long double t = 1.0L - data.phi[i] * margin;
            total += t > 0.0L ? t : 0.0L;
        }
        long double l1 = 0.0L;
        for (Eigen::Index j = 0; j < w.size(); ++j) l1 += std::fabs(static_cast<long double>(w[j]));
        total += delta * l1;

        const double got = objective_value(w, b, data, delta);
        CHECK(std::abs(got - static_cast<double>(total)) <= 1e-12 * (1.0 + std::abs(got)));
    }
}

TEST_CASE("cocoercive zero operator") {
    const auto z = CocoerciveOperator::zero();
    CHECK(z.is_zero());
    CHECK(z(Vector::Ones(3)) == Vector::Zero(3));
}
