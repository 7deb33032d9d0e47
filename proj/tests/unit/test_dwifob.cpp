#include "dwifob/dwifob.hpp"

#include "../support/test_support.hpp"

#include <doctest.h>

using namespace dwifob;
using testing::Rng;

namespace {

struct Affine {
    FbProblem fb;
    Vector solution;
    double beta = 0.0;
};

// 0 in P x + q + C x with P = PSD + 0.1 I + skew and C symmetric PSD.
Affine random_affine(Rng& rng, Eigen::Index n) {
    Affine a;
    const Matrix p = rng.psd(n, n) + 0.1 * Matrix::Identity(n, n) + rng.skew(n);
    const Vector q = rng.vector(n);
    const Matrix c = rng.psd(n, 2);
    a.fb.resolvent = {[p, q](const Vector& v, double g) {
                          const Matrix sys = Matrix::Identity(p.rows(), p.cols()) + g * p;
                          return Vector(sys.partialPivLu().solve(v - g * q));
                      },
                      "affine"};
    a.beta = testing::dense_spectral_norm(c);
    a.fb.forward.evaluate = [c](const Vector& v) { return Vector(c * v); };
    a.fb.forward.beta = a.beta;
    a.solution = (p + c).partialPivLu().solve(-q);
    return a;
}

DwifobConfig config_for(double beta, std::size_t m, double zeta) {
    DwifobConfig cfg;
    cfg.m = m;
    cfg.xi = 1e-8;
    cfg.schedule = ParameterSchedule::constant(0.01, 1.0 / beta, 1.0, zeta, beta);
    return cfg;
}

}  // namespace

TEST_CASE("candidate is zero on a cold start and on identical snapshots") {
    ResidualHistory h(3);
    const Vector x = (Vector(3) << 1.0, 2.0, 3.0).finished();
    h.push(Vector::Ones(3), x);
    const auto c = dwifob_candidate(h, x, 1e-5);
    CHECK(c.u_hat == Vector::Zero(3));

    h.push((Vector(3) << 0.5, -1.0, 2.0).finished(), x);
    h.push((Vector(3) << -0.5, 1.0, 0.0).finished(), x);
    const auto same = dwifob_candidate(h, x, 1e-5);
    CHECK(same.u_hat.norm() <= 1e-15);
}

TEST_CASE("candidate matches a dense weight oracle on random histories") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = rng.integer(2, 12);
        ResidualHistory h(1);
        Matrix r(dim, 2);
        Matrix s(dim, 2);
        for (int j = 0; j < 2; ++j) {
            r.col(j) = rng.vector(dim);
            s.col(j) = rng.vector(dim);
            h.push(r.col(j), s.col(j));
        }
        const double xi = std::pow(10.0, rng.uniform(-8.0, -1.0));
        const Vector alpha = testing::dense_kkt_weights(r, xi);
        const Vector x_next = s.col(1);
        const Vector expect = x_next - s * alpha;
        const auto c = dwifob_candidate(h, x_next, xi);
        CHECK((c.u_hat - expect).norm() <= 1e-10 * (1.0 + expect.norm()));
    }
}

TEST_CASE("scale_deviation") {
    const auto e = MetricHandle::euclidean(2);
    const Vector u = (Vector(2) << 3.0, 4.0).finished();
    // zeta |l| / ||u_hat|| = 0.5 * 2 / 5
    CHECK((scale_deviation(u, 4.0, 0.5, 0.0, e) - 0.2 * u).norm() < 1e-15);
    CHECK(e.norm(scale_deviation(u, 4.0, 0.5, 0.0, e)) == doctest::Approx(1.0));
    // eps in the denominator shortens the step
    CHECK((scale_deviation(u, 4.0, 0.5, 5.0, e) - 0.1 * u).norm() < 1e-15);
    // 0/0 is taken as 0
    CHECK(scale_deviation(Vector::Zero(2), 4.0, 0.5, 0.0, e) == Vector::Zero(2));
    CHECK(scale_deviation(u, 0.0, 0.5, 0.0, e) == Vector::Zero(2));
    CHECK(deviation_scale_factor(0.0, 1.0, 0.5, 0.0) == 0.0);
    CHECK_THROWS(deviation_scale_factor(1.0, -1.0, 0.5, 0.0));

    // ||u||_M = zeta |l| exactly when eps = 0, so the norm condition holds.
    Rng rng(2);
    const auto m = MetricHandle::from_matrix(rng.psd(4, 4) + 0.2 * Matrix::Identity(4, 4));
    for (int trial = 0; trial < 200; ++trial) {
        const Vector v = rng.vector(4);
        const double ell_sq = rng.uniform(0.0, 3.0);
        const double zeta = rng.uniform(0.0, 0.99);
        const Vector out = scale_deviation(v, ell_sq, zeta, 0.0, m);
        CHECK(m.norm_sq(out) <= zeta * zeta * ell_sq * (1.0 + 1e-12));
    }
}

TEST_CASE("zeta = 0 gives plain forward-backward") {
    Rng rng(3);
    const auto a = random_affine(rng, 6);
    const Vector x0 = rng.vector(6);
    FbOptions opt;
    opt.max_iters = 100;
    const auto d = run_dwifob(a.fb, config_for(a.beta, 5, 0.0), MetricHandle::euclidean(6), x0, opt);
    ZeroDeviation zero;
    const auto plain = run_fb_with_deviations(
        a.fb, zero, ParameterSchedule::constant(0.05, 1.0 / a.beta, 1.0, 0.0, a.beta),
        MetricHandle::euclidean(6), x0, opt);
    CHECK(d.final_state.x == plain.final_state.x);
}

TEST_CASE("dwifob converges on monotone affine problems and respects the norm condition") {
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const auto a = random_affine(rng, 10);
        FbOptions opt;
        opt.max_iters = 50000;
        opt.tol = 1e-12;
        const auto t = run_dwifob(a.fb, config_for(a.beta, 3, 0.99), MetricHandle::euclidean(10),
                                  Vector::Zero(10), opt);
        CHECK(t.status == RunStatus::converged);
        CHECK((t.final_state.x - a.solution).norm() <= 1e-8 * (1.0 + a.solution.norm()));
        for (const auto& s : t.steps) REQUIRE(s.u_norm_sq <= s.bound * (1.0 + 1e-12));

        ZeroDeviation zero;
        const auto plain = run_fb_with_deviations(
            a.fb, zero, ParameterSchedule::constant(0.05, 1.0 / a.beta, 1.0, 0.0, a.beta),
            MetricHandle::euclidean(10), Vector::Zero(10), opt);
        MESSAGE("dwifob " << t.iterations << " vs plain " << plain.iterations);
    }
}

TEST_CASE("starting at the solution stays there") {
    Rng rng(5);
    const auto a = random_affine(rng, 5);
    FbOptions opt;
    opt.max_iters = 50;
    opt.keep_states = true;
    const auto t = run_dwifob(a.fb, config_for(a.beta, 5, 0.99), MetricHandle::euclidean(5),
                              a.solution, opt);
    for (const auto& s : t.states) CHECK((s.x - a.solution).norm() <= 1e-12);
}

TEST_CASE("runs are deterministic") {
    Rng rng(6);
    const auto a = random_affine(rng, 7);
    const Vector x0 = rng.vector(7);
    FbOptions opt;
    opt.max_iters = 300;
    const auto cfg = config_for(a.beta, 4, 0.9);
    const auto t1 = run_dwifob(a.fb, cfg, MetricHandle::euclidean(7), x0, opt);
    const auto t2 = run_dwifob(a.fb, cfg, MetricHandle::euclidean(7), x0, opt);
    CHECK(t1.final_state.x == t2.final_state.x);
    CHECK(t1.final_state.u == t2.final_state.u);
}

TEST_CASE("policy rejects bad parameters") {
    CHECK_THROWS(DwifobPolicy(3, -1.0, 0.0));
    CHECK_THROWS(DwifobPolicy(3, 1e-5, -1.0));
    CHECK_THROWS(DwifobPolicy(0, 1e-5, 0.0));
}
