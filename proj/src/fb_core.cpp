#include "dwifob/fb_core.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dwifob {

namespace {

constexpr double kBoundSlack = 1e-12;

bool le(double a, double b) { return a <= b + kBoundSlack * std::max(1.0, std::abs(b)); }

void check_iteration_params(const ParameterSchedule& schedule, std::size_t n,
                            std::vector<ParameterViolation>& out) {
    const double eps = schedule.epsilon;
    const double beta = schedule.beta;
    const double zeta = schedule.zeta(n);
    const double gamma = schedule.gamma(n);
    const double lambda = schedule.lambda(n);
    auto report = [&](const char* what, double value) {
        std::ostringstream msg;
        msg << what << " = " << value << " violates its bound";
        out.push_back({n, msg.str()});
    };
    if (!(zeta >= 0.0) || !le(zeta, 1.0 - eps)) report("zeta", zeta);
    const bool gamma_upper = beta == 0.0 || le(gamma, (4.0 - 3.0 * eps) / beta);
    if (!le(eps, gamma) || !gamma_upper || !std::isfinite(gamma)) report("gamma", gamma);
    if (!le(eps, lambda) || !le(lambda, 2.0 - gamma * beta / 2.0 - eps / 2.0)) {
        report("lambda", lambda);
    }
}

}  // namespace

ParameterSchedule ParameterSchedule::constant(double epsilon, double gamma, double lambda,
                                              double zeta, double beta) {
    ParameterSchedule s;
    s.epsilon = epsilon;
    s.gamma = [gamma](std::size_t) { return gamma; };
    s.lambda = [lambda](std::size_t) { return lambda; };
    s.zeta = [zeta](std::size_t) { return zeta; };
    s.beta = beta;
    return s;
}

std::vector<ParameterViolation> validate_params(const ParameterSchedule& schedule,
                                                std::size_t horizon) {
    if (horizon < 1) throw std::invalid_argument("validate_params: horizon must be >= 1");
    std::vector<ParameterViolation> out;
    const double eps = schedule.epsilon;
    const double beta = schedule.beta;
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        out.push_back({std::nullopt, "beta must be finite and >= 0"});
        return out;
    }
    const double eps_max = std::min(1.0, 4.0 / (3.0 + beta));
    if (!(eps > 0.0 && eps < eps_max)) {
        std::ostringstream msg;
        msg << "epsilon = " << eps << " outside (0, " << eps_max << ")";
        out.push_back({std::nullopt, msg.str()});
    }
    if (!schedule.gamma || !schedule.lambda || !schedule.zeta) {
        out.push_back({std::nullopt, "schedule is missing gamma, lambda or zeta"});
        return out;
    }

    for (std::size_t n = 0; n <= horizon; ++n) check_iteration_params(schedule, n, out);
    return out;
}

MetricHandle::MetricHandle(Inner inner, Eigen::Index dim, int rho_samples, std::uint64_t seed)
    : inner_(std::move(inner)), dim_(dim) {
    if (!inner_) throw std::invalid_argument("MetricHandle: empty inner product");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    auto draw = [&] {
        Vector v(dim_);
        for (Eigen::Index i = 0; i < dim_; ++i) v[i] = gauss(rng);
        return v;
    };
    rho_ = std::numeric_limits<double>::infinity();
    for (int k = 0; k < rho_samples && dim_ > 0; ++k) {
        const Vector u = draw();
        const Vector v = draw();
        const double uv = inner_(u, v);
        const double vu = inner_(v, u);
        if (std::abs(uv - vu) > 1e-10 * (1.0 + u.norm() * v.norm())) {
            throw std::invalid_argument("MetricHandle: inner product is not symmetric");
        }
        const double ratio = inner_(u, u) / u.squaredNorm();
        if (!(ratio > 0.0)) {
            throw std::invalid_argument("MetricHandle: metric is not strongly positive");
        }
        rho_ = std::min(rho_, ratio);
    }
    if (!std::isfinite(rho_)) rho_ = 1.0;
}

MetricHandle MetricHandle::euclidean(Eigen::Index dim) {
    return {[](const Vector& u, const Vector& v) { return u.dot(v); }, dim};
}

MetricHandle MetricHandle::from_matrix(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("MetricHandle: matrix must be square");
    auto shared = std::make_shared<const Matrix>(m);
    return {[shared](const Vector& u, const Vector& v) { return u.dot(*shared * v); }, m.rows()};
}

double MetricHandle::norm(const Vector& u) const { return std::sqrt(std::max(0.0, norm_sq(u))); }

FbStepResult fb_step(const FbState& state, const ResolventOperator& resolvent,
                     const CocoerciveOperator& forward, double gamma_n, double lambda_n) {
    FbStepResult out;
    if (forward.is_zero()) {
        out.p = resolvent(state.y, gamma_n);
    } else {
        out.p = resolvent(state.y - gamma_n * forward(state.y), gamma_n);
    }
    require_same_size(out.p.size(), state.y.size(), "fb_step");
    out.x_next = state.x + lambda_n * (out.p - state.y);
    return out;
}

BudgetCoefficients budget_coefficients(double gamma_n, double gamma_next, double lambda_n,
                                       double lambda_next, double beta) {
    const double a = 4.0 - 2.0 * lambda_n - gamma_n * beta;
    const double b = 4.0 - 2.0 * lambda_next - gamma_next * beta;
    if (!(a > 0.0) || !(b > 0.0) || !(lambda_next > 0.0) || !(lambda_n >= 0.0)) {
        throw std::domain_error("deviation_budget: parameters outside the admissible region");
    }
    return {lambda_n * a * b / (4.0 * lambda_next), (2.0 * lambda_n + gamma_n * beta - 2.0) / a};
}

double deviation_budget(const Vector& p, const Vector& x, const Vector& u,
                        const MetricHandle& metric, double gamma_n, double gamma_next,
                        double lambda_n, double lambda_next, double beta) {
    const auto c = budget_coefficients(gamma_n, gamma_next, lambda_n, lambda_next, beta);
    Vector w = p - x;
    if (c.u_weight != 0.0) w += c.u_weight * u;
    return std::max(0.0, c.scale * metric.norm_sq(w));
}

Vector ZeroDeviation::propose(const FbIterationView& view) {
    return Vector::Zero(view.x_next.size());
}

Vector MomentumDeviation::propose(const FbIterationView& view) { return view.x_next - view.x; }

const char* to_string(RunStatus status) {
    switch (status) {
        case RunStatus::converged: return "converged";
        case RunStatus::max_iterations: return "max_iterations";
        case RunStatus::diverged: return "diverged";
        case RunStatus::nan_detected: return "nan_detected";
    }
    return "unknown";
}

double enforce_norm_condition(Vector& u, double bound, const MetricHandle& metric, bool* shrunk) {
    double nsq = metric.norm_sq(u);
    if (shrunk) *shrunk = false;
    if (nsq <= bound) return std::max(0.0, nsq);
    if (shrunk) *shrunk = nsq > bound * (1.0 + 1e-9);
    if (!(bound > 0.0) || !std::isfinite(nsq)) {
        u.setZero();
        return 0.0;
    }
    u *= std::sqrt(bound / nsq);
    nsq = metric.norm_sq(u);
    // Rounding can leave the rescaled vector a few ulps outside the ball.
    for (int k = 0; nsq > bound && k < 8; ++k) {
        u *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon() * (1 << k);
        nsq = metric.norm_sq(u);
    }
    if (nsq > bound) {
        u.setZero();
        nsq = 0.0;
    }
    return std::max(0.0, nsq);
}

FbTrace run_fb_with_deviations(const FbProblem& problem, DeviationPolicy& policy,
                               const ParameterSchedule& schedule, const MetricHandle& metric,
                               const Vector& x0, const FbOptions& options) {
    if (auto v = validate_params(schedule, 1); !v.empty() && !v.front().n) {
        throw std::invalid_argument("run_fb_with_deviations: " + v.front().message);
    }
    require_same_size(x0.size(), metric.dim(), "run_fb_with_deviations");

    FbTrace trace;
    FbState state;
    state.x = x0;
    state.y = x0;
    state.u = Vector::Zero(x0.size());
    state.p = Vector::Zero(x0.size());
    state.n = 0;

    for (std::size_t n = 0; n < options.max_iters; ++n) {
        std::vector<ParameterViolation> bad;
        if (n == 0) check_iteration_params(schedule, 0, bad);
        check_iteration_params(schedule, n + 1, bad);
        if (!bad.empty()) {
            throw std::invalid_argument("run_fb_with_deviations: " + bad.front().message +
                                        " at n = " + std::to_string(*bad.front().n));
        }
        const double gamma = schedule.gamma(n);
        const double lambda = schedule.lambda(n);
        const double zeta = schedule.zeta(n);
        const double gamma_next = schedule.gamma(n + 1);
        const double lambda_next = schedule.lambda(n + 1);

        auto step = fb_step(state, problem.resolvent, problem.forward, gamma, lambda);
        if (!step.x_next.allFinite() || !step.p.allFinite()) {
            trace.status = RunStatus::nan_detected;
            std::ostringstream msg;
            msg << "non-finite iterate at n = " << n;
            trace.diagnostic = msg.str();
            break;
        }
        state.p = step.p;
        if (options.keep_states) trace.states.push_back(state);

        const double residual = (step.p - state.y).norm();
        const double ell_sq = deviation_budget(step.p, state.x, state.u, metric, gamma, gamma_next,
                                               lambda, lambda_next, schedule.beta);
        FbIterationView view{n, state.x, state.y, state.u, step.p, step.x_next, ell_sq, zeta,
                             metric};
        Vector u_next = policy.propose(view);
        require_same_size(u_next.size(), step.x_next.size(), "DeviationPolicy::propose");

        FbStepRecord rec;
        rec.n = n;
        rec.ell_sq = ell_sq;
        rec.bound = zeta * zeta * ell_sq;
        rec.u_norm_sq = enforce_norm_condition(u_next, rec.bound, metric, &rec.shrunk);
        rec.slack = rec.bound - rec.u_norm_sq;
        assert(rec.u_norm_sq <= rec.bound + kBoundSlack);

        state.x = std::move(step.x_next);
        state.u = std::move(u_next);
        state.y = state.x + state.u;
        state.n = n + 1;
        trace.steps.push_back(rec);
        trace.iterations = n + 1;
        if (options.observer) options.observer(state, rec);

        if (options.tol > 0.0 && residual <= options.tol) {
            trace.status = RunStatus::converged;
            break;
        }
    }
    trace.final_state = state;
    if (options.keep_states) trace.states.push_back(state);
    return trace;
}

}  // namespace dwifob
