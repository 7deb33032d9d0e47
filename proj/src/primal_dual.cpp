#include "dwifob/primal_dual.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dwifob {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

Vector stack(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

}  // namespace

Vector PrimalDualPoint::stacked() const { return stack(x, mu); }

PrimalDualPoint PrimalDualPoint::split(const Vector& z, Eigen::Index primal_dim) {
    if (primal_dim < 0 || primal_dim > z.size()) {
        throw DimensionError("PrimalDualPoint::split: primal dimension out of range");
    }
    return {z.head(primal_dim), z.tail(z.size() - primal_dim)};
}

PdMetric::PdMetric(double tau, double sigma, LinearOperator op, double norm_l)
    : tau_(tau), sigma_(sigma), norm_l_(norm_l), op_(std::move(op)) {
    if (!(tau > 0.0) || !(sigma > 0.0)) throw std::invalid_argument("PdMetric: tau, sigma must be > 0");
    if (!(norm_l >= 0.0) || !std::isfinite(norm_l)) {
        throw std::invalid_argument("PdMetric: ||L|| must be finite and >= 0");
    }
    if (!(sigma * tau * norm_l * norm_l < 1.0)) {
        std::ostringstream msg;
        msg << "PdMetric: sigma tau ||L||^2 = " << sigma * tau * norm_l * norm_l
            << " must be < 1 for M to be strongly positive";
        throw std::invalid_argument(msg.str());
    }
}

PdMetric PdMetric::from_step_rule(LinearOperator op, double norm_l, StepRule rule, double factor) {
    if (!(norm_l > 0.0)) throw std::invalid_argument("PdMetric: ||L|| must be > 0 for a step rule");
    const double step = rule == StepRule::over_norm ? factor / norm_l : factor / (norm_l * norm_l);
    return {step, step, std::move(op), norm_l};
}

double PdMetric::norm_sq(const PrimalDualPoint& z) const {
    return pd_metric_norm_sq(z.x, z.mu, op_.apply(z.x), tau_, sigma_);
}

double PdMetric::norm(const PrimalDualPoint& z) const { return std::sqrt(std::max(0.0, norm_sq(z))); }

MetricHandle PdMetric::handle() const {
    const auto n = op_.cols();
    const auto op = op_;
    const double tau = tau_;
    const double sigma = sigma_;
    return {[op, n, tau, sigma](const Vector& a, const Vector& b) {
                const auto ax = a.head(n);
                const auto am = a.tail(a.size() - n);
                const auto bx = b.head(n);
                const auto bm = b.tail(b.size() - n);
                // <a, M b> = <ax, bx> - tau <ax, L^* bm> - tau <am, L bx> + (tau/sigma)<am, bm>
                return ax.dot(bx) + (tau / sigma) * am.dot(bm) -
                       tau * (am.dot(op.apply(bx)) + bm.dot(op.apply(ax)));
            },
            n + op_.rows()};
}

Matrix PdMetric::dense() const {
    const auto n = op_.cols();
    const auto k = op_.rows();
    const Matrix l = op_.to_dense();
    Matrix m = Matrix::Zero(n + k, n + k);
    m.topLeftCorner(n, n).setIdentity();
    m.topRightCorner(n, k) = -tau_ * l.transpose();
    m.bottomLeftCorner(k, n) = -tau_ * l;
    m.bottomRightCorner(k, k) = (tau_ / sigma_) * Matrix::Identity(k, k);
    return m;
}

double pd_metric_norm_sq(const Vector& u_x, const Vector& u_mu, const Vector& l_u_x, double tau,
                         double sigma) {
    require_same_size(u_mu.size(), l_u_x.size(), "pd_metric_norm_sq");
    return u_x.squaredNorm() + (tau / sigma) * u_mu.squaredNorm() - 2.0 * tau * u_mu.dot(l_u_x);
}

PrimalDualPoint pd_resolvent_pair(const PrimalDualPoint& z_hat, const PdProblem& problem,
                                  const PdMetric& metric) {
    const double tau = metric.tau();
    const double sigma = metric.sigma();
    const LinearOperator& op = problem.op;
    PrimalDualPoint p;
    if (problem.c.is_zero()) {
        p.x = problem.resolvent_a(z_hat.x - tau * op.adjoint(z_hat.mu), tau);
    } else {
        p.x = problem.resolvent_a(z_hat.x - tau * op.adjoint(z_hat.mu) - tau * problem.c(z_hat.x),
                                  tau);
    }
    p.mu = problem.resolvent_b_conj(z_hat.mu + sigma * op.apply(2.0 * p.x - z_hat.x), sigma);
    return p;
}

PrimalDualPoint cp_step(const PrimalDualPoint& z, const PdProblem& problem, const PdMetric& metric) {
    const double tau = metric.tau();
    const double sigma = metric.sigma();
    PrimalDualPoint next;
    next.x = problem.resolvent_a(z.x - tau * problem.op.adjoint(z.mu), tau);
    next.mu = problem.resolvent_b_conj(z.mu + sigma * problem.op.apply(2.0 * next.x - z.x), sigma);
    return next;
}

CpTrace run_cp(const PdProblem& problem, const PdMetric& metric, const PrimalDualPoint& z0,
               const CpOptions& options) {
    CpTrace trace;
    trace.z = z0;
    trace.wall_ns.reserve(std::min<std::size_t>(options.max_iters, 1u << 20));
    for (std::size_t n = 0; n < options.max_iters; ++n) {
        const auto t0 = Clock::now();
        PrimalDualPoint next = cp_step(trace.z, problem, metric);
        trace.wall_ns.push_back(elapsed_ns(t0));
        trace.last_dx = (next.x - trace.z.x).norm();
        trace.last_dmu = (next.mu - trace.z.mu).norm();
        trace.z = std::move(next);
        trace.iterations = n + 1;
        if (!trace.z.x.allFinite() || !trace.z.mu.allFinite()) {
            trace.status = RunStatus::nan_detected;
            return trace;
        }
        if (options.observer && options.observer(n + 1, trace.z)) {
            trace.status = RunStatus::converged;
            return trace;
        }
        if (options.successive_tol > 0.0 && trace.last_dx <= options.successive_tol &&
            trace.last_dmu <= options.successive_tol) {
            trace.status = RunStatus::converged;
            return trace;
        }
    }
    trace.status = RunStatus::max_iterations;
    return trace;
}

PdTrace run_pd_dwifob(const PdProblem& problem, const DwifobConfig& config, const PdMetric& metric,
                      EvalMode mode, const PrimalDualPoint& z0, const PdOptions& options) {
    const LinearOperator& op = problem.op;
    const auto n_primal = op.cols();
    const auto n_dual = op.rows();
    require_same_size(z0.x.size(), n_primal, "run_pd_dwifob (x0)");
    require_same_size(z0.mu.size(), n_dual, "run_pd_dwifob (mu0)");
    if (config.m < 1) throw std::invalid_argument("run_pd_dwifob: memory must be >= 1");
    if (auto bad = validate_params(config.schedule, 1); !bad.empty()) {
        throw std::invalid_argument("run_pd_dwifob: " + bad.front().message);
    }

    const bool recursive = mode == EvalMode::recursive;
    const double tau = metric.tau();
    const double sigma = metric.sigma();
    const double beta = config.schedule.beta;
    const auto& sched = config.schedule;

    PdTrace trace;
    trace.records.reserve(std::min<std::size_t>(options.max_iters, 1u << 20));

    Vector x = z0.x;
    Vector mu = z0.mu;
    Vector x_hat = x;
    Vector mu_hat = mu;
    Vector u_x = Vector::Zero(n_primal);
    Vector u_mu = Vector::Zero(n_dual);

    ResidualHistory history(config.m);
    RecursiveCache cache;
    Vector l_x0;  // L x_0 until the first snapshot image enters the ring
    auto current_l_x = [&]() -> const Vector& {
        return cache.l_snapshots.empty() ? l_x0 : cache.l_snapshots.back();
    };
    if (recursive) {
        l_x0 = op.apply(x);
        cache.l_x_hat = l_x0;
    }

    Vector l_ref;
    double d0 = std::numeric_limits<double>::quiet_NaN();
    if (options.reference) {
        require_same_size(options.reference->x.size(), n_primal, "run_pd_dwifob (reference)");
        require_same_size(options.reference->mu.size(), n_dual, "run_pd_dwifob (reference)");
        if (recursive) l_ref = op.apply(options.reference->x);
        d0 = metric.norm({z0.x - options.reference->x, z0.mu - options.reference->mu});
        trace.initial_distance = d0;
    }

    for (std::size_t n = 0; n < options.max_iters; ++n) {
        const auto t0 = Clock::now();
        const double lambda = sched.lambda(n);
        const double lambda_next = sched.lambda(n + 1);
        const double zeta = sched.zeta(n);
        // The primal-dual method has no separate step schedule: gamma_n = tau throughout.
        const auto coeff = budget_coefficients(tau, tau, lambda, lambda_next, beta);

        PrimalDualPoint p;
        if (recursive) {
            const Vector l_adj = op.adjoint(mu_hat);
            Vector v = x_hat - tau * l_adj;
            if (!problem.c.is_zero()) v -= tau * problem.c(x_hat);
            p.x = problem.resolvent_a(v, tau);
            cache.l_p = op.apply(p.x);
            p.mu = problem.resolvent_b_conj(mu_hat + sigma * (2.0 * cache.l_p - cache.l_x_hat), sigma);
        } else {
            p = pd_resolvent_pair({x_hat, mu_hat}, problem, metric);
        }

        // x_{n+1} = x_n + lambda (p - x_hat_n), written with x_n = x_hat_n - u_n so
        // that lambda = 1, u = 0 gives p bit for bit.
        Vector x_next = (1.0 - lambda) * x_hat + lambda * p.x - u_x;
        Vector mu_next = (1.0 - lambda) * mu_hat + lambda * p.mu - u_mu;
        // L x_n and L u_n as held at the start of the iteration.
        Vector l_x_n;
        Vector l_u_n;
        Vector l_x_next;
        if (recursive) {
            l_x_n = current_l_x();
            l_u_n = cache.l_x_hat - l_x_n;
            l_x_next = (1.0 - lambda) * cache.l_x_hat + lambda * cache.l_p - l_u_n;
        }

        // Budget vector w = p - z_n + c u_n, and ||w||_M^2.
        const Vector w_x = coeff.u_weight == 0.0 ? Vector(p.x - x)
                                                 : Vector(p.x - x + coeff.u_weight * u_x);
        const Vector w_mu = coeff.u_weight == 0.0
                                ? Vector(p.mu - mu)
                                : Vector(p.mu - mu + coeff.u_weight * u_mu);
        Vector l_w;
        if (recursive) {
            l_w = cache.l_p - l_x_n;
            if (coeff.u_weight != 0.0) l_w += coeff.u_weight * l_u_n;
        } else {
            l_w = op.apply(w_x);
        }
        const double w_norm_sq = pd_metric_norm_sq(w_x, w_mu, l_w, tau, sigma);
        const double ell_sq = std::max(0.0, coeff.scale * w_norm_sq);

        history.push(stack(x_next - x_hat, mu_next - mu_hat), stack(x_next, mu_next));
        if (recursive) {
            cache.l_snapshots.push_back(l_x_next);
            if (cache.l_snapshots.size() > config.m + 1) cache.l_snapshots.pop_front();
            l_x0.resize(0);
        }

        const auto weights = solve_extrapolation_weights_gram(history.gram(), config.xi);
        Vector u_hat_x = Vector::Zero(n_primal);
        Vector u_hat_mu = Vector::Zero(n_dual);
        Vector l_u_hat = Vector::Zero(n_dual);
        if (weights.degenerate) {
            ++trace.degenerate_steps;
        } else {
            const Vector combo = history.combine_snapshots(weights.alpha);
            u_hat_x = x_next - combo.head(n_primal);
            u_hat_mu = mu_next - combo.tail(n_dual);
            if (recursive) {
                l_u_hat = l_x_next;
                for (std::size_t i = 0; i < cache.l_snapshots.size(); ++i) {
                    l_u_hat -= weights.alpha[static_cast<Eigen::Index>(i)] * cache.l_snapshots[i];
                }
            } else {
                l_u_hat = op.apply(u_hat_x);
            }
        }
        if (recursive) cache.l_u_hat = l_u_hat;

        const double u_hat_norm =
            std::sqrt(std::max(0.0, pd_metric_norm_sq(u_hat_x, u_hat_mu, l_u_hat, tau, sigma)));
        const double s = deviation_scale_factor(u_hat_norm, ell_sq, zeta, config.eps_scale);
        Vector u_next_x = s * u_hat_x;
        Vector u_next_mu = s * u_hat_mu;
        Vector l_u_next = recursive ? Vector(s * l_u_hat) : op.apply(u_next_x);

        PdIterationRecord rec;
        rec.n = n;
        rec.memory = history.memory();
        rec.ell_sq = ell_sq;
        rec.bound = zeta * zeta * ell_sq;
        rec.degenerate = weights.degenerate;
        double u_norm_sq = pd_metric_norm_sq(u_next_x, u_next_mu, l_u_next, tau, sigma);
        if (u_norm_sq > rec.bound) {
            // The scaled candidate sits on the sphere by construction, so only
            // flag excess beyond rounding.
            rec.shrunk = u_norm_sq > rec.bound * (1.0 + 1e-9);
            double f = u_norm_sq > 0.0 && rec.bound > 0.0 ? std::sqrt(rec.bound / u_norm_sq) : 0.0;
            for (int k = 0; k < 10; ++k) {
                u_next_x *= f;
                u_next_mu *= f;
                l_u_next *= f;
                u_norm_sq = pd_metric_norm_sq(u_next_x, u_next_mu, l_u_next, tau, sigma);
                if (u_norm_sq <= rec.bound) break;
                f = 1.0 - 4.0 * std::numeric_limits<double>::epsilon() * (1 << k);
            }
            if (u_norm_sq > rec.bound) {
                u_next_x.setZero();
                u_next_mu.setZero();
                l_u_next.setZero();
                u_norm_sq = 0.0;
            }
        }
        rec.u_norm_sq = std::max(0.0, u_norm_sq);
        rec.slack = rec.bound - rec.u_norm_sq;

        Vector x_hat_next = x_next + u_next_x;
        Vector mu_hat_next = mu_next + u_next_mu;
        if (recursive) cache.l_x_hat = l_x_next + l_u_next;
        rec.wall_ns = elapsed_ns(t0);

        if (!x_next.allFinite() || !mu_next.allFinite() || !x_hat_next.allFinite() ||
            !mu_hat_next.allFinite()) {
            trace.status = RunStatus::nan_detected;
            std::ostringstream msg;
            msg << "non-finite iterate at n = " << n;
            trace.diagnostic = msg.str();
            trace.iterations = n + 1;
            trace.records.push_back(rec);
            break;
        }

        if (options.reference) {
            const Vector dx = x_next - options.reference->x;
            const Vector dmu = mu_next - options.reference->mu;
            const Vector l_dx = recursive ? Vector(l_x_next - l_ref) : op.apply(dx);
            const double dist_sq = pd_metric_norm_sq(dx, dmu, l_dx, tau, sigma);
            rec.m_distance = std::sqrt(std::max(0.0, dist_sq));
            if (options.compute_lyapunov) {
                if (!(lambda > 0.0 && lambda < 2.0)) {
                    throw std::domain_error("run_pd_dwifob: V_n needs 0 < lambda_n < 2");
                }
                const double c = (lambda - 1.0) / (2.0 - lambda);
                double inner_sq = w_norm_sq;
                if (c != coeff.u_weight) {
                    const Vector v_x = p.x - x + c * u_x;
                    const Vector v_mu = p.mu - mu + c * u_mu;
                    const Vector l_v = recursive ? Vector(cache.l_p - l_x_n + c * l_u_n)
                                                 : op.apply(v_x);
                    inner_sq = pd_metric_norm_sq(v_x, v_mu, l_v, tau, sigma);
                }
                rec.lyapunov = dist_sq + lambda * (2.0 - lambda) * inner_sq;
            }
        }

        if (recursive && options.audit_period > 0 && (n + 1) % options.audit_period == 0) {
            const Vector direct_lx = op.apply(x_next);
            const Vector direct_lxh = op.apply(x_hat_next);
            const double direct_u_sq =
                pd_metric_norm_sq(u_next_x, u_next_mu, op.apply(u_next_x), tau, sigma);
            const double norm_drift =
                direct_u_sq > 0.0 ? std::abs(u_norm_sq - direct_u_sq) / direct_u_sq : 0.0;
            const double drift =
                std::max({(direct_lx - l_x_next).norm() / (1.0 + direct_lx.norm()),
                          (direct_lxh - cache.l_x_hat).norm() / (1.0 + direct_lxh.norm()),
                          norm_drift});
            trace.max_drift = std::max(trace.max_drift, drift);
            if (drift > options.drift_warning) trace.drift_warning = true;
        }

        x = std::move(x_next);
        mu = std::move(mu_next);
        x_hat = std::move(x_hat_next);
        mu_hat = std::move(mu_hat_next);
        u_x = std::move(u_next_x);
        u_mu = std::move(u_next_mu);
        trace.records.push_back(rec);
        trace.iterations = n + 1;

        bool stop = false;
        if (options.observer) {
            const PrimalDualPoint z_view{x, mu};
            const PrimalDualPoint z_hat_view{x_hat, mu_hat};
            const PrimalDualPoint u_view{u_x, u_mu};
            stop = options.observer(PdIterationView{trace.records.back(), z_view, z_hat_view,
                                                    u_view, recursive ? &cache : nullptr});
        }
        if (stop || (options.reference && options.tol > 0.0 && d0 > 0.0 &&
                     rec.m_distance <= options.tol * d0)) {
            trace.status = RunStatus::converged;
            break;
        }
    }
    trace.z = {x, mu};
    return trace;
}

double lyapunov_V(const PrimalDualPoint& z_next, const PrimalDualPoint& p,
                  const PrimalDualPoint& z_n, const PrimalDualPoint& u_n,
                  const PrimalDualPoint& reference, double lambda_n, const PdMetric& metric) {
    if (!(lambda_n > 0.0 && lambda_n < 2.0)) {
        throw std::domain_error("lyapunov_V: lambda_n must lie in (0, 2)");
    }
    const double c = (lambda_n - 1.0) / (2.0 - lambda_n);
    const double dist = metric.norm_sq({z_next.x - reference.x, z_next.mu - reference.mu});
    const double inner =
        metric.norm_sq({p.x - z_n.x + c * u_n.x, p.mu - z_n.mu + c * u_n.mu});
    return dist + lambda_n * (2.0 - lambda_n) * inner;
}

FbProblem as_fb_problem(const PdProblem& problem, const PdMetric& metric) {
    if (!problem.c.is_zero()) {
        throw std::invalid_argument("as_fb_problem: only C = 0 is supported");
    }
    const auto n = problem.op.cols();
    FbProblem out;
    out.resolvent = {[problem, metric, n](const Vector& v, double gamma) {
                         if (std::abs(gamma - metric.tau()) > 1e-15 * metric.tau()) {
                             throw std::invalid_argument(
                                 "as_fb_problem: the step must equal tau");
                         }
                         return pd_resolvent_pair(PrimalDualPoint::split(v, n), problem, metric)
                             .stacked();
                     },
                     "pd_resolvent_pair"};
    return out;
}

}  // namespace dwifob
