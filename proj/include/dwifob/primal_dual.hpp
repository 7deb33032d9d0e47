#pragma once

#include "dwifob/dwifob.hpp"
#include "dwifob/fb_core.hpp"
#include "dwifob/linalg.hpp"
#include "dwifob/operators.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

namespace dwifob {

/// z = (x, mu), primal in R^n and dual in R^N.
struct PrimalDualPoint {
    Vector x;
    Vector mu;

    Vector stacked() const;
    static PrimalDualPoint split(const Vector& z, Eigen::Index primal_dim);
};

enum class StepRule { over_norm, over_norm_sq };

/// The block metric
///
///     M = [      I     -tau L^* ]
///         [ -tau L    (tau/sigma) I ]
///
/// strongly positive iff sigma tau ||L||^2 < 1, which the constructor enforces.
class PdMetric {
public:
    PdMetric(double tau, double sigma, LinearOperator op, double norm_l);

    /// tau = sigma = factor / ||L|| (over_norm) or factor / ||L||^2 (over_norm_sq).
    static PdMetric from_step_rule(LinearOperator op, double norm_l, StepRule rule,
                                   double factor = 0.99);

    double tau() const { return tau_; }
    double sigma() const { return sigma_; }
    double norm_l() const { return norm_l_; }
    const LinearOperator& op() const { return op_; }

    /// ||z||_M^2 with one application of L.
    double norm_sq(const PrimalDualPoint& z) const;
    double norm(const PrimalDualPoint& z) const;

    /// The same metric on stacked vectors (x, mu).
    MetricHandle handle() const;

    /// Dense M; for tests on small operators.
    Matrix dense() const;

private:
    double tau_;
    double sigma_;
    double norm_l_;
    LinearOperator op_;
};

/// ||u_x||^2 + (tau/sigma)||u_mu||^2 - 2 tau <u_mu, L u_x>, with L u_x supplied by
/// the caller. May come out slightly negative when L u_x carries drift.
double pd_metric_norm_sq(const Vector& u_x, const Vector& u_mu, const Vector& l_u_x, double tau,
                         double sigma);

/// 0 in A x + L^* B(L x) + C x. resolvent_a(v, tau) = J_{tau A}(v) and
/// resolvent_b_conj(v, sigma) = J_{sigma B^{-1}}(v).
struct PdProblem {
    LinearOperator op;
    ResolventOperator resolvent_a;
    ResolventOperator resolvent_b_conj;
    CocoerciveOperator c = CocoerciveOperator::zero();
};

/// The Gauss-Seidel resolvent pair
///     p_x  = J_{tau A}(x_hat - tau L^* mu_hat - tau C x_hat)
///     p_mu = J_{sigma B^{-1}}(mu_hat + sigma L(2 p_x - x_hat)),
/// i.e. (M + tau A_pd)^{-1}(M - tau C_pd) z_hat for the block operators of the
/// primal-dual inclusion.
PrimalDualPoint pd_resolvent_pair(const PrimalDualPoint& z_hat, const PdProblem& problem,
                                  const PdMetric& metric);

/// One Chambolle-Pock iteration (the resolvent pair with C = 0).
PrimalDualPoint cp_step(const PrimalDualPoint& z, const PdProblem& problem, const PdMetric& metric);

struct CpOptions {
    std::size_t max_iters = 1000;
    /// Stop when both ||x_n - x_{n-1}|| and ||mu_n - mu_{n-1}|| are <= this; 0 disables.
    double successive_tol = 0.0;
    /// Called after every iteration with (n + 1, z_{n+1}); returning true stops.
    std::function<bool(std::size_t, const PrimalDualPoint&)> observer;
};

struct CpTrace {
    PrimalDualPoint z;
    std::size_t iterations = 0;
    RunStatus status = RunStatus::max_iterations;
    double last_dx = 0.0;
    double last_dmu = 0.0;
    std::vector<std::int64_t> wall_ns;  // per-iteration, observer excluded
};

/// Standalone Chambolle-Pock loop.
CpTrace run_cp(const PdProblem& problem, const PdMetric& metric, const PrimalDualPoint& z0,
               const CpOptions& options);

enum class EvalMode { recursive, direct };

/// L-images kept by the recursive evaluation: L x_hat_n, the latest L p_{x,n}
/// and L u_hat_{x,n}, and L x_{j+1} over the history window (whose newest
/// entry is L x_{n+1}). That is m_n + 4 dual-sized vectors.
struct RecursiveCache {
    Vector l_x_hat;
    Vector l_p;
    Vector l_u_hat;
    std::deque<Vector> l_snapshots;

    const Vector& l_x() const { return l_snapshots.back(); }
    std::size_t stored_vectors() const { return 3 + l_snapshots.size(); }
};

struct PdIterationRecord {
    std::size_t n = 0;
    std::size_t memory = 0;      // m_n
    std::int64_t wall_ns = 0;    // algorithm work only, diagnostics excluded
    double ell_sq = 0.0;
    double bound = 0.0;          // zeta_n^2 l_n^2
    double u_norm_sq = 0.0;      // ||u_{n+1}||_M^2 as evaluated in the run's mode
    double slack = 0.0;
    double m_distance = std::numeric_limits<double>::quiet_NaN();  // ||z_{n+1} - z*||_M
    double lyapunov = std::numeric_limits<double>::quiet_NaN();    // V_n
    bool degenerate = false;
    bool shrunk = false;          // u exceeded the bound beyond rounding
};

/// Read-only view passed to the per-iteration observer.
struct PdIterationView {
    const PdIterationRecord& record;
    const PrimalDualPoint& z;      // z_{n+1}
    const PrimalDualPoint& z_hat;  // z_hat_{n+1}
    const PrimalDualPoint& u;      // u_{n+1}
    const RecursiveCache* cache;   // null in direct mode
};

struct PdOptions {
    std::size_t max_iters = 1000;
    /// Reference solution for distance and Lyapunov diagnostics.
    std::optional<PrimalDualPoint> reference;
    /// With a reference: stop once ||z_n - z*||_M <= tol ||z_0 - z*||_M; 0 disables.
    double tol = 0.0;
    bool compute_lyapunov = false;
    /// Recursive mode: every `audit_period` iterations (0 disables) compare the
    /// cached images of x and x_hat and the recursive ||u||_M^2 with direct
    /// evaluations. Audits apply L and are excluded from the iteration time.
    std::size_t audit_period = 0;
    double drift_warning = 1e-6;
    std::function<bool(const PdIterationView&)> observer;
};

struct PdTrace {
    std::vector<PdIterationRecord> records;
    PrimalDualPoint z;
    std::size_t iterations = 0;
    RunStatus status = RunStatus::max_iterations;
    double initial_distance = std::numeric_limits<double>::quiet_NaN();
    double max_drift = 0.0;
    bool drift_warning = false;
    std::size_t degenerate_steps = 0;
    std::string diagnostic;
};

/// Primal-dual DWIFOB. Per iteration: the resolvent pair at z_hat_n, the
/// relaxation z_{n+1} = z_n + lambda_n (p_n - z_hat_n), the Anderson-type
/// candidate u_hat from residuals r_j = z_{j+1} - z_hat_j, the budget l_n^2
/// (gamma_n = tau), u_{n+1} = zeta_n |l_n| u_hat / (eps + ||u_hat||_M), and
/// z_hat_{n+1} = z_{n+1} + u_{n+1}.
///
/// In recursive mode L and L^* are each applied once per iteration after the
/// first; every other L-image is updated from cached ones. Direct mode
/// recomputes all images and M-norms.
PdTrace run_pd_dwifob(const PdProblem& problem, const DwifobConfig& config, const PdMetric& metric,
                      EvalMode mode, const PrimalDualPoint& z0, const PdOptions& options);

/// V_n = ||z_{n+1} - z*||_M^2
///       + lambda_n (2 - lambda_n) ||p_n - z_n + (lambda_n - 1)/(2 - lambda_n) u_n||_M^2.
/// Throws std::domain_error unless 0 < lambda_n < 2.
double lyapunov_V(const PrimalDualPoint& z_next, const PrimalDualPoint& p,
                  const PrimalDualPoint& z_n, const PrimalDualPoint& u_n,
                  const PrimalDualPoint& reference, double lambda_n, const PdMetric& metric);

/// The primal-dual problem written for the generic engine in the metric M:
/// resolvent(v) = stacked pd_resolvent_pair, forward = 0. Requires C = 0.
FbProblem as_fb_problem(const PdProblem& problem, const PdMetric& metric);

}  // namespace dwifob
