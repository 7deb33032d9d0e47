#pragma once

#include "dwifob/linalg.hpp"
#include "dwifob/operators.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dwifob {

/// Step size gamma_n, relaxation lambda_n and deviation weight zeta_n, with
/// the margin epsilon and cocoercivity constant beta they are checked against.
/// Schedules are callables so that lambda_{n+1} and gamma_{n+1} are always
/// available to the deviation budget.
struct ParameterSchedule {
    double epsilon = 0.01;
    std::function<double(std::size_t)> gamma;
    std::function<double(std::size_t)> lambda;
    std::function<double(std::size_t)> zeta;
    double beta = 0.0;

    static ParameterSchedule constant(double epsilon, double gamma, double lambda, double zeta,
                                      double beta = 0.0);
};

struct ParameterViolation {
    /// Iteration index, or nullopt for the global epsilon/beta check.
    std::optional<std::size_t> n;
    std::string message;
};

/// Checks, for n = 0..horizon,
///     0 <= zeta_n <= 1 - eps
///     eps <= gamma_n <= (4 - 3 eps) / beta     (no upper bound when beta = 0)
///     eps <= lambda_n <= 2 - gamma_n beta / 2 - eps / 2
/// and eps in (0, min{1, 4 / (3 + beta)}). Returns an empty list when valid.
/// Bounds are compared with a 1e-12 relative slack so that e.g. zeta = 0.99
/// with eps = 0.01 is accepted.
std::vector<ParameterViolation> validate_params(const ParameterSchedule& schedule,
                                                std::size_t horizon);

/// Inner product of a strongly positive metric M.
class MetricHandle {
public:
    using Inner = std::function<double(const Vector&, const Vector&)>;

    /// `rho_samples` random vectors are drawn (seeded) to check symmetry and
    /// estimate rho with norm_sq(u) >= rho ||u||^2; throws if M does not look
    /// strongly positive.
    MetricHandle(Inner inner, Eigen::Index dim, int rho_samples = 8, std::uint64_t seed = 7);

    static MetricHandle euclidean(Eigen::Index dim);
    static MetricHandle from_matrix(const Matrix& m);

    double inner(const Vector& u, const Vector& v) const { return inner_(u, v); }
    double norm_sq(const Vector& u) const { return inner_(u, u); }
    double norm(const Vector& u) const;
    Eigen::Index dim() const { return dim_; }
    double rho() const { return rho_; }

private:
    Inner inner_;
    Eigen::Index dim_ = 0;
    double rho_ = 0.0;
};

struct FbState {
    Vector x;
    Vector y;
    Vector u;
    Vector p;
    std::size_t n = 0;
};

/// The monotone inclusion 0 in A x + C x in the metric M, given through
///   resolvent(v, gamma) = (M + gamma A)^{-1} M v
///   forward(v)          = M^{-1} C v
/// so that (M + gamma A)^{-1}(M - gamma C) y = resolvent(y - gamma forward(y)).
/// For M = I these are J_{gamma A} and C.
struct FbProblem {
    ResolventOperator resolvent;
    CocoerciveOperator forward = CocoerciveOperator::zero();
};

struct FbStepResult {
    Vector p;
    Vector x_next;
};

/// p_n = (M + gamma A)^{-1}(M - gamma C) y_n,  x_{n+1} = x_n + lambda (p_n - y_n).
FbStepResult fb_step(const FbState& state, const ResolventOperator& resolvent,
                     const CocoerciveOperator& forward, double gamma_n, double lambda_n);

/// The squared deviation budget l_n^2:
///
///   lambda_n (4 - 2 lambda_n - gamma_n beta)(4 - 2 lambda_{n+1} - gamma_{n+1} beta)
///   ------------------------------------------------------------------------- * ||w||_M^2
///                                4 lambda_{n+1}
///
/// with w = p_n - x_n + (2 lambda_n + gamma_n beta - 2)/(4 - 2 lambda_n - gamma_n beta) u_n.
/// Tiny negative results from cancellation are clamped to 0. Throws
/// std::domain_error when a denominator factor is not positive.
double deviation_budget(const Vector& p, const Vector& x, const Vector& u,
                        const MetricHandle& metric, double gamma_n, double gamma_next,
                        double lambda_n, double lambda_next, double beta);

/// The leading coefficient and the u-weight of deviation_budget, split out so
/// that callers with their own M-norm evaluation can reuse them.
struct BudgetCoefficients {
    double scale = 0.0;     // lambda_n(4-2lambda_n-gamma_n beta)(4-2lambda_{n+1}-gamma_{n+1} beta)/(4 lambda_{n+1})
    double u_weight = 0.0;  // (2 lambda_n + gamma_n beta - 2)/(4 - 2 lambda_n - gamma_n beta)
};
BudgetCoefficients budget_coefficients(double gamma_n, double gamma_next, double lambda_n,
                                       double lambda_next, double beta);

/// What a deviation policy sees at iteration n, after x_{n+1} is formed.
struct FbIterationView {
    std::size_t n;
    const Vector& x;       // x_n
    const Vector& y;       // y_n
    const Vector& u;       // u_n
    const Vector& p;       // p_n
    const Vector& x_next;  // x_{n+1}
    double ell_sq;         // l_n^2
    double zeta;           // zeta_n
    const MetricHandle& metric;
};

/// Chooses u_{n+1}. The engine checks the proposal against the norm condition
/// ||u_{n+1}||_M^2 <= zeta_n^2 l_n^2 and shrinks it radially if it is too long.
class DeviationPolicy {
public:
    virtual ~DeviationPolicy() = default;
    virtual Vector propose(const FbIterationView& view) = 0;
    virtual std::string name() const = 0;
};

/// u = 0: plain relaxed forward-backward splitting.
class ZeroDeviation final : public DeviationPolicy {
public:
    Vector propose(const FbIterationView& view) override;
    std::string name() const override { return "zero"; }
};

/// u_{n+1} = x_{n+1} - x_n, left to the engine to fit within the budget.
class MomentumDeviation final : public DeviationPolicy {
public:
    Vector propose(const FbIterationView& view) override;
    std::string name() const override { return "momentum"; }
};

struct FbStepRecord {
    std::size_t n = 0;
    double ell_sq = 0.0;
    double bound = 0.0;      // zeta_n^2 l_n^2
    double u_norm_sq = 0.0;  // ||u_{n+1}||_M^2 after enforcement
    double slack = 0.0;      // bound - u_norm_sq
    bool shrunk = false;     // proposal exceeded the bound beyond rounding
};

enum class RunStatus { converged, max_iterations, diverged, nan_detected };

const char* to_string(RunStatus status);

struct FbOptions {
    std::size_t max_iters = 1000;
    /// Stop once ||p_n - y_n|| (Euclidean) falls to tol; 0 disables.
    double tol = 0.0;
    bool keep_states = false;
    std::function<void(const FbState&, const FbStepRecord&)> observer;
};

struct FbTrace {
    std::vector<FbState> states;  // filled when keep_states; states[k] is the state at n = k
    std::vector<FbStepRecord> steps;
    FbState final_state;
    RunStatus status = RunStatus::max_iterations;
    std::size_t iterations = 0;
    std::string diagnostic;
};

/// Forward-backward splitting with one deviation vector:
///
///   p_n     = (M + gamma_n A)^{-1}(M - gamma_n C) y_n
///   x_{n+1} = x_n + lambda_n (p_n - y_n)
///   u_{n+1} = policy proposal, shortened to satisfy the norm condition
///   y_{n+1} = x_{n+1} + u_{n+1}
///
/// starting from y_0 = x_0, u_0 = 0. Throws std::invalid_argument if the
/// schedule violates its bounds at an iteration it reaches.
FbTrace run_fb_with_deviations(const FbProblem& problem, DeviationPolicy& policy,
                               const ParameterSchedule& schedule, const MetricHandle& metric,
                               const Vector& x0, const FbOptions& options);

/// Radially shrinks `u` (in place) so that metric.norm_sq(u) <= bound.
/// Returns the final squared norm.
double enforce_norm_condition(Vector& u, double bound, const MetricHandle& metric,
                              bool* shrunk = nullptr);

}  // namespace dwifob
