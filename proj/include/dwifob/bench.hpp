#pragma once

#include "dwifob/primal_dual.hpp"
#include "dwifob/svm_problem.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dwifob {

enum class Algorithm { cp, pd_dwifob, raa };
enum class CostModel { wallclock, deterministic };

const char* to_string(Algorithm a);
const char* to_string(StepRule r);
const char* to_string(EvalMode m);
const char* to_string(CostModel c);
Algorithm parse_algorithm(const std::string& s);
StepRule parse_step_rule(const std::string& s);
EvalMode parse_eval_mode(const std::string& s);
CostModel parse_cost_model(const std::string& s);

struct BenchConfig {
    std::filesystem::path dataset;
    double delta = 0.5;
    Algorithm algorithm = Algorithm::pd_dwifob;
    std::size_t m = 5;
    double xi = 1e-5;
    double lambda = 1.0;
    double zeta = 0.99;
    /// The eps in u = zeta |l| u_hat / (eps + ||u_hat||_M).
    double eps_scale = 0.0;
    StepRule step_rule = StepRule::over_norm;
    double step_factor = 0.99;
    EvalMode mode = EvalMode::recursive;
    /// (x0, mu0) = init_scale * 1; 0 starts at the origin.
    double init_scale = 0.0;
    /// Target normalised M-distance to the reference.
    double tol = 1e-8;
    std::size_t max_iters = 100000;
    /// Seed of the power-iteration start vector.
    std::uint64_t seed = 0;
    std::filesystem::path cache_dir;
    bool record_lyapunov = false;
    bool record_objective = false;
    std::size_t audit_period = 0;
};

namespace record_flags {
constexpr std::uint32_t shrunk = 1u << 0;      // deviation pulled back into the ball
constexpr std::uint32_t degenerate = 1u << 1;  // extrapolation weights fell back
constexpr std::uint32_t nonfinite = 1u << 2;
constexpr std::uint32_t diverged = 1u << 3;
}  // namespace record_flags

struct IterationRecord {
    std::size_t n = 0;
    std::int64_t wall_ns = 0;
    double m_dist = std::numeric_limits<double>::quiet_NaN();
    double m_dist_normalized = std::numeric_limits<double>::quiet_NaN();
    /// Deterministic-model cost of producing this iterate (0 for n = 0).
    double model_cost = 0.0;
    double scaled_n = std::numeric_limits<double>::quiet_NaN();
    double V_n = std::numeric_limits<double>::quiet_NaN();
    double slack = std::numeric_limits<double>::quiet_NaN();
    double objective = std::numeric_limits<double>::quiet_NaN();
    std::uint32_t flags = 0;
};

/// Problem data shared by every run on one (dataset, delta, step rule).
struct BenchContext {
    SvmProblem problem;
    double norm_l = 0.0;
    std::size_t norm_iterations = 0;
    PdMetric metric;
    ReferenceSolution reference;
};

BenchContext prepare_context(const BenchConfig& config);

struct BenchSummary {
    RunStatus status = RunStatus::max_iterations;
    std::size_t iterations = 0;
    std::optional<std::size_t> iterations_to_tol;
    double final_normalized = std::numeric_limits<double>::quiet_NaN();
    double initial_distance = std::numeric_limits<double>::quiet_NaN();
    double mean_model_cost = 0.0;
    double mean_wall_ns = 0.0;
    std::size_t degenerate_steps = 0;
    std::size_t shrunk_steps = 0;
    double max_drift = 0.0;
    bool diverged = false;
    std::string diagnostic;
};

struct BenchResult {
    std::vector<IterationRecord> records;  // records[0] is the starting point
    BenchSummary summary;
};

/// The schedule used for pd-DWIFOB runs: constant lambda and zeta, gamma = tau,
/// and the largest epsilon (capped below 1) for which the bounds hold. Throws
/// std::invalid_argument when no admissible epsilon exists.
ParameterSchedule bench_schedule(const BenchConfig& config, double tau);

BenchResult run_benchmark(const BenchConfig& config, const BenchContext& context);
BenchResult run_benchmark(const BenchConfig& config);

/// Deterministic per-iteration cost in flops. L and L^* applications count
/// 2 nnz each, an axpy-type update 2 per entry, a scale, copy or prox 1 per
/// entry, a dot product 2 per entry, and the k x k weight solve k^3/3 + 2k^2
/// with k = m_n + 1 history columns.
struct CostShape {
    double n = 0;    // primal dimension
    double N = 0;    // dual dimension
    double nnz = 0;  // nonzeros of L
};
CostShape cost_shape(const LinearOperator& op);
double cp_iteration_cost(const CostShape& s);
double pd_dwifob_iteration_cost(const CostShape& s, std::size_t k, EvalMode mode,
                                bool budget_has_u_term);
double raa_iteration_cost(const CostShape& s, std::size_t k);

/// Per-iteration cost ratio of `records` against `baseline`: mean wall time
/// after a 50-iteration warmup (wallclock) or mean model cost (deterministic).
/// Throws std::invalid_argument when the baseline is empty.
double cost_ratio(const std::vector<IterationRecord>& records,
                  const std::vector<IterationRecord>& baseline, CostModel model);

/// Copy of `records` with scaled_n = n * cost_ratio(...).
std::vector<IterationRecord> scaled_iteration_series(const std::vector<IterationRecord>& records,
                                                     CostModel model,
                                                     const std::vector<IterationRecord>& baseline);

constexpr std::size_t kWallclockWarmup = 50;

/// First n with m_dist_normalized <= tol, if any.
std::optional<std::size_t> first_reaching(const std::vector<IterationRecord>& records, double tol);

/// Header "n,wall_ns,m_dist,m_dist_normalized,scaled_n,V_n,slack,flags"; numbers
/// in shortest round-trip form, NaN as "nan". Throws std::runtime_error on I/O
/// failure.
void export_csv(const std::vector<IterationRecord>& records, const std::filesystem::path& path);
std::vector<IterationRecord> read_csv(const std::filesystem::path& path);

}  // namespace dwifob
