#include "dwifob/bench.hpp"

#include "dwifob/anderson.hpp"
#include "dwifob/operators.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <locale>
#include <sstream>
#include <stdexcept>

namespace dwifob {

namespace {

using Clock = std::chrono::steady_clock;

double normalized(double dist, double d0) {
    if (d0 > 0.0) return dist / d0;
    return dist == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

PrimalDualPoint initial_point(const BenchConfig& config, const LinearOperator& op) {
    return {Vector::Constant(op.cols(), config.init_scale),
            Vector::Constant(op.rows(), config.init_scale)};
}

double objective_at(const SvmProblem& problem, const Vector& x) {
    const auto d = problem.op.cols() - 1;
    return objective_value(x.head(d), x[d], problem.dataset, problem.delta);
}

std::string number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

double parse_number(std::string_view s, std::size_t line) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::runtime_error("read_csv: bad number '" + std::string(s) + "' on line " +
                                 std::to_string(line));
    }
    return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::runtime_error("read_csv: bad integer '" + std::string(s) + "' on line " +
                                 std::to_string(line));
    }
    return v;
}

constexpr const char* kCsvHeader = "n,wall_ns,m_dist,m_dist_normalized,scaled_n,V_n,slack,flags";

BenchResult run_cp_bench(const BenchConfig& config, const BenchContext& ctx) {
    const auto& problem = ctx.problem;
    const auto& ref = ctx.reference.z;
    const PrimalDualPoint z0 = initial_point(config, problem.op);
    const double d0 = ctx.metric.norm({z0.x - ref.x, z0.mu - ref.mu});
    const double cost = cp_iteration_cost(cost_shape(problem.op));

    BenchResult out;
    IterationRecord first;
    first.m_dist = d0;
    first.m_dist_normalized = normalized(d0, d0);
    if (config.record_objective) first.objective = objective_at(problem, z0.x);
    out.records.push_back(first);

    CpOptions opt;
    opt.max_iters = config.max_iters;
    opt.observer = [&](std::size_t n, const PrimalDualPoint& z) {
        IterationRecord rec;
        rec.n = n;
        rec.m_dist = ctx.metric.norm({z.x - ref.x, z.mu - ref.mu});
        rec.m_dist_normalized = normalized(rec.m_dist, d0);
        rec.model_cost = cost;
        if (config.record_objective) rec.objective = objective_at(problem, z.x);
        out.records.push_back(rec);
        return rec.m_dist_normalized <= config.tol;
    };
    CpTrace trace = run_cp(problem.pd, ctx.metric, z0, opt);
    for (std::size_t i = 0; i < trace.wall_ns.size() && i + 1 < out.records.size(); ++i) {
        out.records[i + 1].wall_ns = trace.wall_ns[i];
    }
    if (trace.status == RunStatus::nan_detected) {
        IterationRecord rec;
        rec.n = trace.iterations;
        rec.model_cost = cost;
        rec.flags = record_flags::nonfinite;
        if (!trace.wall_ns.empty()) rec.wall_ns = trace.wall_ns.back();
        out.records.push_back(rec);
    }
    out.summary.status = trace.status;
    out.summary.iterations = trace.iterations;
    out.summary.initial_distance = d0;
    return out;
}

BenchResult run_pd_bench(const BenchConfig& config, const BenchContext& ctx) {
    const auto& problem = ctx.problem;
    const auto& metric = ctx.metric;
    const PrimalDualPoint z0 = initial_point(config, problem.op);

    DwifobConfig dw;
    dw.m = config.m;
    dw.xi = config.xi;
    dw.eps_scale = config.eps_scale;
    dw.schedule = bench_schedule(config, metric.tau());
    const auto coeff = budget_coefficients(metric.tau(), metric.tau(), config.lambda,
                                           config.lambda, dw.schedule.beta);
    const CostShape shape = cost_shape(problem.op);

    PdOptions opt;
    opt.max_iters = config.max_iters;
    opt.reference = ctx.reference.z;
    opt.tol = config.tol;
    opt.compute_lyapunov = config.record_lyapunov;
    opt.audit_period = config.audit_period;
    std::vector<double> objectives;
    if (config.record_objective) {
        opt.observer = [&](const PdIterationView& v) {
            objectives.push_back(objective_at(problem, v.z.x));
            return false;
        };
    }
    PdTrace trace = run_pd_dwifob(problem.pd, dw, metric, config.mode, z0, opt);

    BenchResult out;
    const double d0 = trace.initial_distance;
    IterationRecord first;
    first.m_dist = d0;
    first.m_dist_normalized = normalized(d0, d0);
    if (config.record_objective) first.objective = objective_at(problem, z0.x);
    out.records.push_back(first);
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const auto& r = trace.records[i];
        IterationRecord rec;
        rec.n = r.n + 1;
        rec.wall_ns = r.wall_ns;
        rec.m_dist = r.m_distance;
        rec.m_dist_normalized = normalized(r.m_distance, d0);
        rec.model_cost =
            pd_dwifob_iteration_cost(shape, r.memory + 1, config.mode, coeff.u_weight != 0.0);
        rec.V_n = r.lyapunov;
        rec.slack = r.slack;
        if (i < objectives.size()) rec.objective = objectives[i];
        if (r.shrunk) rec.flags |= record_flags::shrunk;
        if (r.degenerate) rec.flags |= record_flags::degenerate;
        out.records.push_back(rec);
        if (r.shrunk) ++out.summary.shrunk_steps;
    }
    if (trace.status == RunStatus::nan_detected && !out.records.empty()) {
        out.records.back().flags |= record_flags::nonfinite;
    }
    out.summary.status = trace.status;
    out.summary.iterations = trace.iterations;
    out.summary.initial_distance = d0;
    out.summary.degenerate_steps = trace.degenerate_steps;
    out.summary.max_drift = trace.max_drift;
    out.summary.diagnostic = trace.diagnostic;
    if (trace.drift_warning) {
        if (!out.summary.diagnostic.empty()) out.summary.diagnostic += "; ";
        out.summary.diagnostic += "recursive L-images drifted past the warning threshold";
    }
    return out;
}

BenchResult run_raa_bench(const BenchConfig& config, const BenchContext& ctx) {
    const auto& problem = ctx.problem;
    const auto& metric = ctx.metric;
    const auto& ref = ctx.reference.z;
    const auto n_primal = problem.op.cols();
    const PrimalDualPoint z0 = initial_point(config, problem.op);
    const double d0 = metric.norm({z0.x - ref.x, z0.mu - ref.mu});
    const CostShape shape = cost_shape(problem.op);

    BenchResult out;
    IterationRecord first;
    first.m_dist = d0;
    first.m_dist_normalized = normalized(d0, d0);
    if (config.record_objective) first.objective = objective_at(problem, z0.x);
    out.records.push_back(first);

    FixedPointMap map = [&](const Vector& y) {
        return cp_step(PrimalDualPoint::split(y, n_primal), problem.pd, metric).stacked();
    };
    RaaOptions opt;
    opt.max_iters = config.max_iters;
    auto mark = Clock::now();
    opt.stop = [&](const RaaIterate& it) {
        const auto now = Clock::now();
        IterationRecord rec;
        rec.n = it.n + 1;
        rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - mark).count();
        const auto z = PrimalDualPoint::split(it.x, n_primal);
        rec.m_dist = metric.norm({z.x - ref.x, z.mu - ref.mu});
        rec.m_dist_normalized = normalized(rec.m_dist, d0);
        rec.model_cost = raa_iteration_cost(shape, std::min<std::size_t>(it.n + 1, config.m + 1));
        if (it.degenerate) rec.flags |= record_flags::degenerate;
        if (config.record_objective) rec.objective = objective_at(problem, z.x);
        out.records.push_back(rec);
        const bool done = rec.m_dist_normalized <= config.tol;
        mark = Clock::now();
        return done;
    };
    RaaTrace trace = run_raa(map, z0.stacked(), config.m, config.xi, opt);
    out.summary.status = trace.status;
    out.summary.iterations = trace.iterations;
    out.summary.initial_distance = d0;
    out.summary.degenerate_steps = trace.degenerate_steps;
    if (trace.status == RunStatus::diverged) {
        out.summary.diverged = true;
        IterationRecord rec;
        rec.n = trace.iterations;
        rec.model_cost = raa_iteration_cost(shape, std::min(trace.iterations, config.m + 1));
        rec.flags = record_flags::diverged;
        if (!trace.x.allFinite()) rec.flags |= record_flags::nonfinite;
        out.records.push_back(rec);
        std::ostringstream msg;
        msg << "residual exceeded " << trace.divergence_threshold << " or became non-finite";
        out.summary.diagnostic = msg.str();
    }
    return out;
}

}  // namespace

const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::cp: return "cp";
        case Algorithm::pd_dwifob: return "pd_dwifob";
        case Algorithm::raa: return "raa";
    }
    return "?";
}

const char* to_string(StepRule r) {
    return r == StepRule::over_norm ? "over_norm" : "over_norm_sq";
}

const char* to_string(EvalMode m) { return m == EvalMode::recursive ? "recursive" : "direct"; }

const char* to_string(CostModel c) {
    return c == CostModel::wallclock ? "wallclock" : "deterministic";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "cp") return Algorithm::cp;
    if (s == "pd_dwifob" || s == "pd-dwifob") return Algorithm::pd_dwifob;
    if (s == "raa") return Algorithm::raa;
    throw std::invalid_argument("unknown algorithm '" + s + "'");
}

StepRule parse_step_rule(const std::string& s) {
    if (s == "over_norm") return StepRule::over_norm;
    if (s == "over_norm_sq") return StepRule::over_norm_sq;
    throw std::invalid_argument("unknown step rule '" + s + "'");
}

EvalMode parse_eval_mode(const std::string& s) {
    if (s == "recursive") return EvalMode::recursive;
    if (s == "direct") return EvalMode::direct;
    throw std::invalid_argument("unknown evaluation mode '" + s + "'");
}

CostModel parse_cost_model(const std::string& s) {
    if (s == "wallclock") return CostModel::wallclock;
    if (s == "deterministic") return CostModel::deterministic;
    throw std::invalid_argument("unknown cost model '" + s + "'");
}

BenchContext prepare_context(const BenchConfig& config) {
    SvmProblem problem = assemble_problem(load_libsvm(config.dataset), config.delta);
    const auto est = estimate_spectral_norm(problem.op, 1e-12, 100000, config.seed);
    PdMetric metric = PdMetric::from_step_rule(problem.op, est.value, config.step_rule,
                                               config.step_factor);
    ReferenceOptions ropt;
    ropt.cache_dir = config.cache_dir;
    ReferenceSolution ref = compute_reference_solution(problem, metric, ropt);
    return {std::move(problem), est.value, est.iterations, std::move(metric), std::move(ref)};
}

ParameterSchedule bench_schedule(const BenchConfig& config, double tau) {
    // With beta = 0 the bounds read zeta <= 1 - eps, gamma >= eps and
    // eps <= lambda <= 2 - eps/2; pick the loosest eps that satisfies them.
    const double eps = std::min({0.999, 1.0 - config.zeta, tau, config.lambda,
                                 2.0 * (2.0 - config.lambda)});
    if (!(eps > 0.0)) {
        std::ostringstream msg;
        msg << "no admissible epsilon for zeta = " << config.zeta << ", lambda = "
            << config.lambda << ", tau = " << tau;
        throw std::invalid_argument(msg.str());
    }
    auto schedule = ParameterSchedule::constant(eps, tau, config.lambda, config.zeta, 0.0);
    if (auto bad = validate_params(schedule, 1); !bad.empty()) {
        throw std::invalid_argument(bad.front().message);
    }
    return schedule;
}

BenchResult run_benchmark(const BenchConfig& config, const BenchContext& context) {
    if (config.max_iters < 1) throw std::invalid_argument("run_benchmark: max_iters must be >= 1");
    BenchResult out;
    switch (config.algorithm) {
        case Algorithm::cp: out = run_cp_bench(config, context); break;
        case Algorithm::pd_dwifob: out = run_pd_bench(config, context); break;
        case Algorithm::raa: out = run_raa_bench(config, context); break;
    }
    auto& s = out.summary;
    s.iterations_to_tol = first_reaching(out.records, config.tol);
    if (s.iterations_to_tol) s.status = RunStatus::converged;
    for (auto it = out.records.rbegin(); it != out.records.rend(); ++it) {
        if (!std::isnan(it->m_dist_normalized)) {
            s.final_normalized = it->m_dist_normalized;
            break;
        }
    }
    if (out.records.size() > 1) {
        double cost = 0.0;
        double wall = 0.0;
        for (std::size_t i = 1; i < out.records.size(); ++i) {
            cost += out.records[i].model_cost;
            wall += static_cast<double>(out.records[i].wall_ns);
        }
        const auto k = static_cast<double>(out.records.size() - 1);
        s.mean_model_cost = cost / k;
        s.mean_wall_ns = wall / k;
    }
    return out;
}

BenchResult run_benchmark(const BenchConfig& config) {
    return run_benchmark(config, prepare_context(config));
}

CostShape cost_shape(const LinearOperator& op) {
    return {static_cast<double>(op.cols()), static_cast<double>(op.rows()),
            static_cast<double>(op.nonzeros())};
}

double cp_iteration_cost(const CostShape& s) {
    // L^* mu, x - tau(.), prox, 2p - x, L(.), mu + sigma(.), prox
    return 2 * s.nnz + 2 * s.n + s.n + 2 * s.n + 2 * s.nnz + 2 * s.N + s.N;
}

double pd_dwifob_iteration_cost(const CostShape& s, std::size_t k_cols, EvalMode mode,
                                bool budget_has_u_term) {
    const double n = s.n;
    const double N = s.N;
    const double D = n + N;
    const double k = static_cast<double>(k_cols);
    const bool rec = mode == EvalMode::recursive;

    double c = 0.0;
    if (rec) {
        // L^* mu_hat, x_hat - tau(.), prox, L p, 2 Lp - Lx_hat, mu_hat + sigma(.), prox
        c += 2 * s.nnz + 3 * n + 2 * s.nnz + 2 * N + 2 * N + N;
        // L x_{n+1} and L u_n from the cache
        c += 4 * N + N;
    } else {
        c += cp_iteration_cost(s);
    }
    c += 4 * D;                                         // relaxation with the deviation
    c += budget_has_u_term ? 3 * D : D;                 // w = p - z + c u
    c += rec ? (budget_has_u_term ? 3 * N : N) : 2 * s.nnz;  // L w_x
    c += 2 * D + 2 * N;                                 // ||w||_M^2
    c += D + 2 * k * D;                                 // residual, new Gram row
    c += k * k * k / 3 + 3 * k * k;                     // normalise, ridge, LU solve
    c += 2 * k * D + D;                                 // combination and u_hat
    c += rec ? 2 * k * N : 2 * s.nnz;                   // L u_hat_x
    c += 2 * D + 2 * N;                                 // ||u_hat||_M
    c += D + (rec ? N : 2 * s.nnz);                     // u = s u_hat and L u_x
    c += 2 * D + 2 * N;                                 // ||u||_M^2 check
    c += D + (rec ? N : 0.0);                           // z_hat and L x_hat
    return c;
}

double raa_iteration_cost(const CostShape& s, std::size_t k_cols) {
    const double D = s.n + s.N;
    const double k = static_cast<double>(k_cols);
    return cp_iteration_cost(s) + D + 2 * D + 2 * k * D + k * k * k / 3 + 3 * k * k + 2 * k * D;
}

double cost_ratio(const std::vector<IterationRecord>& records,
                  const std::vector<IterationRecord>& baseline, CostModel model) {
    if (baseline.size() < 2) {
        throw std::invalid_argument("cost_ratio: baseline records are missing");
    }
    if (records.size() < 2) throw std::invalid_argument("cost_ratio: no iterations to scale");
    auto mean = [model](const std::vector<IterationRecord>& r) {
        // Record 0 is the starting point and carries no cost.
        std::size_t start = 1;
        if (model == CostModel::wallclock && r.size() > kWallclockWarmup + 1) {
            start = kWallclockWarmup + 1;
        }
        double sum = 0.0;
        for (std::size_t i = start; i < r.size(); ++i) {
            sum += model == CostModel::wallclock ? static_cast<double>(r[i].wall_ns)
                                                 : r[i].model_cost;
        }
        return sum / static_cast<double>(r.size() - start);
    };
    const double base = mean(baseline);
    if (!(base > 0.0)) throw std::invalid_argument("cost_ratio: baseline cost is zero");
    return mean(records) / base;
}

std::vector<IterationRecord> scaled_iteration_series(const std::vector<IterationRecord>& records,
                                                     CostModel model,
                                                     const std::vector<IterationRecord>& baseline) {
    const double ratio = cost_ratio(records, baseline, model);
    std::vector<IterationRecord> out = records;
    for (auto& r : out) r.scaled_n = static_cast<double>(r.n) * ratio;
    return out;
}

std::optional<std::size_t> first_reaching(const std::vector<IterationRecord>& records, double tol) {
    for (const auto& r : records) {
        if (r.m_dist_normalized <= tol) return r.n;
    }
    return std::nullopt;
}

void export_csv(const std::vector<IterationRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("export_csv: cannot open " + path.string());
    out.imbue(std::locale::classic());
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << r.n << ',' << r.wall_ns << ',' << number(r.m_dist) << ','
            << number(r.m_dist_normalized) << ',' << number(r.scaled_n) << ',' << number(r.V_n)
            << ',' << number(r.slack) << ',' << r.flags << '\n';
    }
    out.flush();
    if (!out) throw std::runtime_error("export_csv: write to " + path.string() + " failed");
}

std::vector<IterationRecord> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw std::runtime_error("read_csv: unexpected header in " + path.string());
    }
    std::vector<IterationRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            f.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (f.size() != 8) {
            throw std::runtime_error("read_csv: expected 8 fields on line " +
                                     std::to_string(lineno));
        }
        IterationRecord r;
        r.n = parse_int<std::size_t>(f[0], lineno);
        r.wall_ns = parse_int<std::int64_t>(f[1], lineno);
        r.m_dist = parse_number(f[2], lineno);
        r.m_dist_normalized = parse_number(f[3], lineno);
        r.scaled_n = parse_number(f[4], lineno);
        r.V_n = parse_number(f[5], lineno);
        r.slack = parse_number(f[6], lineno);
        r.flags = parse_int<std::uint32_t>(f[7], lineno);
        r.model_cost = std::numeric_limits<double>::quiet_NaN();
        out.push_back(r);
    }
    return out;
}

}  // namespace dwifob
