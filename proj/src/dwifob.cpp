#include "dwifob/dwifob.hpp"

#include <cmath>
#include <stdexcept>

namespace dwifob {

DwifobCandidate dwifob_candidate(const ResidualHistory& history, const Vector& x_next, double xi) {
    if (history.empty()) throw std::logic_error("dwifob_candidate: empty history");
    require_same_size(x_next.size(), history.latest_snapshot().size(), "dwifob_candidate");
    DwifobCandidate out;
    out.weights = solve_extrapolation_weights_gram(history.gram(), xi);
    if (out.weights.degenerate) {
        out.u_hat = Vector::Zero(x_next.size());
    } else {
        out.u_hat = x_next - history.combine_snapshots(out.weights.alpha);
    }
    return out;
}

double deviation_scale_factor(double u_hat_norm, double ell_sq, double zeta_n, double eps_scale) {
    if (!(ell_sq >= 0.0)) throw std::invalid_argument("scale_deviation: ell_sq must be >= 0");
    const double denom = eps_scale + u_hat_norm;
    if (!(denom > 0.0)) return 0.0;
    return zeta_n * std::sqrt(ell_sq) / denom;
}

Vector scale_deviation(const Vector& u_hat, double ell_sq, double zeta_n, double eps_scale,
                       const MetricHandle& metric) {
    const double s = deviation_scale_factor(metric.norm(u_hat), ell_sq, zeta_n, eps_scale);
    if (s == 0.0) return Vector::Zero(u_hat.size());
    return s * u_hat;
}

DwifobPolicy::DwifobPolicy(std::size_t m, double xi, double eps_scale)
    : history_(m), xi_(xi), eps_scale_(eps_scale) {
    if (!(eps_scale >= 0.0)) throw std::invalid_argument("DwifobPolicy: eps_scale must be >= 0");
    if (!(xi >= 0.0)) throw std::invalid_argument("DwifobPolicy: xi must be >= 0");
}

Vector DwifobPolicy::propose(const FbIterationView& view) {
    history_.push(view.x_next - view.y, view.x_next);
    auto cand = dwifob_candidate(history_, view.x_next, xi_);
    if (cand.weights.degenerate) ++degenerate_steps_;
    return scale_deviation(cand.u_hat, view.ell_sq, view.zeta, eps_scale_, view.metric);
}

FbTrace run_dwifob(const FbProblem& problem, const DwifobConfig& config, const MetricHandle& metric,
                   const Vector& x0, const FbOptions& options) {
    DwifobPolicy policy(config.m, config.xi, config.eps_scale);
    return run_fb_with_deviations(problem, policy, config.schedule, metric, x0, options);
}

}  // namespace dwifob
