#pragma once

#include "dwifob/anderson.hpp"
#include "dwifob/fb_core.hpp"

#include <cstddef>

namespace dwifob {

struct DwifobConfig {
    std::size_t m = 5;
    double xi = 1e-5;
    /// Regulariser in the denominator of the deviation scaling. Distinct from
    /// the schedule's epsilon margin.
    double eps_scale = 0.0;
    ParameterSchedule schedule;
};

struct DwifobCandidate {
    Vector u_hat;
    ExtrapolationWeights weights;
};

/// u_hat_{n+1} = x_{n+1} - sum_i alpha_i x_{n-m_n+i+1}, with alpha from the
/// history's residuals r_j = x_{j+1} - y_j. The history must already contain
/// the pair for iteration n. Degenerate weights give u_hat = 0.
DwifobCandidate dwifob_candidate(const ResidualHistory& history, const Vector& x_next, double xi);

/// u_{n+1} = zeta_n |l_n| u_hat / (eps_scale + ||u_hat||_M), returning 0 when
/// the denominator vanishes.
Vector scale_deviation(const Vector& u_hat, double ell_sq, double zeta_n, double eps_scale,
                       const MetricHandle& metric);

/// Scalar factor of scale_deviation for a precomputed ||u_hat||_M.
double deviation_scale_factor(double u_hat_norm, double ell_sq, double zeta_n, double eps_scale);

/// The DWIFOB deviation rule as a policy for run_fb_with_deviations.
class DwifobPolicy final : public DeviationPolicy {
public:
    DwifobPolicy(std::size_t m, double xi, double eps_scale);

    Vector propose(const FbIterationView& view) override;
    std::string name() const override { return "dwifob"; }

    const ResidualHistory& history() const { return history_; }
    std::size_t degenerate_steps() const { return degenerate_steps_; }

private:
    ResidualHistory history_;
    double xi_;
    double eps_scale_;
    std::size_t degenerate_steps_ = 0;
};

/// DWIFOB on 0 in A x + C x: forward-backward with deviations driven by the
/// Anderson-type extrapolation above.
FbTrace run_dwifob(const FbProblem& problem, const DwifobConfig& config, const MetricHandle& metric,
                   const Vector& x0, const FbOptions& options);

}  // namespace dwifob
