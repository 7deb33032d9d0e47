#pragma once

#include "dwifob/fb_core.hpp"
#include "dwifob/linalg.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace dwifob {

/// Sliding window over the last min(m, n) + 1 (residual, snapshot) pairs,
/// oldest first, with the residual Gram matrix kept up to date on push.
///
/// The residual convention is the caller's: regularised Anderson acceleration
/// pushes (y_j - x_j, x_j) with x_j = T(y_j); DWIFOB pushes
/// (x_{j+1} - y_j, x_{j+1}).
class ResidualHistory {
public:
    explicit ResidualHistory(std::size_t capacity);

    void push(Vector residual, Vector snapshot);
    void clear();

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return residuals_.size(); }
    bool empty() const { return residuals_.empty(); }
    /// m_n = size() - 1.
    std::size_t memory() const { return residuals_.empty() ? 0 : residuals_.size() - 1; }
    std::size_t pushes() const { return pushes_; }

    const Vector& residual(std::size_t i) const { return residuals_[i]; }
    const Vector& snapshot(std::size_t i) const { return snapshots_[i]; }
    const Vector& latest_residual() const { return residuals_.back(); }
    const Vector& latest_snapshot() const { return snapshots_.back(); }

    /// R^T R over the retained residuals, oldest first.
    Matrix gram() const { return gram_.topLeftCorner(size(), size()); }
    Matrix residual_matrix() const;
    Matrix snapshot_matrix() const;

    /// sum_i alpha_i snapshot_i
    Vector combine_snapshots(const Vector& alpha) const;

private:
    std::size_t capacity_;
    std::size_t pushes_ = 0;
    Eigen::Index dim_ = -1;
    Eigen::Index snapshot_dim_ = -1;
    std::deque<Vector> residuals_;
    std::deque<Vector> snapshots_;
    Matrix gram_;
};

struct RaaStep {
    Vector y_next;
    ExtrapolationWeights weights;
};

/// y_{n+1} = sum_i alpha_i x_{n-m_n+i}, alpha from the regularised constrained
/// least squares over the history's residuals. Degenerate weights fall back to
/// the most recent snapshot.
RaaStep raa_step(const ResidualHistory& history, double xi);

struct RaaIterate {
    std::size_t n;
    const Vector& y;  // y_n
    const Vector& x;  // x_n = T(y_n)
    double residual_norm;
    bool degenerate;
};

struct RaaOptions {
    std::size_t max_iters = 1000;
    /// Converged once ||r_n|| <= tol; 0 disables.
    double tol = 0.0;
    /// Abort with RunStatus::diverged when ||r_n|| > divergence_factor (1 + ||r_0||).
    double divergence_factor = 1e8;
    /// Called once per iteration after x_n = T(y_n); returning true stops the
    /// run with RunStatus::converged.
    std::function<bool(const RaaIterate&)> stop;
};

struct RaaTrace {
    RunStatus status = RunStatus::max_iterations;
    std::size_t iterations = 0;
    Vector y;  // last extrapolated point
    Vector x;  // last T-output
    std::vector<double> residual_norms;
    std::size_t degenerate_steps = 0;
    double divergence_threshold = 0.0;
};

using FixedPointMap = std::function<Vector(const Vector&)>;

/// Regularised Anderson acceleration on y = T(y) with memory m >= 1 and
/// Tikhonov weight xi. There is no global convergence guarantee; divergence is
/// reported through the status, not thrown.
RaaTrace run_raa(const FixedPointMap& map, const Vector& y0, std::size_t m, double xi,
                 const RaaOptions& options);

/// Quasi-Newton form of unregularised Anderson acceleration:
///     y_{n+1} = y_n - G_n r_n,
///     G_n = I + (dY - dR)(dR^T dR)^{-1} dR^T,
/// with dR, dY the consecutive differences of residuals and of y_j = x_j + r_j
/// over the history (which must hold RAA-convention pairs ending at (r_n, x_n)).
/// Throws std::domain_error when dR is rank deficient.
Vector quasi_newton_extrapolate(const ResidualHistory& history, const Vector& y_n,
                                const Vector& r_n);

/// omega_i = sum_{j <= i} alpha_j for i < m; the inverse map recovers alpha
/// with alpha_m = 1 - omega_{m-1}.
Vector alpha_to_omega(const Vector& alpha);
Vector omega_to_alpha(const Vector& omega);

}  // namespace dwifob
