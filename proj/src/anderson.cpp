#include "dwifob/anderson.hpp"

#include <Eigen/QR>

#include <cmath>
#include <stdexcept>

namespace dwifob {

ResidualHistory::ResidualHistory(std::size_t capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("ResidualHistory: memory must be >= 1");
    const auto slots = static_cast<Eigen::Index>(capacity + 1);
    gram_ = Matrix::Zero(slots, slots);
}

void ResidualHistory::push(Vector residual, Vector snapshot) {
    if (dim_ < 0) {
        dim_ = residual.size();
        snapshot_dim_ = snapshot.size();
    }
    require_same_size(residual.size(), dim_, "ResidualHistory::push (residual)");
    require_same_size(snapshot.size(), snapshot_dim_, "ResidualHistory::push (snapshot)");

    if (residuals_.size() == capacity_ + 1) {
        residuals_.pop_front();
        snapshots_.pop_front();
        const auto k = static_cast<Eigen::Index>(capacity_);
        gram_.topLeftCorner(k, k) = gram_.bottomRightCorner(k, k).eval();
    }
    residuals_.push_back(std::move(residual));
    snapshots_.push_back(std::move(snapshot));

    const auto last = static_cast<Eigen::Index>(residuals_.size() - 1);
    const Vector& r = residuals_.back();
    for (Eigen::Index i = 0; i <= last; ++i) {
        const double g = residuals_[static_cast<std::size_t>(i)].dot(r);
        gram_(i, last) = g;
        gram_(last, i) = g;
    }
    ++pushes_;
}

void ResidualHistory::clear() {
    residuals_.clear();
    snapshots_.clear();
    gram_.setZero();
    pushes_ = 0;
}

Matrix ResidualHistory::residual_matrix() const {
    Matrix out(dim_ < 0 ? 0 : dim_, static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) out.col(static_cast<Eigen::Index>(i)) = residuals_[i];
    return out;
}

Matrix ResidualHistory::snapshot_matrix() const {
    Matrix out(snapshot_dim_ < 0 ? 0 : snapshot_dim_, static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) out.col(static_cast<Eigen::Index>(i)) = snapshots_[i];
    return out;
}

Vector ResidualHistory::combine_snapshots(const Vector& alpha) const {
    require_same_size(alpha.size(), static_cast<Eigen::Index>(size()), "combine_snapshots");
    if (empty()) throw std::logic_error("combine_snapshots: empty history");
    Vector out = alpha[0] * snapshots_[0];
    for (std::size_t i = 1; i < size(); ++i) out += alpha[static_cast<Eigen::Index>(i)] * snapshots_[i];
    return out;
}

RaaStep raa_step(const ResidualHistory& history, double xi) {
    if (history.empty()) throw std::logic_error("raa_step: empty history");
    RaaStep out;
    out.weights = solve_extrapolation_weights_gram(history.gram(), xi);
    if (out.weights.degenerate) {
        out.y_next = history.latest_snapshot();
    } else {
        out.y_next = history.combine_snapshots(out.weights.alpha);
    }
    return out;
}

RaaTrace run_raa(const FixedPointMap& map, const Vector& y0, std::size_t m, double xi,
                 const RaaOptions& options) {
    ResidualHistory history(m);
    RaaTrace trace;
    trace.y = y0;
    double r0 = 0.0;
    for (std::size_t n = 0; n < options.max_iters; ++n) {
        Vector x = map(trace.y);
        require_same_size(x.size(), trace.y.size(), "run_raa");
        Vector r = trace.y - x;
        const double rn = r.norm();
        trace.iterations = n + 1;
        trace.residual_norms.push_back(rn);
        if (n == 0) {
            r0 = rn;
            trace.divergence_threshold = options.divergence_factor * (1.0 + r0);
        }
        if (!std::isfinite(rn) || !x.allFinite()) {
            trace.x = std::move(x);
            trace.status = RunStatus::diverged;
            return trace;
        }
        if (rn > trace.divergence_threshold) {
            trace.x = std::move(x);
            trace.status = RunStatus::diverged;
            return trace;
        }

        history.push(std::move(r), x);
        auto step = raa_step(history, xi);
        if (step.weights.degenerate) ++trace.degenerate_steps;

        const bool stop = options.stop &&
                          options.stop(RaaIterate{n, trace.y, x, rn, step.weights.degenerate});
        trace.x = std::move(x);
        if (stop || (options.tol > 0.0 && rn <= options.tol)) {
            trace.status = RunStatus::converged;
            return trace;
        }
        trace.y = std::move(step.y_next);
    }
    trace.status = RunStatus::max_iterations;
    return trace;
}

Vector quasi_newton_extrapolate(const ResidualHistory& history, const Vector& y_n,
                                const Vector& r_n) {
    if (history.empty()) throw std::logic_error("quasi_newton_extrapolate: empty history");
    const auto mn = static_cast<Eigen::Index>(history.memory());
    if (mn == 0) return y_n - r_n;

    const Eigen::Index dim = r_n.size();
    Matrix dr(dim, mn);
    Matrix dy(dim, mn);
    for (Eigen::Index i = 0; i < mn; ++i) {
        const auto a = static_cast<std::size_t>(i);
        const Vector& r0 = history.residual(a);
        const Vector& r1 = history.residual(a + 1);
        dr.col(i) = r1 - r0;
        dy.col(i) = (history.snapshot(a + 1) + r1) - (history.snapshot(a) + r0);
    }

    Eigen::ColPivHouseholderQR<Matrix> qr(dr);
    qr.setThreshold(1e-12);
    if (qr.rank() < mn) {
        throw std::domain_error("quasi_newton_extrapolate: residual differences are rank deficient");
    }
    const Vector omega = qr.solve(r_n);
    return y_n - r_n - (dy - dr) * omega;
}

Vector alpha_to_omega(const Vector& alpha) {
    if (alpha.size() < 1) throw std::invalid_argument("alpha_to_omega: empty weights");
    const auto m = alpha.size() - 1;
    Vector omega(m);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        acc += alpha[i];
        omega[i] = acc;
    }
    return omega;
}

Vector omega_to_alpha(const Vector& omega) {
    const auto m = omega.size();
    Vector alpha(m + 1);
    if (m == 0) {
        alpha[0] = 1.0;
        return alpha;
    }
    alpha[0] = omega[0];
    for (Eigen::Index i = 1; i < m; ++i) alpha[i] = omega[i] - omega[i - 1];
    alpha[m] = 1.0 - omega[m - 1];
    return alpha;
}

}  // namespace dwifob
