#pragma once

#include "dwifob/linalg.hpp"
#include "dwifob/svm_dataset.hpp"

#include <functional>
#include <string>

namespace dwifob {

/// A resolvent-type map v -> T(v; step). For the primal-dual problems this is
/// J_{step A}; for the generic engine it is v -> (M + step A)^{-1} M v.
struct ResolventOperator {
    std::function<Vector(const Vector&, double)> evaluate;
    std::string label;

    Vector operator()(const Vector& v, double step) const { return evaluate(v, step); }
};

/// Single-valued 1/beta-cocoercive operator. beta == 0 means the zero operator.
struct CocoerciveOperator {
    std::function<Vector(const Vector&)> evaluate;
    double beta = 0.0;

    bool is_zero() const { return beta == 0.0; }
    Vector operator()(const Vector& v) const {
        return is_zero() ? Vector::Zero(v.size()).eval() : evaluate(v);
    }

    static CocoerciveOperator zero();
};

/// Soft-thresholds every coordinate except the last (the unpenalised bias):
/// sign(v_i) max(|v_i| - theta, 0). This is prox of theta * ||w||_1 with x = (w, b).
Vector prox_l1_skip_last(const Vector& v, double theta);

/// prox_{sigma f*} for f(y) = sum max(0, 1 - y_i), computed as
/// clip(v_i - sigma, -1, 0). f*(mu) = sum mu_i on [-1, 0]^N, +inf elsewhere.
Vector resolvent_hinge_conjugate(const Vector& v, double sigma);

/// Hinge-loss prox prox_{t f}(v), per coordinate. Only used to cross-check the
/// conjugate resolvent through the Moreau identity.
Vector prox_hinge(const Vector& v, double t);

/// sum_i max(0, 1 - phi_i (w^T theta_i + b)) + delta ||w||_1
double objective_value(const Vector& w, double b, const SvmDataset& data, double delta);

/// ResolventOperator wrappers; `delta` is folded into the l1 threshold.
ResolventOperator l1_resolvent(double delta);
ResolventOperator hinge_conjugate_resolvent();

}  // namespace dwifob
