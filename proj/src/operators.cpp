#include "dwifob/operators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dwifob {

CocoerciveOperator CocoerciveOperator::zero() {
    return {[](const Vector& v) { return Vector::Zero(v.size()).eval(); }, 0.0};
}

Vector prox_l1_skip_last(const Vector& v, double theta) {
    if (v.size() < 1) throw std::invalid_argument("prox_l1_skip_last: empty vector");
    if (!(theta >= 0.0)) throw std::invalid_argument("prox_l1_skip_last: negative threshold");
    Vector out(v.size());
    const auto last = v.size() - 1;
    for (Eigen::Index i = 0; i < last; ++i) {
        const double a = std::abs(v[i]) - theta;
        out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
    }
    out[last] = v[last];
    return out;
}

Vector resolvent_hinge_conjugate(const Vector& v, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("resolvent_hinge_conjugate: sigma must be > 0");
    return (v.array() - sigma).cwiseMax(-1.0).cwiseMin(0.0).matrix();
}

Vector prox_hinge(const Vector& v, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("prox_hinge: step must be > 0");
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] >= 1.0) {
            out[i] = v[i];
        } else if (v[i] <= 1.0 - t) {
            out[i] = v[i] + t;
        } else {
            out[i] = 1.0;
        }
    }
    return out;
}

double objective_value(const Vector& w, double b, const SvmDataset& data, double delta) {
    require_same_size(w.size(), data.features(), "objective_value");
    const Vector margins = (data.theta * w).array() + b;
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
        hinge += std::max(0.0, 1.0 - data.phi[i] * margins[i]);
    }
    return hinge + delta * w.lpNorm<1>();
}

ResolventOperator l1_resolvent(double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("l1_resolvent: delta must be >= 0");
    return {[delta](const Vector& v, double step) { return prox_l1_skip_last(v, step * delta); },
            "prox_l1_skip_last"};
}

ResolventOperator hinge_conjugate_resolvent() {
    return {[](const Vector& v, double step) { return resolvent_hinge_conjugate(v, step); },
            "resolvent_hinge_conjugate"};
}

}  // namespace dwifob
