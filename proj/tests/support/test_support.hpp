#pragma once

// Random generators and dense reference computations shared by the unit and
// acceptance tests. Nothing here calls into the code under test except to
// build problem objects.

#include "dwifob/linalg.hpp"
#include "dwifob/operators.hpp"
#include "dwifob/primal_dual.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>

namespace testing {

using dwifob::Matrix;
using dwifob::Vector;

#ifndef DWIFOB_DATA_DIR
#define DWIFOB_DATA_DIR "data"
#endif

inline std::string data_path(const std::string& name) {
    return std::string(DWIFOB_DATA_DIR) + "/" + name;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo = -1.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double gauss() { return std::normal_distribution<double>()(gen_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }

    Vector vector(Eigen::Index n, double scale = 1.0) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * gauss();
        return v;
    }
    Matrix matrix(Eigen::Index r, Eigen::Index c) {
        Matrix m(r, c);
        for (Eigen::Index j = 0; j < c; ++j) m.col(j) = vector(r);
        return m;
    }
    /// Symmetric positive semidefinite with rank <= r.
    Matrix psd(Eigen::Index n, Eigen::Index r) {
        const Matrix b = matrix(n, r);
        return b * b.transpose() / static_cast<double>(r);
    }
    Matrix skew(Eigen::Index n) {
        const Matrix b = matrix(n, n);
        return 0.5 * (b - b.transpose());
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

/// M = [I, -tau L^T; -tau L, (tau/sigma) I], assembled entry by entry.
inline Matrix dense_pd_metric(const Matrix& l, double tau, double sigma) {
    const auto n = l.cols();
    const auto k = l.rows();
    Matrix m(n + k, n + k);
    for (Eigen::Index i = 0; i < n + k; ++i) {
        for (Eigen::Index j = 0; j < n + k; ++j) {
            double v = 0.0;
            if (i < n && j < n) {
                v = i == j ? 1.0 : 0.0;
            } else if (i >= n && j >= n) {
                v = i == j ? tau / sigma : 0.0;
            } else if (i < n) {
                v = -tau * l(j - n, i);
            } else {
                v = -tau * l(i - n, j);
            }
            m(i, j) = v;
        }
    }
    return m;
}

/// Largest singular value from a dense SVD.
inline double dense_spectral_norm(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

/// Weights of  min ||R a||^2 + xi ||R^T R||_F ||a||^2  s.t. 1^T a = 1  from the
/// full (k+1) x (k+1) KKT system [2H, 1; 1^T, 0][a; nu] = [0; 1].
inline Vector dense_kkt_weights(const Matrix& r, double xi) {
    const Matrix g = r.transpose() * r;
    const auto k = g.rows();
    Matrix h = g + xi * g.norm() * Matrix::Identity(k, k);
    Matrix kkt = Matrix::Zero(k + 1, k + 1);
    kkt.topLeftCorner(k, k) = 2.0 * h;
    kkt.topRightCorner(k, 1).setOnes();
    kkt.bottomLeftCorner(1, k).setOnes();
    Vector rhs = Vector::Zero(k + 1);
    rhs[k] = 1.0;
    const Vector sol = kkt.colPivHouseholderQr().solve(rhs);
    return sol.head(k);
}

inline dwifob::ResolventOperator linear_resolvent(const Matrix& a, const std::string& label) {
    return {[a](const Vector& v, double step) {
                const Matrix sys = Matrix::Identity(a.rows(), a.cols()) + step * a;
                return Vector(sys.partialPivLu().solve(v));
            },
            label};
}

/// A tiny primal-dual problem where A, B^{-1} and C are linear maps, so that
/// the inclusion (M + tau Acal) p = (M - tau Ccal) z_hat is a linear system.
struct LinearPdInstance {
    Matrix a;      // monotone, n x n
    Matrix b_inv;  // monotone, N x N
    Matrix c;      // symmetric PSD, n x n
    Matrix l;      // N x n
    dwifob::PdProblem problem;
};

inline LinearPdInstance random_linear_pd(Rng& rng, Eigen::Index n, Eigen::Index big_n,
                                         bool with_c) {
    LinearPdInstance inst;
    inst.a = rng.psd(n, n) + rng.skew(n);
    inst.b_inv = rng.psd(big_n, big_n) + rng.skew(big_n);
    inst.c = with_c ? rng.psd(n, 2) : Matrix::Zero(n, n);
    inst.l = rng.matrix(big_n, n);
    inst.problem.op = dwifob::LinearOperator::from_dense(inst.l);
    inst.problem.resolvent_a = linear_resolvent(inst.a, "linear A");
    inst.problem.resolvent_b_conj = linear_resolvent(inst.b_inv, "linear B^-1");
    if (with_c) {
        const Matrix c = inst.c;
        inst.problem.c.evaluate = [c](const Vector& v) { return Vector(c * v); };
        inst.problem.c.beta = dense_spectral_norm(c);
    }
    return inst;
}

/// Solves (M + tau Acal) p = (M - tau Ccal) z_hat with
/// Acal = [A, L^T; -L, B^{-1}] and Ccal = [C, 0; 0, 0].
inline Vector dense_block_resolvent(const LinearPdInstance& inst, const Vector& z_hat, double tau,
                                    double sigma) {
    const auto n = inst.l.cols();
    const auto k = inst.l.rows();
    const Matrix m = dense_pd_metric(inst.l, tau, sigma);
    Matrix acal = Matrix::Zero(n + k, n + k);
    acal.topLeftCorner(n, n) = inst.a;
    acal.topRightCorner(n, k) = inst.l.transpose();
    acal.bottomLeftCorner(k, n) = -inst.l;
    acal.bottomRightCorner(k, k) = inst.b_inv;
    Matrix ccal = Matrix::Zero(n + k, n + k);
    ccal.topLeftCorner(n, n) = inst.c;
    const Matrix lhs = m + tau * acal;
    const Vector rhs = (m - tau * ccal) * z_hat;
    return lhs.fullPivLu().solve(rhs);
}

/// Sparse-ish random design operator with a bias column of signs.
inline Matrix random_design(Rng& rng, Eigen::Index samples, Eigen::Index features) {
    Matrix l(samples, features + 1);
    for (Eigen::Index i = 0; i < samples; ++i) {
        const double phi = rng.uniform() < 0.0 ? -1.0 : 1.0;
        for (Eigen::Index j = 0; j < features; ++j) {
            l(i, j) = rng.uniform() < -0.4 ? 0.0 : phi * rng.uniform();
        }
        l(i, features) = phi;
    }
    return l;
}

inline double relative_diff(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace testing
