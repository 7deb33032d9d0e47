#include "dwifob/linalg.hpp"

#include <Eigen/LU>

#include <cmath>
#include <random>
#include <set>
#include <utility>

namespace dwifob {

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

bool all_finite(const Vector& v) { return v.allFinite(); }

SparseMatrix sparse_from_triplets(Eigen::Index rows, Eigen::Index cols,
                                  const std::vector<Triplet>& triplets) {
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(triplets.size());
    std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
    for (const auto& t : triplets) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
            throw std::out_of_range("sparse_from_triplets: index (" + std::to_string(t.row) +
                                    ", " + std::to_string(t.col) + ") out of range");
        }
        if (!seen.emplace(t.row, t.col).second) {
            throw std::invalid_argument("sparse_from_triplets: duplicate entry (" +
                                        std::to_string(t.row) + ", " + std::to_string(t.col) +
                                        ")");
        }
        entries.emplace_back(t.row, t.col, t.value);
    }
    SparseMatrix m(rows, cols);
    m.setFromTriplets(entries.begin(), entries.end());
    m.makeCompressed();
    return m;
}

LinearOperator::LinearOperator(Eigen::Index rows, Eigen::Index cols, Map forward, Map adjoint,
                               std::size_t nonzeros)
    : rows_(rows), cols_(cols), nonzeros_(nonzeros), forward_(std::move(forward)),
      adjoint_(std::move(adjoint)) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("LinearOperator: negative dimension");
    if (!forward_ || !adjoint_) throw std::invalid_argument("LinearOperator: empty map");
}

LinearOperator LinearOperator::identity(Eigen::Index n) {
    auto id = [](const Vector& v) { return v; };
    return {n, n, id, id, static_cast<std::size_t>(n)};
}

LinearOperator LinearOperator::zero(Eigen::Index rows, Eigen::Index cols) {
    return {rows, cols, [rows](const Vector&) { return Vector::Zero(rows).eval(); },
            [cols](const Vector&) { return Vector::Zero(cols).eval(); }, 0};
}

LinearOperator LinearOperator::from_dense(Matrix a) {
    auto shared = std::make_shared<const Matrix>(std::move(a));
    const auto rows = shared->rows();
    const auto cols = shared->cols();
    return {rows, cols, [shared](const Vector& v) -> Vector { return *shared * v; },
            [shared](const Vector& v) -> Vector { return shared->transpose() * v; },
            static_cast<std::size_t>(rows * cols)};
}

LinearOperator LinearOperator::from_sparse(SparseMatrix a) {
    a.makeCompressed();
    auto shared = std::make_shared<const SparseMatrix>(std::move(a));
    const auto rows = shared->rows();
    const auto cols = shared->cols();
    return {rows, cols, [shared](const Vector& v) -> Vector { return *shared * v; },
            [shared](const Vector& v) -> Vector { return shared->transpose() * v; },
            static_cast<std::size_t>(shared->nonZeros())};
}

Vector LinearOperator::apply(const Vector& v) const {
    require_same_size(v.size(), cols_, "LinearOperator::apply");
    return forward_(v);
}

Vector LinearOperator::adjoint(const Vector& v) const {
    require_same_size(v.size(), rows_, "LinearOperator::adjoint");
    return adjoint_(v);
}

LinearOperator LinearOperator::counted(std::shared_ptr<ApplyCounter> counter) const {
    auto fwd = forward_;
    auto adj = adjoint_;
    return {rows_, cols_,
            [fwd, counter](const Vector& v) {
                counter->forward.fetch_add(1, std::memory_order_relaxed);
                return fwd(v);
            },
            [adj, counter](const Vector& v) {
                counter->adjoint.fetch_add(1, std::memory_order_relaxed);
                return adj(v);
            },
            nonzeros_};
}

Matrix LinearOperator::to_dense() const {
    Matrix out(rows_, cols_);
    Vector e = Vector::Zero(cols_);
    for (Eigen::Index j = 0; j < cols_; ++j) {
        e[j] = 1.0;
        out.col(j) = apply(e);
        e[j] = 0.0;
    }
    return out;
}

SpectralNormEstimate estimate_spectral_norm(const LinearOperator& op, double tol,
                                            std::size_t max_iters, std::uint64_t seed) {
    if (!(tol > 0.0)) throw std::invalid_argument("estimate_spectral_norm: tol must be positive");
    SpectralNormEstimate out;
    if (op.cols() == 0 || op.rows() == 0) {
        out.converged = true;
        return out;
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    Vector v(op.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + jitter(rng);
    v.normalize();

    double estimate = 0.0;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        const Vector lv = op.apply(v);
        const double next = lv.norm();
        out.iterations = it;
        if (next == 0.0) {
            // Either L = 0 or the start vector lies in the kernel; retry once
            // from a fresh random direction before declaring L = 0.
            if (it == 1) {
                for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = jitter(rng);
                if (v.norm() == 0.0) break;
                v.normalize();
                continue;
            }
            out.value = 0.0;
            out.converged = true;
            return out;
        }
        Vector w = op.adjoint(lv);
        const double wn = w.norm();
        if (wn == 0.0) break;
        v = w / wn;
        if (std::abs(next - estimate) <= tol * next) {
            // Rayleigh-quotient value from the refreshed vector.
            out.value = std::max(next, op.apply(v).norm());
            out.converged = true;
            return out;
        }
        estimate = next;
    }
    out.value = estimate;
    out.converged = estimate == 0.0;
    return out;
}

ExtrapolationWeights solve_extrapolation_weights(const Matrix& residuals, double xi) {
    if (residuals.cols() < 1) {
        throw std::invalid_argument("solve_extrapolation_weights: need at least one column");
    }
    return solve_extrapolation_weights_gram(residuals.transpose() * residuals, xi);
}

ExtrapolationWeights solve_extrapolation_weights_gram(const Matrix& gram, double xi) {
    const auto k = gram.rows();
    if (k < 1 || gram.cols() != k) {
        throw std::invalid_argument("solve_extrapolation_weights: Gram matrix must be square, k >= 1");
    }
    if (!std::isfinite(xi) || xi < 0.0) {
        throw std::invalid_argument("solve_extrapolation_weights: xi must be finite and >= 0");
    }

    ExtrapolationWeights out;
    if (k == 1) {
        out.alpha = Vector::Ones(1);
        return out;
    }

    auto fallback = [k] {
        ExtrapolationWeights w;
        w.alpha = Vector::Zero(k);
        w.alpha[k - 1] = 1.0;
        w.degenerate = true;
        return w;
    };

    // alpha is invariant under positive scaling of G, so work with
    // G / ||G||_F; the regulariser then reduces to xi * I.
    const double frob = gram.norm();
    if (!(frob > 0.0) || !std::isfinite(frob)) return fallback();
    Matrix system = gram / frob;
    system.diagonal().array() += xi;

    Eigen::FullPivLU<Matrix> lu(system);
    if (!lu.isInvertible()) return fallback();
    const Vector z = lu.solve(Vector::Ones(k));
    const double total = z.sum();
    if (!z.allFinite() || std::abs(total) < 1e-14) return fallback();
    out.alpha = z / total;
    return out;
}

}  // namespace dwifob
