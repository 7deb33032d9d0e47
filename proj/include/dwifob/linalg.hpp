#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dwifob {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Throws DimensionError with `what` when the sizes differ.
void require_same_size(Eigen::Index a, Eigen::Index b, const char* what);

/// True when no entry is NaN or infinite.
bool all_finite(const Vector& v);

struct Triplet {
    Eigen::Index row;
    Eigen::Index col;
    double value;
};

/// Builds a sparse matrix from (row, col, value) triplets. Indices must be in
/// range and each (row, col) may appear at most once.
SparseMatrix sparse_from_triplets(Eigen::Index rows, Eigen::Index cols,
                                  const std::vector<Triplet>& triplets);

/// Tallies of forward and adjoint applications. Shared between copies of an
/// instrumented operator.
struct ApplyCounter {
    std::atomic<std::uint64_t> forward{0};
    std::atomic<std::uint64_t> adjoint{0};

    void reset() {
        forward = 0;
        adjoint = 0;
    }
};

/// A bounded linear map R^cols -> R^rows with its adjoint.
///
/// Copies share the underlying callables; the handle is immutable after
/// construction and safe to use from several threads.
class LinearOperator {
public:
    using Map = std::function<Vector(const Vector&)>;

    LinearOperator() = default;
    LinearOperator(Eigen::Index rows, Eigen::Index cols, Map forward, Map adjoint,
                   std::size_t nonzeros = 0);

    static LinearOperator identity(Eigen::Index n);
    static LinearOperator zero(Eigen::Index rows, Eigen::Index cols);
    static LinearOperator from_dense(Matrix a);
    static LinearOperator from_sparse(SparseMatrix a);

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    /// Stored nonzeros; dense operators report rows*cols. Feeds the flop model.
    std::size_t nonzeros() const { return nonzeros_; }

    Vector apply(const Vector& v) const;
    Vector adjoint(const Vector& v) const;

    /// Same map, but every application is tallied in `counter`.
    LinearOperator counted(std::shared_ptr<ApplyCounter> counter) const;

    /// Materialises the operator column by column. Intended for tests and
    /// small problems.
    Matrix to_dense() const;

private:
    Eigen::Index rows_ = 0;
    Eigen::Index cols_ = 0;
    std::size_t nonzeros_ = 0;
    Map forward_;
    Map adjoint_;
};

inline Vector apply(const LinearOperator& op, const Vector& v) { return op.apply(v); }

struct SpectralNormEstimate {
    double value = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Largest singular value of `op` by power iteration on L*L.
///
/// The start vector is all-ones plus a small jitter drawn from a seeded
/// mt19937_64, so repeated calls are bit-identical. A zero operator yields
/// value 0 with converged = true. If `max_iters` is exhausted the best
/// estimate is returned with converged = false.
SpectralNormEstimate estimate_spectral_norm(const LinearOperator& op, double tol = 1e-9,
                                            std::size_t max_iters = 10000,
                                            std::uint64_t seed = 0);

struct ExtrapolationWeights {
    Vector alpha;
    /// Set when the regularised system was singular or 1^T z vanished; alpha
    /// is then e_last.
    bool degenerate = false;
};

/// Solves
///     minimise  ||R a||^2 + xi ||R^T R||_F ||a||^2   subject to  1^T a = 1
/// through its KKT system: a = z / (1^T z) with (G + xi ||G||_F I) z = 1,
/// G = R^T R.
ExtrapolationWeights solve_extrapolation_weights(const Matrix& residuals, double xi);

/// Same problem with the Gram matrix G = R^T R supplied directly.
ExtrapolationWeights solve_extrapolation_weights_gram(const Matrix& gram, double xi);

}  // namespace dwifob
