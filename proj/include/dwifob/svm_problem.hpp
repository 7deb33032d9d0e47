#pragma once

#include "dwifob/linalg.hpp"
#include "dwifob/primal_dual.hpp"
#include "dwifob/svm_dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>

namespace dwifob {

class LibsvmParseError : public std::runtime_error {
public:
    LibsvmParseError(std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Reads "label idx:val idx:val ..." lines. Indices are 1-based and strictly
/// ascending within a line, '#' starts a comment, blank lines are skipped.
/// d is the largest index seen. With two distinct labels the smaller maps to
/// -1 and the larger to +1; a single label class keeps its sign.
SvmDataset parse_libsvm(std::istream& in);
SvmDataset parse_libsvm_string(const std::string& text);
SvmDataset load_libsvm(const std::filesystem::path& path);

/// Inverse of parse_libsvm for normalised datasets: labels as "+1"/"-1",
/// values in shortest round-trip form, explicit zeros dropped.
std::string serialize_libsvm(const SvmDataset& data);

/// FNV-1a over the dataset's shape, sparsity pattern, values and labels.
std::uint64_t dataset_hash(const SvmDataset& data);

/// Rows phi_i [theta_i^T, 1]; N x (d + 1), bias column last.
SparseMatrix design_matrix(const SvmDataset& data);
LinearOperator build_design_matrix(const SvmDataset& data);

/// minimise sum_i max(0, 1 - (Lx)_i) + delta ||w||_1 over x = (w, b), posed as
/// 0 in A x + L^* B(L x) with A = d(delta ||.||_1 on w), B = d(hinge), C = 0.
struct SvmProblem {
    SvmDataset dataset;
    double delta = 0.0;
    SparseMatrix design;
    LinearOperator op;
    PdProblem pd;
};

SvmProblem assemble_problem(SvmDataset dataset, double delta);

/// Component-wise residuals of the optimality conditions
///     -(L^* mu)_j in delta d|x_j|  (j < d),   (L^* mu)_d = 0,
///     (L x)_i in d f_i^*(mu_i)   with mu_i in [-1, 0].
/// `zero_tol` decides when a coordinate counts as sitting on a kink.
struct OptimalityReport {
    double primal = 0.0;     // max over the l1 / bias conditions
    double dual = 0.0;       // max over the hinge conditions
    double box = 0.0;        // max distance of mu from [-1, 0]
    double max() const;
};

OptimalityReport check_optimality(const SvmProblem& problem, const PrimalDualPoint& z,
                                  double zero_tol = 1e-12);

struct ReferenceOptions {
    double successive_tol = 1e-15;
    std::size_t max_iters = 10'000'000;
    /// Empty disables the on-disk cache.
    std::filesystem::path cache_dir;
};

struct ReferenceSolution {
    PrimalDualPoint z;
    std::size_t iterations = 0;
    double last_dx = 0.0;
    double last_dmu = 0.0;
    bool converged = false;
    bool from_cache = false;
    std::filesystem::path cache_file;
};

/// Chambolle-Pock from the origin until both successive differences are
/// <= successive_tol (or the cap is hit, in which case the last point is
/// returned with converged = false).
///
/// Cached results live in `cache_dir/ref-<key>.txt`, key = FNV-1a of the
/// dataset hash and the bit patterns of delta, tau, sigma. The file is text:
///
///     dwifob-reference 1
///     key <16 hex digits>
///     dims <n> <N>
///     iterations <k>
///     converged <0|1>
///     dx <hexfloat>
///     dmu <hexfloat>
///     <n lines of x*, hexfloat>
///     <N lines of mu*, hexfloat>
///
/// Writers hold an exclusive flock on `ref-<key>.lock` while computing and
/// publish through rename, so concurrent processes compute a key once. A file
/// that cannot be parsed is treated as a miss and overwritten.
ReferenceSolution compute_reference_solution(const SvmProblem& problem, const PdMetric& metric,
                                             const ReferenceOptions& options = {});

std::uint64_t reference_key(const SvmProblem& problem, const PdMetric& metric);

}  // namespace dwifob
