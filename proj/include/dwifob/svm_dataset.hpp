#pragma once

#include "dwifob/linalg.hpp"

#include <vector>

namespace dwifob {

/// Labelled training data {(theta_i, phi_i)}: theta is N x d, labels are +-1.
struct SvmDataset {
    SparseMatrix theta;
    Vector phi;

    Eigen::Index samples() const { return theta.rows(); }
    Eigen::Index features() const { return theta.cols(); }
};

}  // namespace dwifob
