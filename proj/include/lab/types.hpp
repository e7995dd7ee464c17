#pragma once

#include <Eigen/Dense>
#include <optional>

namespace lab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Mean/covariance pair; the exact state for affine-Gaussian recursions.
struct GaussianMoments {
    Vector mean;
    Matrix cov;

    int dim() const { return static_cast<int>(mean.size()); }

    /// (cov + cov^T)/2, applied after propagation steps to stop symmetry drift.
    void resymmetrize() { cov = ((cov + cov.transpose()) * 0.5).eval(); }
};

} // namespace lab
