#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace esde {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
/// N x 2 planar coordinates, one particle per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Invalid argument or numerical domain violation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or unreadable input artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical procedure failed (non-convergence, divergence, singularity).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace esde
