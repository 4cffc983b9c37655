#pragma once

// Outlier-robust spectral initialization.
//
// Measurements with small |y_i| are those where l_i or r_i is nearly
// orthogonal to the unknown direction, so the minimal eigenvectors of the
// selected second-moment matrices estimate the directions of w_bar and
// x_bar. The scale and sign then come from a one-dimensional LAD fit.

#include <vector>

#include "rbd/model.hpp"

namespace rbd {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DirectionMatrices {
  Matrix left;   // (1/m) sum_{i in sel} l_i l_i^T
  Matrix right;  // (1/m) sum_{i in sel} r_i r_i^T
};

struct InitEstimate {
  Vector w0;
  Vector x0;
  double m_hat = 0.0;  // signed LAD scale
  std::vector<std::size_t> selected;
  Vector w_dir;
  Vector x_dir;
};

// Indices with |y_i| <= lower median of |y| (order statistic ceil(m/2)).
std::vector<std::size_t> select_inliers(const Vector& y);

DirectionMatrices direction_matrices(const MeasurementOperator& op,
                                     const std::vector<std::size_t>& selected);

// Unit eigenvector of the smallest eigenvalue, first nonzero entry positive.
Vector min_eigenvector(const Matrix& m);

// argmin_beta (1/m) sum |y_i - beta a_i|, a weighted median of y_i / a_i.
double lad_scalar_fit(const Vector& y, const Vector& a);

// (1/m) sum |y_i - beta a_i|
double lad_scalar_loss(const Vector& y, const Vector& a, double beta);

InitEstimate spectral_initialize(const ProblemInstance& inst);

// min over s in {+1, -1} of ||w_dir x_dir^T - s u v^T||_F for unit u, v.
double direction_error(const Vector& w_dir, const Vector& x_dir, const GroundTruth& truth);

}  // namespace rbd
