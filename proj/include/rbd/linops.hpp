#pragma once

// Measurement operators for bilinear sensing.
//
// A measurement operator is a pair of sides (L, R), each an m x d map. The
// bilinear measurement of a pair (w, x) is the elementwise product
// (Lw) .* (Rx), i.e. the vector of l_i^T (w x^T) r_i.
//
// Two realizations exist for each side: a dense row-major matrix and a
// stack of sign-randomized Walsh-Hadamard blocks [H S_1; ...; H S_k] whose
// products cost O(k d log d).

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace rbd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

bool is_power_of_two(std::size_t n);

// In-place Walsh-Hadamard butterfly. Length must be a power of two.
void fwht_inplace(std::span<double> v, bool normalized);

Vector fwht(const Vector& v, bool normalized);

class DenseOperator {
 public:
  explicit DenseOperator(RowMatrix entries);

  std::size_t rows() const { return static_cast<std::size_t>(entries_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(entries_.cols()); }
  const RowMatrix& entries() const { return entries_; }

 private:
  RowMatrix entries_;
};

// Stack of k blocks H * diag(s_j), each block_dim x block_dim, restricted to
// the first input_dim columns. With normalized = true, H carries the 1/sqrt(d)
// scale; otherwise its entries are +-1.
class HadamardSignOperator {
 public:
  HadamardSignOperator(std::size_t block_dim, std::vector<std::vector<double>> signs,
                       std::size_t input_dim, bool normalized);

  // All-plus signs; the classic partial Hadamard matrix when k = 1.
  static HadamardSignOperator partial(std::size_t block_dim, std::size_t block_count,
                                      std::size_t input_dim, bool normalized);

  std::size_t block_count() const { return signs_.size(); }
  std::size_t block_dim() const { return block_dim_; }
  std::size_t input_dim() const { return input_dim_; }
  bool normalized() const { return normalized_; }
  const std::vector<std::vector<double>>& signs() const { return signs_; }

  std::size_t rows() const { return block_dim_ * signs_.size(); }
  std::size_t cols() const { return input_dim_; }

 private:
  std::size_t block_dim_;
  std::size_t input_dim_;
  bool normalized_;
  std::vector<std::vector<double>> signs_;
};

using Side = std::variant<DenseOperator, HadamardSignOperator>;

std::size_t rows(const Side& side);
std::size_t cols(const Side& side);
bool is_dense(const Side& side);

Vector apply_forward(const Side& side, const Vector& v);
Vector apply_transpose(const Side& side, const Vector& u);

// Materialized m x d matrix; used by oracles and by the initializer.
RowMatrix to_dense(const Side& side);

class MeasurementOperator {
 public:
  MeasurementOperator(Side left, Side right);

  const Side& left() const { return left_; }
  const Side& right() const { return right_; }
  std::size_t measurements() const { return rows(left_); }
  std::size_t left_dim() const { return cols(left_); }
  std::size_t right_dim() const { return cols(right_); }

 private:
  Side left_;
  Side right_;
};

// Abstract m x n linear map with its transpose.
class LinearMap {
 public:
  virtual ~LinearMap() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual Vector apply(const Vector& z) const = 0;
  virtual Vector apply_transpose(const Vector& u) const = 0;
  // True when materializing the map is cheap relative to its products.
  virtual bool prefers_dense() const { return false; }
  virtual RowMatrix dense() const;
};

// Explicit matrix wrapper.
class MatrixMap final : public LinearMap {
 public:
  explicit MatrixMap(RowMatrix a) : a_(std::move(a)) {}
  std::size_t rows() const override { return static_cast<std::size_t>(a_.rows()); }
  std::size_t cols() const override { return static_cast<std::size_t>(a_.cols()); }
  Vector apply(const Vector& z) const override;
  Vector apply_transpose(const Vector& u) const override;
  bool prefers_dense() const override { return true; }
  RowMatrix dense() const override { return a_; }

 private:
  RowMatrix a_;
};

// (Lw) .* (Rx); never forms w x^T.
Vector bilinear_forward(const MeasurementOperator& op, const Vector& w, const Vector& x);

// Per-thread count of operator products (apply_forward / apply_transpose).
// Harness runs read the delta around a solve.
std::uint64_t matvec_count();
void reset_matvec_count();

}  // namespace rbd
