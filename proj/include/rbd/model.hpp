#pragma once

// Problem instances for robust blind deconvolution and the l1 bilinear loss
//
//   f(w, x) = (1/m) || (Lw) .* (Rx) - y ||_1
//
// together with its subgradient and the linearization used by prox-linear.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "rbd/linops.hpp"

namespace rbd {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// splitmix64 finalizer chained over the inputs. Used for every derived
// stream so that results depend only on (base seed, coordinates).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords);

using Rng = std::mt19937_64;

struct SignalPair {
  Vector w;
  Vector x;
};

struct GroundTruth {
  Vector w_bar;
  Vector x_bar;

  // ||w_bar x_bar^T||_F
  double magnitude() const { return w_bar.norm() * x_bar.norm(); }
};

enum class SensingModel { Gaussian, PartialHadamardLeft };

struct IndependentGaussian {
  double sigma = 1.0;
};

// Outliers are exact measurements of a different pair. Empty vectors are
// drawn at generation time from the instance stream.
struct ImplantedSignal {
  Vector w_imp;
  Vector x_imp;
};

struct NoiseSpec {
  double p_fail = 0.0;
  std::variant<IndependentGaussian, ImplantedSignal> kind = IndependentGaussian{};
};

struct InstanceSpec {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t m = 0;
  SensingModel model = SensingModel::Gaussian;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  double magnitude = 1.0;  // M = ||w_bar|| * ||x_bar||
  double nu = 1.4142135623730951;
};

struct ProblemInstance {
  InstanceSpec spec;
  MeasurementOperator op;
  Vector y;
  GroundTruth truth;
  std::vector<bool> outlier_mask;

  std::size_t m() const { return op.measurements(); }
  std::size_t d1() const { return op.left_dim(); }
  std::size_t d2() const { return op.right_dim(); }
  std::size_t outlier_count() const;
};

ProblemInstance generate_instance(const InstanceSpec& spec);

// Wraps an externally supplied operator and observations. Truth and mask
// are taken as given.
ProblemInstance make_instance(MeasurementOperator op, Vector y, GroundTruth truth,
                              std::vector<bool> outlier_mask, double nu = 1.4142135623730951);

Vector residual(const ProblemInstance& inst, const SignalPair& p);
double objective(const ProblemInstance& inst, const SignalPair& p);

// (1/m) [ L^T(s .* Rx) ; R^T(s .* Lw) ] with s = sign(residual), sign(0) = 0.
Vector subgradient(const ProblemInstance& inst, const SignalPair& p);

Vector concat(const SignalPair& p);
SignalPair split(const Vector& z, std::size_t d1);

// Row i of the linearization at (w_k, x_k) is
//   A_i = [ <x_k, r_i> l_i^T | <l_i, w_k> r_i^T ],
// with offset y~_i = y_i - <l_i, w_k><r_i, x_k>. The model value of a step z
// is (1/m) ||A z - y~||_1.
class LinearizedResidual final : public LinearMap {
 public:
  LinearizedResidual(const ProblemInstance& inst, const SignalPair& base);

  std::size_t rows() const override { return static_cast<std::size_t>(offset_.size()); }
  std::size_t cols() const override { return d1_ + d2_; }
  std::size_t left_dim() const { return d1_; }
  const Vector& offset() const { return offset_; }
  bool prefers_dense() const override { return is_dense(op_->left()) && is_dense(op_->right()); }

  Vector apply(const Vector& z) const override;
  Vector apply_transpose(const Vector& u) const override;
  double model_value(const Vector& z) const;
  RowMatrix dense() const override;

 private:
  const MeasurementOperator* op_;
  std::size_t d1_;
  std::size_t d2_;
  Vector lw_;
  Vector rx_;
  Vector offset_;
};

// Flat text dump: generation parameters plus mask and y. Loading
// regenerates the instance from its parameters and checks that mask and y
// reproduce exactly.
void save_instance(const ProblemInstance& inst, std::ostream& out);
ProblemInstance load_instance(std::istream& in);

const char* to_string(SensingModel model);
std::optional<SensingModel> parse_sensing_model(const std::string& name);

}  // namespace rbd
