#pragma once

// Local refinement methods for min f(w, x) over a product of balls:
//   - Polyak subgradient (needs the optimal value),
//   - subgradient with geometrically decaying step lambda * q^k,
//   - prox-linear, whose convex subproblems are solved by graph-splitting
//     ADMM.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbd/geometry.hpp"
#include "rbd/model.hpp"

namespace rbd {

struct AdmmConfig {
  double rho = 0.0;    // <= 0 selects 1/m
  double alpha = 1.0;  // prox weight 1/alpha used when no beta is given
  double eps_decay = 0.25;  // inner tolerance eps_k = eps_decay^k at outer step k
  std::size_t max_inner = 20000;
};

struct SolverConfig {
  std::size_t max_iters = 500;
  double lambda0 = 1.0;
  double decay_q = 0.98;
  std::optional<double> min_value;  // Polyak target; 0 is implied only without outliers
  std::optional<double> prox_beta;  // falls back to 1 / admm.alpha
  FeasibleRegion region;
  double tol_rel_err = 0.0;  // <= 0 disables the relative-error exit
  std::size_t stall_window = 50;
  double stall_tol = 1e-14;
  AdmmConfig admm;

  void validate() const;
};

struct TraceRecord {
  std::size_t iter = 0;
  double objective = 0.0;
  double relative_error = 0.0;
  double dist_to_solset = 0.0;
  double step_size = 0.0;
  std::size_t inner_iters = 0;
  bool inner_exhausted = false;
};

enum class ExitReason { MaxIters, ZeroSubgradient, Tolerance, Stalled };

struct Trace {
  std::vector<TraceRecord> records;
  ExitReason exit = ExitReason::MaxIters;
  std::uint64_t matvecs = 0;

  const TraceRecord& last() const { return records.back(); }
};

struct SolveResult {
  SignalPair point;
  Trace trace;
};

const char* to_string(ExitReason reason);

SolveResult polyak_subgradient(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg);
SolveResult geometric_subgradient(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg);
SolveResult prox_linear(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg);

// Constraint on an ADMM step z: anchor + z must lie in the region, checked
// separately on the first `split` coordinates and on the rest.
struct StepRegion {
  FeasibleRegion region;
  Vector anchor;  // empty means the origin
  std::size_t split = 0;

  Vector project(const Vector& z) const;
};

// Scaled dual multipliers carried between consecutive prox-linear
// subproblems, whose optimal duals change little near convergence.
struct AdmmDuals {
  Vector lambda;
  Vector nu;
};

struct AdmmResult {
  Vector z;
  std::size_t iterations = 0;
  bool converged = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  AdmmDuals duals;
};

// argmin over z in the step region of (1/m)||A z - y~||_1 + (beta/2)||z||^2.
AdmmResult admm_lad_prox(const LinearMap& a, const Vector& y_tilde, double beta, const AdmmConfig& cfg,
                         const StepRegion& region, double eps, const AdmmDuals* warm = nullptr);

// (1/m)||A z - y~||_1 + (beta/2)||z||^2
double prox_subproblem_value(const LinearMap& a, const Vector& y_tilde, double beta, const Vector& z);

// argmin_t (1/m)|t - y~| + (rho/2)(t - v)^2, elementwise.
Vector soft_threshold_toward(const Vector& v, const Vector& y_tilde, double threshold);

}  // namespace rbd
