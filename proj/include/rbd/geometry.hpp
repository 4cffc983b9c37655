#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "rbd/linops.hpp"
#include "rbd/model.hpp"

namespace rbd {

// Product of two centered balls of equal radius. An infinite radius means
// no constraint.
struct FeasibleRegion {
  double radius = std::numeric_limits<double>::infinity();

  static FeasibleRegion unconstrained() { return {}; }
  static FeasibleRegion ball(double radius);
  bool bounded() const { return radius < std::numeric_limits<double>::infinity(); }
};

// Nearest point of the ball {v : ||v - center|| <= radius}.
Vector project_ball(const Vector& v, const Vector& center, double radius);

SignalPair project_feasible(const SignalPair& p, const FeasibleRegion& region);

// { (a w_bar, x_bar / a) : 1/nu <= |a| <= nu }
struct SolutionSet {
  GroundTruth truth;
  double nu = 1.0;
};

// Euclidean distance from p to the solution set. The scalar a is found from
// the real roots of the stationarity quartic  b a^4 - a_ a^3 + c a - e = 0
// on each sign interval, compared against the interval endpoints.
double dist_to_solution_set(const SignalPair& p, const SolutionSet& sol);

// Squared distance for a fixed scale a.
double squared_dist_at_scale(const SignalPair& p, const GroundTruth& truth, double scale);

// ||w x^T - w_bar x_bar^T||_F without forming either outer product, accurate
// to roughly machine epsilon in absolute terms near exact recovery.
double frobenius_gap(const SignalPair& p, const GroundTruth& truth);

// frobenius_gap / ||w_bar x_bar^T||_F
double relative_error(const SignalPair& p, const GroundTruth& truth);

struct LandscapeEstimate {
  double c_lower = 0.0;    // min of (1/m)||A(X)||_1 over samples
  double c_upper = 0.0;    // max of the same
  double c_outlier = 0.0;  // min of (1/m)(||A_in(X)||_1 - ||A_out(X)||_1)
  std::size_t sample_count = 0;
};

// Monte-Carlo probe of the l1/l2 restricted isometry constants over unit
// Frobenius matrices of rank at most two, and of the outlier gap.
LandscapeEstimate estimate_rip_constants(const MeasurementOperator& op,
                                         const std::vector<bool>& outlier_mask,
                                         std::size_t samples, std::uint64_t seed);

struct SharpnessScan {
  double worst_ratio = std::numeric_limits<double>::infinity();
  double bound = 0.0;  // sqrt(M) / (2 sqrt(2) (nu + 1))
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::size_t counterexamples = 0;  // ratio < bound - 1e-6
};

double sharpness_bound(const SolutionSet& sol);

// Uniform samples in the ball product of radius nu sqrt(M), reporting the
// smallest ratio ||w x^T - w_bar x_bar^T||_F / dist((w, x), S*).
SharpnessScan sharpness_witness_scan(const SolutionSet& sol, std::size_t samples, std::uint64_t seed);

}  // namespace rbd
