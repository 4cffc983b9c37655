#include "rbd/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace rbd {

namespace {

Vector gaussian(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

// Two orthonormal vectors (second is zero when n == 1).
std::array<Vector, 2> orthonormal_pair(std::size_t n, Rng& rng) {
  Vector u1 = gaussian(n, rng);
  u1.normalize();
  if (n == 1) return {u1, Vector::Zero(1)};
  Vector u2;
  do {
    u2 = gaussian(n, rng);
    u2 -= u1.dot(u2) * u1;
  } while (u2.norm() < 1e-8);
  u2.normalize();
  return {u1, u2};
}

Vector uniform_ball(std::size_t n, double radius, Rng& rng) {
  Vector v;
  do {
    v = gaussian(n, rng);
  } while (v.norm() == 0.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(n));
  return v * (r / v.norm());
}

}  // namespace

FeasibleRegion FeasibleRegion::ball(double radius) {
  if (!(radius > 0.0)) throw ConfigError("feasible region radius must be positive");
  return FeasibleRegion{radius};
}

Vector project_ball(const Vector& v, const Vector& center, double radius) {
  const Vector diff = v - center;
  const double n = diff.norm();
  if (n <= radius) return v;
  return center + diff * (radius / n);
}

SignalPair project_feasible(const SignalPair& p, const FeasibleRegion& region) {
  if (!region.bounded()) return p;
  auto shrink = [&](const Vector& v) -> Vector {
    const double n = v.norm();
    return n <= region.radius ? v : Vector(v * (region.radius / n));
  };
  return {shrink(p.w), shrink(p.x)};
}

double squared_dist_at_scale(const SignalPair& p, const GroundTruth& truth, double scale) {
  return (p.w - scale * truth.w_bar).squaredNorm() + (p.x - truth.x_bar / scale).squaredNorm();
}

double dist_to_solution_set(const SignalPair& p, const SolutionSet& sol) {
  const double nu = sol.nu;
  const double a = p.w.dot(sol.truth.w_bar);
  const double b = sol.truth.w_bar.squaredNorm();
  const double c = p.x.dot(sol.truth.x_bar);
  const double e = sol.truth.x_bar.squaredNorm();

  // Companion matrix of s^4 - (a/b) s^3 + (c/b) s - e/b.
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  companion(3, 2) = 1.0;
  companion(0, 3) = e / b;
  companion(1, 3) = -c / b;
  companion(2, 3) = 0.0;
  companion(3, 3) = a / b;
  Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);

  std::vector<double> candidates = {1.0 / nu, nu, -1.0 / nu, -nu};
  if (solver.info() == Eigen::Success) {
    for (const std::complex<double>& root : solver.eigenvalues()) {
      const double r = root.real();
      candidates.push_back(std::clamp(r, 1.0 / nu, nu));
      candidates.push_back(std::clamp(r, -nu, -1.0 / nu));
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (double s : candidates) best = std::min(best, squared_dist_at_scale(p, sol.truth, s));
  return std::sqrt(best);
}

double frobenius_gap(const SignalPair& p, const GroundTruth& truth) {
  // w x^T - w_bar x_bar^T = U V^T with U = [w, w_bar], V = [x, -x_bar]. With
  // thin QR factors U = Q_u R_u and V = Q_v R_v the norm is ||R_u R_v^T||_F,
  // which avoids the cancellation of the expanded inner-product formula.
  if (p.w == truth.w_bar && p.x == truth.x_bar) return 0.0;
  const auto d1 = p.w.size();
  const auto d2 = p.x.size();
  Eigen::MatrixXd u(d1, 2), v(d2, 2);
  u << p.w, truth.w_bar;
  v << p.x, -truth.x_bar;
  auto r_factor = [](const Eigen::MatrixXd& a) -> Eigen::Matrix2d {
    Eigen::Matrix2d r = Eigen::Matrix2d::Zero();
    if (a.rows() == 1) {
      r.row(0) = a.row(0);
      return r;
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    r = qr.matrixQR().topRows<2>().triangularView<Eigen::Upper>();
    return r;
  };
  return (r_factor(u) * r_factor(v).transpose()).norm();
}

double relative_error(const SignalPair& p, const GroundTruth& truth) {
  return frobenius_gap(p, truth) / truth.magnitude();
}

LandscapeEstimate estimate_rip_constants(const MeasurementOperator& op,
                                         const std::vector<bool>& outlier_mask,
                                         std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("rip probe needs at least one sample");
  if (outlier_mask.size() != op.measurements()) throw DimensionError("outlier mask length != m");
  Rng rng(derive_seed(seed, {0x819ULL}));
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi / 4.0);
  const double inv_m = 1.0 / static_cast<double>(op.measurements());

  LandscapeEstimate est;
  est.c_lower = std::numeric_limits<double>::infinity();
  est.c_upper = 0.0;
  est.c_outlier = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < samples; ++k) {
    const auto u = orthonormal_pair(op.left_dim(), rng);
    const auto v = orthonormal_pair(op.right_dim(), rng);
    double s1 = 1.0, s2 = 0.0;
    if (op.left_dim() > 1 && op.right_dim() > 1) {
      const double theta = angle(rng);
      s1 = std::cos(theta);
      s2 = std::sin(theta);
    }
    Vector ax = s1 * bilinear_forward(op, u[0], v[0]);
    if (s2 != 0.0) ax += s2 * bilinear_forward(op, u[1], v[1]);

    double inl = 0.0, outl = 0.0;
    for (std::size_t i = 0; i < op.measurements(); ++i)
      (outlier_mask[i] ? outl : inl) += std::abs(ax[static_cast<Eigen::Index>(i)]);
    const double total = (inl + outl) * inv_m;
    const double gap = (inl - outl) * inv_m;
    est.c_lower = std::min(est.c_lower, total);
    est.c_upper = std::max(est.c_upper, total);
    est.c_outlier = std::min(est.c_outlier, gap);
  }
  est.sample_count = samples;
  return est;
}

double sharpness_bound(const SolutionSet& sol) {
  return std::sqrt(sol.truth.magnitude()) / (2.0 * std::numbers::sqrt2 * (sol.nu + 1.0));
}

SharpnessScan sharpness_witness_scan(const SolutionSet& sol, std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("sharpness scan needs at least one sample");
  Rng rng(derive_seed(seed, {0x54A2ULL}));
  const double radius = sol.nu * std::sqrt(sol.truth.magnitude());
  const auto d1 = static_cast<std::size_t>(sol.truth.w_bar.size());
  const auto d2 = static_cast<std::size_t>(sol.truth.x_bar.size());

  SharpnessScan scan;
  scan.bound = sharpness_bound(sol);
  for (std::size_t k = 0; k < samples; ++k) {
    const SignalPair p{uniform_ball(d1, radius, rng), uniform_ball(d2, radius, rng)};
    const double dist = dist_to_solution_set(p, sol);
    if (dist < 1e-9) {
      ++scan.skipped;
      continue;
    }
    const double ratio = frobenius_gap(p, sol.truth) / dist;
    ++scan.evaluated;
    scan.worst_ratio = std::min(scan.worst_ratio, ratio);
    if (ratio < scan.bound - 1e-6) ++scan.counterexamples;
  }
  return scan;
}

}  // namespace rbd
