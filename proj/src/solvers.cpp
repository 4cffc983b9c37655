#include "rbd/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Cholesky>

namespace rbd {

namespace {

constexpr std::size_t kDenseFactorLimit = 4096;

// Solves (I + A^T A) z = b. Dense maps are factored once; structured maps
// use conjugate gradients with warm starts.
class NormalEquations {
 public:
  NormalEquations(const LinearMap& a) : a_(a) {
    if (a.prefers_dense() && a.cols() <= kDenseFactorLimit) {
      const RowMatrix dense = a.dense();
      Matrix gram = Matrix::Identity(dense.cols(), dense.cols());
      gram.selfadjointView<Eigen::Lower>().rankUpdate(dense.transpose());
      llt_ = std::make_unique<Eigen::LLT<Matrix>>(gram);
    }
  }

  Vector solve(const Vector& b, const Vector& warm, double tol) const {
    if (llt_) return llt_->solve(b);
    Vector z = warm;
    Vector r = b - apply(z);
    Vector p = r;
    double rr = r.squaredNorm();
    const double stop = std::max(tol * b.norm(), 1e-300);
    for (std::size_t k = 0; k < a_.cols() && std::sqrt(rr) > stop; ++k) {
      const Vector ap = apply(p);
      const double step = rr / p.dot(ap);
      z += step * p;
      r -= step * ap;
      const double next = r.squaredNorm();
      p = r + (next / rr) * p;
      rr = next;
    }
    return z;
  }

 private:
  Vector apply(const Vector& z) const { return z + a_.apply_transpose(a_.apply(z)); }

  const LinearMap& a_;
  std::unique_ptr<Eigen::LLT<Matrix>> llt_;
};

bool in_region(const StepRegion& region, const Vector& z) {
  return (region.project(z) - z).norm() <= 1e-12 * (1.0 + z.norm());
}

class Recorder {
 public:
  Recorder(const ProblemInstance& inst, const SolverConfig& cfg)
      : inst_(inst), cfg_(cfg), sol_{inst.truth, inst.spec.nu}, start_matvecs_(matvec_count()) {}

  // Returns the exit reason if the run should stop after this record.
  std::optional<ExitReason> record(std::size_t iter, const SignalPair& p, double f, double step,
                                   std::size_t inner = 0, bool exhausted = false) {
    TraceRecord rec;
    rec.iter = iter;
    rec.objective = f;
    rec.relative_error = relative_error(p, inst_.truth);
    rec.dist_to_solset = dist_to_solution_set(p, sol_);
    rec.step_size = step;
    rec.inner_iters = inner;
    rec.inner_exhausted = exhausted;
    trace_.records.push_back(rec);
    if (cfg_.tol_rel_err > 0.0 && rec.relative_error <= cfg_.tol_rel_err) return ExitReason::Tolerance;
    const std::size_t n = trace_.records.size();
    if (cfg_.stall_window > 0 && n > cfg_.stall_window) {
      const double old = trace_.records[n - 1 - cfg_.stall_window].objective;
      if (std::abs(old - f) < cfg_.stall_tol) return ExitReason::Stalled;
    }
    return std::nullopt;
  }

  Trace finish(ExitReason reason) {
    trace_.exit = reason;
    trace_.matvecs = matvec_count() - start_matvecs_;
    return std::move(trace_);
  }

 private:
  const ProblemInstance& inst_;
  const SolverConfig& cfg_;
  SolutionSet sol_;
  std::uint64_t start_matvecs_;
  Trace trace_;
};

// Shared driver for the two subgradient methods; `step_length` maps
// (iteration, objective, ||zeta||) to the multiplier applied to zeta.
template <class StepFn>
SolveResult subgradient_loop(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg,
                             StepFn step_length) {
  Recorder rec(inst, cfg);
  SignalPair p = project_feasible(start, cfg.region);
  double f = objective(inst, p);
  if (auto stop = rec.record(0, p, f, 0.0)) return {p, rec.finish(*stop)};
  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    const Vector zeta = subgradient(inst, p);
    const double gnorm = zeta.norm();
    if (gnorm == 0.0) return {p, rec.finish(ExitReason::ZeroSubgradient)};
    const double mult = step_length(k, f, gnorm);
    const Vector next = concat(p) - mult * zeta;
    p = project_feasible(split(next, inst.d1()), cfg.region);
    f = objective(inst, p);
    if (auto stop = rec.record(k + 1, p, f, mult * gnorm)) return {p, rec.finish(*stop)};
  }
  return {p, rec.finish(ExitReason::MaxIters)};
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (!(lambda0 > 0.0)) throw ConfigError("lambda must be positive");
  if (!(decay_q > 0.0 && decay_q < 1.0)) throw ConfigError("q must lie in (0, 1)");
  if (prox_beta && !(*prox_beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(admm.alpha > 0.0)) throw ConfigError("admm alpha must be positive");
  if (admm.max_inner < 1) throw ConfigError("admm max_inner must be at least 1");
  if (!(admm.eps_decay > 0.0 && admm.eps_decay < 1.0)) throw ConfigError("admm eps decay must lie in (0, 1)");
}

const char* to_string(ExitReason reason) {
  switch (reason) {
    case ExitReason::MaxIters: return "max-iters";
    case ExitReason::ZeroSubgradient: return "zero-subgradient";
    case ExitReason::Tolerance: return "tolerance";
    case ExitReason::Stalled: return "stalled";
  }
  return "unknown";
}

SolveResult polyak_subgradient(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg) {
  cfg.validate();
  double target = 0.0;
  if (cfg.min_value) {
    target = *cfg.min_value;
  } else if (inst.outlier_count() > 0) {
    throw ConfigError("Polyak steps need the optimal value; supply min_value for corrupted instances");
  }
  return subgradient_loop(inst, start, cfg, [&](std::size_t, double f, double gnorm) {
    return std::max(f - target, 0.0) / (gnorm * gnorm);
  });
}

SolveResult geometric_subgradient(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg) {
  cfg.validate();
  return subgradient_loop(inst, start, cfg, [&](std::size_t k, double, double gnorm) {
    return cfg.lambda0 * std::pow(cfg.decay_q, static_cast<double>(k)) / gnorm;
  });
}

Vector StepRegion::project(const Vector& z) const {
  if (!region.bounded()) return z;
  const auto n = z.size();
  const auto d1 = static_cast<Eigen::Index>(split);
  Vector center = anchor.size() ? Vector(-anchor) : Vector::Zero(n);
  Vector out(n);
  out.head(d1) = project_ball(z.head(d1), center.head(d1), region.radius);
  out.tail(n - d1) = project_ball(z.tail(n - d1), center.tail(n - d1), region.radius);
  return out;
}

Vector soft_threshold_toward(const Vector& v, const Vector& y_tilde, double threshold) {
  return y_tilde + (v - y_tilde).unaryExpr([threshold](double d) {
    return d > threshold ? d - threshold : (d < -threshold ? d + threshold : 0.0);
  });
}

double prox_subproblem_value(const LinearMap& a, const Vector& y_tilde, double beta, const Vector& z) {
  return (a.apply(z) - y_tilde).lpNorm<1>() / static_cast<double>(a.rows()) + 0.5 * beta * z.squaredNorm();
}

AdmmResult admm_lad_prox(const LinearMap& a, const Vector& y_tilde, double beta, const AdmmConfig& cfg,
                         const StepRegion& region, double eps, const AdmmDuals* warm) {
  if (!(eps > 0.0)) throw ConfigError("admm tolerance must be positive");
  if (!(beta > 0.0)) throw ConfigError("admm prox weight must be positive");
  if (static_cast<std::size_t>(y_tilde.size()) != a.rows()) throw DimensionError("admm: offset length != rows");
  const auto n = static_cast<Eigen::Index>(a.cols());
  const auto m = static_cast<Eigen::Index>(a.rows());
  const double rho = cfg.rho > 0.0 ? cfg.rho : 1.0 / static_cast<double>(m);
  const double threshold = 1.0 / (static_cast<double>(m) * rho);
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  const NormalEquations normal(a);
  Vector z = Vector::Zero(n), t = Vector::Zero(m);
  Vector lam = Vector::Zero(n), nu = Vector::Zero(m);
  if (warm && warm->lambda.size() == n && warm->nu.size() == m) {
    lam = warm->lambda;
    nu = warm->nu;
  }
  Vector z_prime = z;

  AdmmResult res;
  for (std::size_t k = 0; k < cfg.max_inner; ++k) {
    // Both quadratics are isotropic: the minimizer is a rescale, then a ball projection.
    z_prime = region.project((rho / (beta + rho)) * (z - lam));
    const Vector t_prime = soft_threshold_toward(t - nu, y_tilde, threshold);

    const Vector c = z_prime + lam;
    const Vector d = t_prime + nu;
    const Vector z_next = normal.solve(c + a.apply_transpose(d), z, 0.1 * eps);
    const Vector t_next = a.apply(z_next);

    const Vector lam_next = lam + (z_prime - z_next);
    const Vector nu_next = nu + (t_prime - t_next);

    res.primal_residual = std::sqrt((z_next - z).squaredNorm() + (t_next - t).squaredNorm());
    res.dual_residual = std::sqrt((lam_next - lam).squaredNorm() + (nu_next - nu).squaredNorm());
    const double primal_tol = eps * (sqrt_n + std::max(z.norm(), t.norm()));
    const double dual_tol = eps * (sqrt_n + std::max(lam.norm(), nu.norm()));

    z = z_next;
    t = t_next;
    lam = lam_next;
    nu = nu_next;
    res.iterations = k + 1;
    if (res.primal_residual <= primal_tol && res.dual_residual <= dual_tol) {
      res.converged = true;
      break;
    }
  }

  // Best of the region-feasible candidates; z = 0 keeps the model from
  // ascending under a loose tolerance.
  Vector best = Vector::Zero(n);
  double best_val = in_region(region, best) ? prox_subproblem_value(a, y_tilde, beta, best)
                                            : std::numeric_limits<double>::infinity();
  for (const Vector* cand : {&z_prime, &z}) {
    if (!in_region(region, *cand)) continue;
    const double v = prox_subproblem_value(a, y_tilde, beta, *cand);
    if (v < best_val) {
      best_val = v;
      best = *cand;
    }
  }
  if (!std::isfinite(best_val)) best = z_prime;
  res.z = std::move(best);
  res.duals = {std::move(lam), std::move(nu)};
  return res;
}

SolveResult prox_linear(const ProblemInstance& inst, const SignalPair& start, const SolverConfig& cfg) {
  cfg.validate();
  const double beta = cfg.prox_beta ? *cfg.prox_beta : 1.0 / cfg.admm.alpha;
  Recorder rec(inst, cfg);
  SignalPair p = project_feasible(start, cfg.region);
  double f = objective(inst, p);
  if (auto stop = rec.record(0, p, f, 0.0)) return {p, rec.finish(*stop)};
  AdmmDuals duals;
  for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
    const LinearizedResidual lin(inst, p);
    const StepRegion region{cfg.region, concat(p), inst.d1()};
    const double eps = std::max(std::pow(cfg.admm.eps_decay, static_cast<double>(k)), 1e-300);
    AdmmResult inner = admm_lad_prox(lin, lin.offset(), beta, cfg.admm, region, eps, &duals);
    duals = std::move(inner.duals);
    p = project_feasible(split(concat(p) + inner.z, inst.d1()), cfg.region);
    f = objective(inst, p);
    if (auto stop = rec.record(k, p, f, inner.z.norm(), inner.iterations, !inner.converged))
      return {p, rec.finish(*stop)};
  }
  return {p, rec.finish(ExitReason::MaxIters)};
}

}  // namespace rbd
