// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rbd/harness.hpp"

using namespace rbd;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ExperimentSpec recovery_spec(SolverKind solver, double c, double p_fail, std::size_t trials, double threshold,
                             std::size_t iters) {
  ExperimentSpec s;
  s.kind = ExperimentKind::PhaseTransition;
  s.d1 = 100;
  s.d2 = 100;
  s.m_ratios = {c};
  s.p_fails = {p_fail};
  s.trials = trials;
  s.base_seed = 1;
  s.solver = solver;
  s.success_threshold = threshold;
  s.max_iters = iters;
  s.lambda0 = 1.0;
  s.decay_q = 0.98;
  return s;
}

struct CellRun {
  double rate = 0.0;
  double seconds_per_trial = 0.0;
  std::size_t below_truth = 0;  // final objective strictly below f(truth)
  std::size_t max_iter = 0;
};

// Runs every trial of a single-cell experiment and reports the success rate.
CellRun run_cell(const ExperimentSpec& s) {
  s.validate();
  CellRun out;
  std::size_t ok = 0;
  const auto t0 = Clock::now();
  for (std::size_t t = 0; t < s.trials; ++t) {
    const ProblemInstance inst = cell_instance(s, 0, 0, t);
    const TrialOutcome res = run_trial(s, inst, s.decay_q);
    const auto& last = res.solve.trace.last();
    if (last.relative_error <= s.success_threshold) ++ok;
    if (objective(inst, res.solve.point) < objective(inst, {inst.truth.w_bar, inst.truth.x_bar})) ++out.below_truth;
    out.max_iter = std::max(out.max_iter, last.iter);
  }
  out.seconds_per_trial = seconds_since(t0) / static_cast<double>(s.trials);
  out.rate = static_cast<double>(ok) / static_cast<double>(s.trials);
  return out;
}

Verdict noiseless_polyak() {
  const CellRun r = run_cell(recovery_spec(SolverKind::Polyak, 8, 0.0, 20, 1e-5, 500));
  return {r.rate >= 0.95 && r.seconds_per_trial <= 60.0,
          fmt("success %.2f (need >= 0.95)", r.rate) + fmt(", %.2f s/trial", r.seconds_per_trial)};
}

Verdict moderate_corruption() {
  ExperimentSpec s = recovery_spec(SolverKind::Geometric, 5, 0.25, 20, 1e-4, 2000);
  const CellRun r = run_cell(s);
  return {r.rate >= 0.80, fmt("success %.2f (need >= 0.80)", r.rate)};
}

Verdict high_corruption() {
  ExperimentSpec s = recovery_spec(SolverKind::Geometric, 8, 0.45, 20, 1e-4, 2000);
  const CellRun r = run_cell(s);
  return {r.rate >= 0.70, fmt("success %.2f (need >= 0.70)", r.rate) +
                              fmt("; final objective below f(truth) in %.0f/20 trials", double(r.below_truth))};
}

Verdict prox_linear_economy() {
  const CellRun r = run_cell(recovery_spec(SolverKind::ProxLinear, 8, 0.25, 10, 1e-8, 20));
  return {r.rate >= 0.80, fmt("success %.2f (need >= 0.80)", r.rate) +
                              fmt(", at most %.0f outer iterations", double(r.max_iter)) +
                              fmt(", %.1f s/trial", r.seconds_per_trial)};
}

Verdict hadamard_fragility() {
  ExperimentSpec s;
  s.kind = ExperimentKind::PhaseTransition;
  s.d1 = 64;
  s.d2 = 64;
  s.m_ratios = {1, 2, 3, 4, 5, 6, 7, 8};
  s.p_fails = {0.30};
  s.trials = 20;
  s.base_seed = 1;
  s.model = SensingModel::PartialHadamardLeft;
  s.solver = SolverKind::Geometric;
  s.success_threshold = 1e-4;
  s.max_iters = 2000;
  const ResultTable t = run_phase_transition(s);
  double worst = 0.0;
  std::string rates;
  for (const ResultRow* r : t.find("success_rate")) {
    worst = std::max(worst, r->value);
    rates += fmt(" %.2f", r->value);
  }
  return {worst <= 0.10, "rates for c=1..8:" + rates + " (need each <= 0.10)"};
}

Verdict sharpness_property() {
  const auto t0 = Clock::now();
  const double nu = 2.0;
  Rng rng(derive_seed(1, {6}));
  std::normal_distribution<double> g;
  auto unit = [&](int d) {
    Vector v(d);
    for (auto& e : v) e = g(rng);
    return Vector(v.normalized());
  };
  const SolutionSet sol{{unit(5), unit(5)}, nu};  // M = 1
  const double bound = sharpness_bound(sol);
  const SharpnessScan scan = sharpness_witness_scan(sol, 100000, 6);
  // Direct check of gap >= bound * dist - 1e-9 on an independent sample.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto in_ball = [&](int d) {
    const Vector dir = unit(d);
    return Vector(dir * (nu * std::pow(u01(rng), 1.0 / d)));
  };
  std::size_t violations = 0;
  for (int k = 0; k < 100000; ++k) {
    const SignalPair p{in_ball(5), in_ball(5)};
    if (frobenius_gap(p, sol.truth) < bound * dist_to_solution_set(p, sol) - 1e-9) ++violations;
  }
  const double secs = seconds_since(t0);
  return {scan.counterexamples == 0 && violations == 0 && secs <= 10.0,
          fmt("worst ratio %.4f", scan.worst_ratio) + fmt(" vs bound %.4f", bound) +
              fmt(", %.0f violations", double(violations)) + fmt(", %.2f s for 2x10^5 samples", secs)};
}

Verdict oracle_suites() {
  Rng rng(derive_seed(1, {7}));
  std::normal_distribution<double> g;
  auto randn = [&](Eigen::Index n) {
    Vector v(n);
    for (auto& e : v) e = g(rng);
    return v;
  };
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // (a) distance to the solution set
  double worst_a = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const SolutionSet sol{{randn(3), randn(2)}, 1.0 + 2.0 * unif(rng)};
    const SignalPair p{randn(3), randn(2)};
    worst_a = std::max(worst_a, std::abs(dist_to_solution_set(p, sol) - oracle::grid_distance(p, sol, 100000)));
  }

  // (b) ADMM against the exact piecewise oracle, half of them constrained
  double worst_b = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Index n = 1 + k % 2, m = 2 + k % 4;
    RowMatrix a(m, n);
    for (auto i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const Vector y = randn(m);
    const double beta = 0.3 + 1.7 * unif(rng);
    StepRegion region{FeasibleRegion::unconstrained(), Vector(), 1};
    Vector lo = Vector::Constant(n, -std::numeric_limits<double>::infinity()), hi = -lo;
    if (k % 2 == 0) {
      region.region = FeasibleRegion::ball(0.25);
      region.anchor = 0.1 * randn(n);
      lo = -region.anchor - Vector::Constant(n, 0.25);
      hi = -region.anchor + Vector::Constant(n, 0.25);
    }
    const AdmmResult res = admm_lad_prox(MatrixMap(a), y, beta, {}, region, 1e-12);
    worst_b = std::max(worst_b, (res.z - oracle::exact_prox(a, y, beta, lo, hi)).norm());
  }

  // (c) subgradient against central differences
  InstanceSpec is;
  is.d1 = 4;
  is.d2 = 3;
  is.m = 30;
  is.noise.p_fail = 0.2;
  is.seed = derive_seed(1, {7, 3});
  const ProblemInstance inst = generate_instance(is);
  double worst_c = 0.0;
  int smooth = 0;
  while (smooth < 1000) {
    const SignalPair p{randn(4), randn(3)};
    if (residual(inst, p).cwiseAbs().minCoeff() < 1e-3) continue;
    ++smooth;
    const Vector sg = subgradient(inst, p);
    const Vector z = concat(p);
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      Vector zp = z, zm = z;
      zp[j] += 1e-6;
      zm[j] -= 1e-6;
      const double fd = (objective(inst, split(zp, 4)) - objective(inst, split(zm, 4))) / 2e-6;
      worst_c = std::max(worst_c, std::abs(fd - sg[j]));
    }
  }

  // (d) structured operators against their dense materializations
  double worst_d = 0.0;
  std::bernoulli_distribution coin;
  for (int k = 0; k < 50; ++k) {
    const std::size_t d = std::size_t{1} << (1 + k % 8);
    const std::size_t blocks = 1 + static_cast<std::size_t>(k % 4);
    const std::size_t din = 1 + static_cast<std::size_t>(unif(rng) * static_cast<double>(d - 1));
    std::vector<std::vector<double>> signs(blocks, std::vector<double>(d));
    for (auto& s : signs)
      for (auto& e : s) e = coin(rng) ? 1.0 : -1.0;
    const Side h = HadamardSignOperator(d, signs, din, k % 2 == 0);
    const RowMatrix dense = to_dense(h);
    const Vector v = randn(static_cast<Eigen::Index>(din));
    const Vector u = randn(static_cast<Eigen::Index>(d * blocks));
    worst_d = std::max(worst_d, (apply_forward(h, v) - dense * v).cwiseAbs().maxCoeff());
    worst_d = std::max(worst_d, (apply_transpose(h, u) - dense.transpose() * u).cwiseAbs().maxCoeff());
  }
  InstanceSpec hs;
  hs.d1 = 16;
  hs.d2 = 5;
  hs.m = 64;
  hs.model = SensingModel::PartialHadamardLeft;
  hs.seed = derive_seed(1, {7, 4});
  const ProblemInstance hinst = generate_instance(hs);
  const LinearizedResidual lin(hinst, {randn(16), randn(5)});
  const RowMatrix ad = lin.dense();
  const Vector z = randn(21), r = randn(64);
  worst_d = std::max(worst_d, (lin.apply(z) - ad * z).cwiseAbs().maxCoeff());
  worst_d = std::max(worst_d, (lin.apply_transpose(r) - ad.transpose() * r).cwiseAbs().maxCoeff());

  const bool pass = worst_a <= 1e-6 && worst_b <= 1e-4 && worst_c <= 1e-5 && worst_d <= 1e-10;
  return {pass, fmt("(a) %.1e <= 1e-6", worst_a) + fmt(", (b) %.1e <= 1e-4", worst_b) +
                    fmt(", (c) %.1e <= 1e-5", worst_c) + fmt(", (d) %.1e <= 1e-10", worst_d)};
}

Verdict init_robustness() {
  std::vector<double> low, high;
  for (std::uint64_t t = 0; t < 50; ++t) {
    for (double sigma : {1.0, 100.0}) {
      InstanceSpec s;
      s.d1 = 50;
      s.d2 = 50;
      s.m = 800;
      s.noise.p_fail = 0.25;
      s.noise.kind = IndependentGaussian{sigma};
      s.seed = derive_seed(1, {8, t});
      const ProblemInstance inst = generate_instance(s);
      const InitEstimate est = spectral_initialize(inst);
      (sigma == 1.0 ? low : high).push_back(direction_error(est.w_dir, est.x_dir, inst.truth));
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double a = median(low), b = median(high);
  return {b - a <= 0.05, fmt("median direction error %.3f", a) + fmt(" (sigma 1) -> %.3f", b) +
                             fmt(" (sigma 100), increase %.3f <= 0.05", b - a)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"noiseless Polyak recovery, d=100, c=8", noiseless_polyak},
      {"geometric recovery, c=5, p_fail=0.25", moderate_corruption},
      {"geometric recovery, c=8, p_fail=0.45", high_corruption},
      {"prox-linear to 1e-8 within 20 outer iterations", prox_linear_economy},
      {"partial Hadamard fragility at p_fail=0.30", hadamard_fragility},
      {"sharpness inequality on 10^5 samples", sharpness_property},
      {"oracle suites", oracle_suites},
      {"initialization robustness to outlier variance", init_robustness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Verdict v{false, ""};
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("[%s] criterion %zu: %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
