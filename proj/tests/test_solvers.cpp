#include <cmath>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "rbd/init.hpp"
#include "rbd/solvers.hpp"

using namespace rbd;

namespace {

ProblemInstance instance(std::size_t d, double c, double p_fail, std::uint64_t seed) {
  InstanceSpec s;
  s.d1 = d;
  s.d2 = d;
  s.m = static_cast<std::size_t>(c * 2 * d);
  s.noise.p_fail = p_fail;
  s.seed = seed;
  return generate_instance(s);
}

Vector randn(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (auto& e : v) e = g(rng);
  return v;
}

SignalPair near_truth(const ProblemInstance& inst, double radius, std::mt19937_64& rng) {
  const auto d1 = static_cast<Eigen::Index>(inst.d1()), d2 = static_cast<Eigen::Index>(inst.d2());
  Vector dz = randn(d1 + d2, rng);
  dz *= radius / dz.norm();
  return {inst.truth.w_bar + dz.head(d1), inst.truth.x_bar + dz.tail(d2)};
}

StepRegion unconstrained_region(std::size_t split) { return {FeasibleRegion::unconstrained(), Vector(), split}; }

}  // namespace

TEST_CASE("config validation") {
  SolverConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.decay_q = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.lambda0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.prox_beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("Polyak from the truth exits immediately") {
  const ProblemInstance inst = instance(5, 4, 0.0, 1);
  const SolveResult res = polyak_subgradient(inst, {inst.truth.w_bar, inst.truth.x_bar}, {});
  CHECK(res.trace.exit == ExitReason::ZeroSubgradient);
  REQUIRE(res.trace.records.size() == 1);
  CHECK(res.trace.last().iter == 0);
  CHECK(res.trace.last().relative_error == 0.0);
}

TEST_CASE("Polyak needs the optimal value on corrupted data") {
  const ProblemInstance inst = instance(5, 4, 0.2, 2);
  std::mt19937_64 rng(1);
  const SignalPair start = near_truth(inst, 0.3, rng);
  CHECK_THROWS_AS(polyak_subgradient(inst, start, {}), ConfigError);
  SolverConfig cfg;
  cfg.max_iters = 1;
  cfg.min_value = objective(inst, start);  // step size zero at a non-stationary point
  const SolveResult res = polyak_subgradient(inst, start, cfg);
  CHECK(res.point.w == start.w);
  CHECK(res.point.x == start.x);
  CHECK(res.trace.last().step_size == 0.0);
}

TEST_CASE("Polyak contracts the distance to the solution set on noiseless data") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ProblemInstance inst = instance(10, 8, 0.0, 10 + seed);
    std::mt19937_64 rng(seed);
    SolverConfig cfg;
    cfg.max_iters = 200;
    cfg.tol_rel_err = 1e-12;
    const SolveResult res = polyak_subgradient(inst, near_truth(inst, 0.2, rng), cfg);
    const auto& r = res.trace.records;
    for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k].dist_to_solset <= r[k - 1].dist_to_solset * (1 + 1e-9) + 1e-15);
    CHECK(res.trace.last().relative_error <= 1e-10);
    CHECK(res.trace.exit == ExitReason::Tolerance);
  }
}

TEST_CASE("geometric subgradient steps have length lambda q^k") {
  const ProblemInstance inst = instance(6, 5, 0.2, 3);
  std::mt19937_64 rng(2);
  const SignalPair start = near_truth(inst, 0.5, rng);
  SolverConfig cfg;
  cfg.lambda0 = 0.3;
  cfg.decay_q = 0.9;
  SignalPair prev = start;
  for (std::size_t k = 0; k < 6; ++k) {
    cfg.max_iters = k + 1;
    const SolveResult res = geometric_subgradient(inst, start, cfg);
    const double moved = (concat(res.point) - concat(prev)).norm();
    CHECK(moved == doctest::Approx(0.3 * std::pow(0.9, double(k))).epsilon(1e-12));
    CHECK(res.trace.last().step_size == doctest::Approx(0.3 * std::pow(0.9, double(k))).epsilon(1e-12));
    prev = res.point;
  }
}

TEST_CASE("geometric subgradient returns a stationary start") {
  const ProblemInstance inst = instance(4, 4, 0.0, 4);
  const SignalPair start{inst.truth.w_bar, inst.truth.x_bar};
  const SolveResult res = geometric_subgradient(inst, start, {});
  CHECK(res.point.w == start.w);
  CHECK(res.trace.exit == ExitReason::ZeroSubgradient);
}

TEST_CASE("projection keeps iterates in the region") {
  const ProblemInstance inst = instance(5, 5, 0.1, 5);
  std::mt19937_64 rng(3);
  SolverConfig cfg;
  cfg.region = FeasibleRegion::ball(0.8);
  cfg.max_iters = 30;
  const SolveResult res = geometric_subgradient(inst, near_truth(inst, 2.0, rng), cfg);
  CHECK(res.point.w.norm() <= 0.8 + 1e-12);
  CHECK(res.point.x.norm() <= 0.8 + 1e-12);
}

TEST_CASE("stall exit after a flat window") {
  const ProblemInstance inst = instance(4, 4, 0.25, 6);
  std::mt19937_64 rng(4);
  SolverConfig cfg;
  cfg.lambda0 = 1e-18;
  cfg.max_iters = 500;
  cfg.stall_window = 10;
  const SolveResult res = geometric_subgradient(inst, near_truth(inst, 0.5, rng), cfg);
  CHECK(res.trace.exit == ExitReason::Stalled);
  CHECK(res.trace.records.size() == 11);  // iterations 0..10
}

TEST_CASE("soft threshold toward an offset") {
  Vector v(4), y(4);
  v << 3, -3, 0.5, 1.2;
  y << 1, 0, 0, 1;
  const Vector t = soft_threshold_toward(v, y, 1.0);
  CHECK(t[0] == doctest::Approx(2));
  CHECK(t[1] == doctest::Approx(-2));
  CHECK(t[2] == doctest::Approx(0));
  CHECK(t[3] == doctest::Approx(1));
  // scalar prox (1/m)|t - y| + (rho/2)(t - v)^2 with threshold 1/(m rho)
  const double m = 4, rho = 0.7;
  for (double vv : {-2.0, -0.1, 0.3, 0.9, 2.5}) {
    double best = std::numeric_limits<double>::infinity(), arg = 0;
    for (int i = 0; i <= 200000; ++i) {
      const double tt = -4.0 + 8.0 * i / 200000;
      const double f = std::abs(tt - 0.4) / m + 0.5 * rho * (tt - vv) * (tt - vv);
      if (f < best) best = f, arg = tt;
    }
    CHECK(soft_threshold_toward(Vector::Constant(1, vv), Vector::Constant(1, 0.4), 1.0 / (m * rho))[0] ==
          doctest::Approx(arg).epsilon(1e-4));
  }
}

TEST_CASE("ADMM: zero offset gives the origin") {
  std::mt19937_64 rng(5);
  RowMatrix a(6, 3);
  for (auto i = 0; i < a.size(); ++i) a.data()[i] = std::normal_distribution<double>()(rng);
  const MatrixMap map(a);
  const AdmmResult res = admm_lad_prox(map, Vector::Zero(6), 1.0, {}, unconstrained_region(1), 1e-10);
  CHECK(res.z.norm() <= 1e-12);
}

TEST_CASE("ADMM: one-dimensional example against a grid scan") {
  RowMatrix a(2, 1);
  a << 1, 1;
  const MatrixMap map(a);
  Vector y(2);
  y << 1, 1;
  const AdmmResult res = admm_lad_prox(map, y, 1.0, {}, unconstrained_region(1), 1e-12);
  double best = std::numeric_limits<double>::infinity(), arg = 0;
  for (int i = 0; i <= 1000000; ++i) {
    const double z = -3.0 + 6.0 * i / 1000000;
    const double f = std::abs(z - 1) + 0.5 * z * z;
    if (f < best) best = f, arg = z;
  }
  CHECK(res.converged);
  CHECK(res.z[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(res.z[0] - arg) <= 1e-4);
}

TEST_CASE("ADMM matches the exact piecewise oracle on tiny problems") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> unif(0.3, 2.0);
  for (int t = 0; t < 40; ++t) {
    const Eigen::Index n = 1 + t % 2, m = 2 + t % 4;
    RowMatrix a(m, n);
    for (auto i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const Vector y = randn(m, rng);
    const double beta = unif(rng);
    StepRegion region = unconstrained_region(1);
    Vector lo = Vector::Constant(n, -std::numeric_limits<double>::infinity()), hi = -lo;
    if (t % 3 == 0) {
      region.region = FeasibleRegion::ball(0.2);
      region.anchor = randn(n, rng) * 0.1;
      lo = -region.anchor - Vector::Constant(n, 0.2);
      hi = -region.anchor + Vector::Constant(n, 0.2);
    }
    const MatrixMap map(a);
    const AdmmResult res = admm_lad_prox(map, y, beta, {}, region, 1e-12);
    const Vector want = oracle::exact_prox(a, y, beta, lo, hi);
    CHECK(std::isfinite(res.primal_residual));
    CHECK(std::isfinite(res.dual_residual));
    CHECK((res.z - want).norm() <= 1e-4);
  }
}

TEST_CASE("ADMM never ascends on the subproblem") {
  const ProblemInstance inst = instance(6, 5, 0.25, 7);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    const SignalPair base = near_truth(inst, 0.5, rng);
    const LinearizedResidual lin(inst, base);
    for (double eps : {0.5, 1e-3}) {
      const AdmmResult res = admm_lad_prox(lin, lin.offset(), 2.0, {}, unconstrained_region(6), eps);
      CHECK(prox_subproblem_value(lin, lin.offset(), 2.0, res.z) <=
            prox_subproblem_value(lin, lin.offset(), 2.0, Vector::Zero(12)) + 1e-9);
    }
  }
}

TEST_CASE("ADMM with the iterative normal-equation path agrees with the dense path") {
  InstanceSpec s;
  s.d1 = 8;
  s.d2 = 6;
  s.m = 64;
  s.model = SensingModel::PartialHadamardLeft;
  s.noise.p_fail = 0.1;
  s.seed = 8;
  const ProblemInstance inst = generate_instance(s);
  std::mt19937_64 rng(8);
  const SignalPair base = near_truth(inst, 0.3, rng);
  const LinearizedResidual lin(inst, base);
  REQUIRE_FALSE(lin.prefers_dense());
  const MatrixMap dense(lin.dense());
  const AdmmResult a = admm_lad_prox(lin, lin.offset(), 1.0, {}, unconstrained_region(8), 1e-10);
  const AdmmResult b = admm_lad_prox(dense, lin.offset(), 1.0, {}, unconstrained_region(8), 1e-10);
  CHECK((a.z - b.z).norm() <= 1e-6);
}

TEST_CASE("prox-linear from the truth stays put") {
  const ProblemInstance inst = instance(4, 4, 0.0, 9);
  SolverConfig cfg;
  cfg.max_iters = 3;
  const SolveResult res = prox_linear(inst, {inst.truth.w_bar, inst.truth.x_bar}, cfg);
  CHECK(res.trace.last().relative_error <= 1e-12);
  for (const auto& r : res.trace.records) CHECK(r.step_size <= 1e-12);
}

TEST_CASE("one prox-linear step solves the two-variable subproblem") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  for (int t = 0; t < 10; ++t) {
    RowMatrix l(5, 1), r(5, 1);
    for (int i = 0; i < 5; ++i) l(i, 0) = g(rng), r(i, 0) = g(rng);
    Vector y(5);
    for (auto& e : y) e = g(rng);
    const ProblemInstance inst = make_instance(MeasurementOperator(DenseOperator(l), DenseOperator(r)), y,
                                               {Vector::Ones(1), Vector::Ones(1)}, std::vector<bool>(5, false));
    const SignalPair start{Vector::Constant(1, g(rng)), Vector::Constant(1, g(rng))};
    SolverConfig cfg;
    cfg.max_iters = 1;
    cfg.prox_beta = 1.5;
    cfg.admm.eps_decay = 1e-12;
    const SolveResult res = prox_linear(inst, start, cfg);
    const LinearizedResidual lin(inst, start);
    const Vector inf = Vector::Constant(2, std::numeric_limits<double>::infinity());
    const Vector step = oracle::exact_prox(lin.dense(), lin.offset(), 1.5, -inf, inf);
    CHECK((concat(res.point) - concat(start) - step).norm() <= 1e-4);
  }
}

TEST_CASE("prox-linear objective decreases and reaches high accuracy") {
  const ProblemInstance inst = instance(10, 8, 0.2, 11);
  const InitEstimate init = spectral_initialize(inst);
  SolverConfig cfg;
  cfg.max_iters = 20;
  cfg.tol_rel_err = 1e-9;
  cfg.prox_beta = estimate_rip_constants(inst.op, inst.outlier_mask, 100, 1).c_upper;
  const SolveResult res = prox_linear(inst, {init.w0, init.x0}, cfg);
  const auto& r = res.trace.records;
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k].objective <= r[k - 1].objective + 1e-6);
  CHECK(res.trace.last().relative_error <= 1e-9);
  CHECK(r.size() <= 21);
  CHECK(res.trace.matvecs > 0);
}
