#include "rbd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace rbd {

namespace {

struct TrialOptions {
  double decay_q;
  double tol_rel_err;
  bool allow_stall;
};

template <class Fn>
void parallel_for(std::size_t jobs, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = jobs;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

InitEstimate random_heuristic_init(const ProblemInstance& inst) {
  Rng rng(derive_seed(inst.spec.seed, {0xB10CULL}));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto sphere = [&](std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    do {
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
    } while (v.norm() == 0.0);
    return Vector(v.normalized());
  };
  InitEstimate est;
  est.w_dir = sphere(inst.d1());
  est.x_dir = sphere(inst.d2());
  est.m_hat = inst.truth.magnitude();
  const double root = std::sqrt(est.m_hat);
  SolverConfig one;
  one.max_iters = 1;
  one.min_value = 0.0;
  one.stall_window = 0;
  const SolveResult step = polyak_subgradient(inst, {root * est.w_dir, root * est.x_dir}, one);
  est.w0 = step.point.w;
  est.x0 = step.point.x;
  return est;
}

TrialOutcome run_trial_with(const ExperimentSpec& spec, const ProblemInstance& inst, const TrialOptions& opt) {
  TrialOutcome out;
  out.init = spec.init == InitKind::Spectral ? spectral_initialize(inst) : random_heuristic_init(inst);
  const SignalPair start{out.init.w0, out.init.x0};
  out.init_relative_error = relative_error(start, inst.truth);

  SolverConfig cfg;
  cfg.max_iters = spec.max_iters.value_or(default_max_iters(spec.solver));
  cfg.lambda0 = spec.lambda0;
  cfg.decay_q = opt.decay_q;
  cfg.min_value = spec.min_value;
  cfg.tol_rel_err = opt.tol_rel_err;
  if (!opt.allow_stall) cfg.stall_window = 0;
  switch (spec.region) {
    case RegionMode::Unconstrained: break;
    case RegionMode::TrueScale: cfg.region = FeasibleRegion::ball(spec.nu * std::sqrt(inst.truth.magnitude())); break;
    case RegionMode::InitScale:
      cfg.region = FeasibleRegion::ball(std::sqrt(2.0 * std::max(std::abs(out.init.m_hat), 1e-300)));
      break;
  }

  switch (spec.solver) {
    case SolverKind::Polyak: out.solve = polyak_subgradient(inst, start, cfg); break;
    case SolverKind::Geometric: out.solve = geometric_subgradient(inst, start, cfg); break;
    case SolverKind::ProxLinear:
      cfg.prox_beta = spec.beta ? *spec.beta
                                : estimate_rip_constants(inst.op, inst.outlier_mask, 100,
                                                         derive_seed(inst.spec.seed, {0xBE7AULL}))
                                      .c_upper;
      out.solve = prox_linear(inst, start, cfg);
      break;
  }
  return out;
}

struct Job {
  std::size_t p;
  std::size_t c;
  std::size_t q;
  std::size_t trial;
};

std::vector<Job> grid_jobs(const ExperimentSpec& spec, std::size_t q_count) {
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < spec.p_fails.size(); ++p)
    for (std::size_t c = 0; c < spec.m_ratios.size(); ++c)
      for (std::size_t q = 0; q < q_count; ++q)
        for (std::size_t t = 0; t < spec.trials; ++t) jobs.push_back({p, c, q, t});
  return jobs;
}

void require_kind(const ExperimentSpec& spec, ExperimentKind kind) {
  if (spec.kind != kind) throw ConfigError("experiment spec has the wrong kind for this driver");
  spec.validate();
}

}  // namespace

void ExperimentSpec::validate() const {
  if (d1 < 1 || d2 < 1) throw ConfigError("dimensions must be positive");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (m_ratios.empty()) throw ConfigError("the c grid is empty");
  if (p_fails.empty()) throw ConfigError("the p_fail grid is empty");
  for (double c : m_ratios)
    if (!(c > 0.0) || measurement_count(*this, c) < 2) throw ConfigError("each c must give at least 2 measurements");
  for (double p : p_fails)
    if (!(p >= 0.0 && p < 0.5)) throw ConfigError("p_fail must lie in [0, 1/2)");
  for (double q : q_grid)
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("q values must lie in (0, 1)");
  if (kind == ExperimentKind::QSweep && q_grid.empty()) throw ConfigError("the q grid is empty");
  if (!(decay_q > 0.0 && decay_q < 1.0)) throw ConfigError("q must lie in (0, 1)");
  if (!(lambda0 > 0.0)) throw ConfigError("lambda must be positive");
  if (!(success_threshold > 0.0)) throw ConfigError("success threshold must be positive");
  if (!(nu >= 1.0)) throw ConfigError("nu must be at least 1");
  if (beta && !(*beta > 0.0)) throw ConfigError("beta must be positive");
  if (max_iters && *max_iters < 1) throw ConfigError("iteration budget must be at least 1");
  if (solver == SolverKind::Polyak && !min_value && kind != ExperimentKind::InitQuality)
    for (double p : p_fails)
      if (std::llround(p * static_cast<double>(measurement_count(*this, m_ratios.front()))) > 0)
        throw ConfigError("Polyak on corrupted instances needs --min-value");
  if (const auto* g = std::get_if<IndependentGaussian>(&noise.kind); g && !(g->sigma > 0.0))
    throw ConfigError("noise sigma must be positive");
  if (model == SensingModel::PartialHadamardLeft) {
    for (double c : m_ratios) {
      const std::size_t m = measurement_count(*this, c);
      if ((m & (~m + 1)) < d1) throw ConfigError("partial Hadamard needs a power-of-two factor of m >= d1");
    }
  }
}

void ResultTable::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.p_fail, a.c, a.q, a.trial, a.iter, a.statistic) <
           std::tie(b.p_fail, b.c, b.q, b.trial, b.iter, b.statistic);
  });
}

std::vector<const ResultRow*> ResultTable::find(const std::string& statistic) const {
  std::vector<const ResultRow*> out;
  for (const auto& r : rows)
    if (r.statistic == statistic) out.push_back(&r);
  return out;
}

std::size_t measurement_count(const ExperimentSpec& spec, double c) {
  return static_cast<std::size_t>(std::llround(c * static_cast<double>(spec.d1 + spec.d2)));
}

std::size_t default_max_iters(SolverKind solver) {
  switch (solver) {
    case SolverKind::Polyak: return 500;
    case SolverKind::Geometric: return 2000;
    case SolverKind::ProxLinear: return 20;
  }
  return 500;
}

ProblemInstance cell_instance(const ExperimentSpec& spec, std::size_t p_index, std::size_t c_index,
                              std::size_t trial) {
  InstanceSpec is;
  is.d1 = spec.d1;
  is.d2 = spec.d2;
  is.m = measurement_count(spec, spec.m_ratios.at(c_index));
  is.model = spec.model;
  is.noise = spec.noise;
  is.noise.p_fail = spec.p_fails.at(p_index);
  is.seed = derive_seed(spec.base_seed, {p_index, c_index, trial});
  is.nu = spec.nu;
  return generate_instance(is);
}

TrialOutcome run_trial(const ExperimentSpec& spec, const ProblemInstance& inst, double decay_q) {
  return run_trial_with(spec, inst, {decay_q, spec.success_threshold, true});
}

ResultTable run_convergence(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::Convergence);
  const auto jobs = grid_jobs(spec, 1);
  std::vector<std::vector<ResultRow>> parts(jobs.size());
  parallel_for(jobs.size(), spec.workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    const ProblemInstance inst = cell_instance(spec, job.p, job.c, job.trial);
    const TrialOutcome out = run_trial_with(spec, inst, {spec.decay_q, 0.0, true});
    const double p = spec.p_fails[job.p], c = spec.m_ratios[job.c];
    const long t = static_cast<long>(job.trial);
    auto& rows = parts[j];
    for (const TraceRecord& rec : out.solve.trace.records) {
      const long it = static_cast<long>(rec.iter);
      rows.push_back({p, c, std::nullopt, t, it, "relative_error", rec.relative_error});
      rows.push_back({p, c, std::nullopt, t, it, "objective", rec.objective});
      if (spec.solver == SolverKind::ProxLinear)
        rows.push_back({p, c, std::nullopt, t, it, "inner_iters", static_cast<double>(rec.inner_iters)});
    }
    rows.push_back({p, c, std::nullopt, t, std::nullopt, "init_relative_error", out.init_relative_error});
    rows.push_back({p, c, std::nullopt, t, std::nullopt, "final_relative_error", out.solve.trace.last().relative_error});
    rows.push_back({p, c, std::nullopt, t, std::nullopt, "iterations", static_cast<double>(out.solve.trace.last().iter)});
    rows.push_back({p, c, std::nullopt, t, std::nullopt, "matvecs", static_cast<double>(out.solve.trace.matvecs)});
  });
  ResultTable table;
  for (auto& part : parts) std::move(part.begin(), part.end(), std::back_inserter(table.rows));
  table.sort();
  return table;
}

ResultTable run_phase_transition(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::PhaseTransition);
  const auto jobs = grid_jobs(spec, 1);
  std::vector<double> final_err(jobs.size());
  std::vector<double> matvecs(jobs.size());
  parallel_for(jobs.size(), spec.workers, [&](std::size_t j) {
    const ProblemInstance inst = cell_instance(spec, jobs[j].p, jobs[j].c, jobs[j].trial);
    const TrialOutcome out = run_trial_with(spec, inst, {spec.decay_q, spec.success_threshold, true});
    final_err[j] = out.solve.trace.last().relative_error;
    matvecs[j] = static_cast<double>(out.solve.trace.matvecs);
  });
  ResultTable table;
  for (std::size_t p = 0; p < spec.p_fails.size(); ++p) {
    for (std::size_t c = 0; c < spec.m_ratios.size(); ++c) {
      std::vector<double> errs, mv;
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].p != p || jobs[j].c != c) continue;
        errs.push_back(final_err[j]);
        mv.push_back(matvecs[j]);
      }
      const auto ok = std::count_if(errs.begin(), errs.end(), [&](double e) { return e <= spec.success_threshold; });
      const double pf = spec.p_fails[p], cc = spec.m_ratios[c];
      table.rows.push_back({pf, cc, std::nullopt, std::nullopt, std::nullopt, "success_rate",
                            static_cast<double>(ok) / static_cast<double>(errs.size())});
      table.rows.push_back({pf, cc, std::nullopt, std::nullopt, std::nullopt, "median_final_error", median(errs)});
      table.rows.push_back({pf, cc, std::nullopt, std::nullopt, std::nullopt, "mean_matvecs", mean(mv)});
    }
  }
  table.sort();
  return table;
}

ResultTable run_q_sweep(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::QSweep);
  if (spec.solver != SolverKind::Geometric) throw ConfigError("the q sweep runs the geometric subgradient method");
  const auto jobs = grid_jobs(spec, spec.q_grid.size());
  std::vector<double> final_err(jobs.size());
  parallel_for(jobs.size(), spec.workers, [&](std::size_t j) {
    const ProblemInstance inst = cell_instance(spec, jobs[j].p, jobs[j].c, jobs[j].trial);
    const TrialOutcome out = run_trial_with(spec, inst, {spec.q_grid[jobs[j].q], 0.0, false});
    final_err[j] = out.solve.trace.last().relative_error;
  });
  ResultTable table;
  for (std::size_t p = 0; p < spec.p_fails.size(); ++p)
    for (std::size_t c = 0; c < spec.m_ratios.size(); ++c)
      for (std::size_t q = 0; q < spec.q_grid.size(); ++q) {
        std::vector<double> errs;
        for (std::size_t j = 0; j < jobs.size(); ++j)
          if (jobs[j].p == p && jobs[j].c == c && jobs[j].q == q) errs.push_back(final_err[j]);
        table.rows.push_back({spec.p_fails[p], spec.m_ratios[c], spec.q_grid[q], std::nullopt, std::nullopt,
                              "mean_final_error", mean(errs)});
      }
  table.sort();
  return table;
}

ResultTable run_init_quality(const ExperimentSpec& spec) {
  require_kind(spec, ExperimentKind::InitQuality);
  const auto jobs = grid_jobs(spec, 1);
  struct Stats {
    double rel_err, dir_err, m_hat, selected;
  };
  std::vector<Stats> stats(jobs.size());
  parallel_for(jobs.size(), spec.workers, [&](std::size_t j) {
    const ProblemInstance inst = cell_instance(spec, jobs[j].p, jobs[j].c, jobs[j].trial);
    const InitEstimate est = spectral_initialize(inst);
    stats[j] = {relative_error({est.w0, est.x0}, inst.truth), direction_error(est.w_dir, est.x_dir, inst.truth),
                est.m_hat, static_cast<double>(est.selected.size())};
  });
  ResultTable table;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const double p = spec.p_fails[jobs[j].p], c = spec.m_ratios[jobs[j].c];
    const long t = static_cast<long>(jobs[j].trial);
    table.rows.push_back({p, c, std::nullopt, t, std::nullopt, "init_relative_error", stats[j].rel_err});
    table.rows.push_back({p, c, std::nullopt, t, std::nullopt, "direction_error", stats[j].dir_err});
    table.rows.push_back({p, c, std::nullopt, t, std::nullopt, "m_hat", stats[j].m_hat});
    table.rows.push_back({p, c, std::nullopt, t, std::nullopt, "selected", stats[j].selected});
  }
  for (std::size_t p = 0; p < spec.p_fails.size(); ++p)
    for (std::size_t c = 0; c < spec.m_ratios.size(); ++c) {
      std::vector<double> rel, dir;
      for (std::size_t j = 0; j < jobs.size(); ++j)
        if (jobs[j].p == p && jobs[j].c == c) {
          rel.push_back(stats[j].rel_err);
          dir.push_back(stats[j].dir_err);
        }
      table.rows.push_back({spec.p_fails[p], spec.m_ratios[c], std::nullopt, std::nullopt, std::nullopt,
                            "median_init_relative_error", median(rel)});
      table.rows.push_back({spec.p_fails[p], spec.m_ratios[c], std::nullopt, std::nullopt, std::nullopt,
                            "median_direction_error", median(dir)});
    }
  table.sort();
  return table;
}

ResultTable run_experiment(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::Convergence: return run_convergence(spec);
    case ExperimentKind::PhaseTransition: return run_phase_transition(spec);
    case ExperimentKind::QSweep: return run_q_sweep(spec);
    case ExperimentKind::InitQuality: return run_init_quality(spec);
  }
  throw ConfigError("unknown experiment kind");
}

void write_csv(const ResultTable& table, std::ostream& out) {
  out << std::setprecision(17);
  out << "p_fail,c,q,trial,iter,statistic,value\n";
  auto opt = [&](const auto& v) {
    if (v) out << *v;
    out << ',';
  };
  for (const ResultRow& r : table.rows) {
    opt(r.p_fail);
    opt(r.c);
    opt(r.q);
    opt(r.trial);
    opt(r.iter);
    out << r.statistic << ',' << r.value << '\n';
  }
}

void emit_csv(const ResultTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_csv(table, out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

const char* to_string(SolverKind solver) {
  switch (solver) {
    case SolverKind::Polyak: return "polyak";
    case SolverKind::Geometric: return "geometric";
    case SolverKind::ProxLinear: return "proxlinear";
  }
  return "unknown";
}

std::optional<SolverKind> parse_solver(const std::string& name) {
  if (name == "polyak") return SolverKind::Polyak;
  if (name == "geometric") return SolverKind::Geometric;
  if (name == "proxlinear") return SolverKind::ProxLinear;
  return std::nullopt;
}

NoiseSpec parse_noise(const std::string& text) {
  NoiseSpec noise;
  if (text == "n2") {
    noise.kind = ImplantedSignal{};
    return noise;
  }
  if (text == "n1") return noise;
  const std::string prefix = "n1,sigma=";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const double sigma = std::stod(text.substr(prefix.size()), &used);
      if (used == text.size() - prefix.size() && sigma > 0.0) {
        noise.kind = IndependentGaussian{sigma};
        return noise;
      }
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unrecognized noise model '" + text + "' (expected n1, n1,sigma=<s> or n2)");
}

}  // namespace rbd
