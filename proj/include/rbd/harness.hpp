#pragma once

// Monte-Carlo experiment drivers: convergence traces, phase-transition
// grids, step-decay sweeps and initialization quality. Every trial draws
// its instance from derive_seed(base_seed, {p_fail index, c index, trial}),
// so results do not depend on grid order, grid subsetting or worker count.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbd/init.hpp"
#include "rbd/solvers.hpp"

namespace rbd {

enum class ExperimentKind { Convergence, PhaseTransition, QSweep, InitQuality };
enum class SolverKind { Polyak, Geometric, ProxLinear };
enum class InitKind { Spectral, RandomHeuristic };
enum class RegionMode { Unconstrained, TrueScale, InitScale };

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Convergence;
  std::size_t d1 = 100;
  std::size_t d2 = 100;
  std::vector<double> m_ratios = {8.0};  // m = round(c (d1 + d2))
  std::vector<double> p_fails = {0.0};
  std::vector<double> q_grid;  // QSweep only; empty uses decay_q
  std::size_t trials = 1;
  std::uint64_t base_seed = 0;
  SolverKind solver = SolverKind::Geometric;
  InitKind init = InitKind::Spectral;
  SensingModel model = SensingModel::Gaussian;
  NoiseSpec noise;  // p_fail is overridden per grid cell
  double success_threshold = 1e-5;
  RegionMode region = RegionMode::Unconstrained;
  double nu = 1.4142135623730951;
  std::optional<double> beta;  // unset: estimate c_2 by probing
  std::optional<std::size_t> max_iters;  // unset: per-solver default
  double lambda0 = 1.0;
  double decay_q = 0.98;
  std::optional<double> min_value;
  std::size_t workers = 1;

  void validate() const;
};

// One statistic for one configuration. Unused coordinates are empty.
struct ResultRow {
  std::optional<double> p_fail;
  std::optional<double> c;
  std::optional<double> q;
  std::optional<long> trial;
  std::optional<long> iter;
  std::string statistic;
  double value = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  // Lexicographic in (p_fail, c, q, trial, iter, statistic).
  void sort();
  std::vector<const ResultRow*> find(const std::string& statistic) const;
};

struct TrialOutcome {
  InitEstimate init;
  double init_relative_error = 0.0;
  SolveResult solve;
};

std::size_t measurement_count(const ExperimentSpec& spec, double c);
std::size_t default_max_iters(SolverKind solver);

// The instance for one grid cell and trial.
ProblemInstance cell_instance(const ExperimentSpec& spec, std::size_t p_index, std::size_t c_index,
                              std::size_t trial);

// Initialize and solve a single instance with the experiment's solver settings.
TrialOutcome run_trial(const ExperimentSpec& spec, const ProblemInstance& inst, double decay_q);

ResultTable run_convergence(const ExperimentSpec& spec);
ResultTable run_phase_transition(const ExperimentSpec& spec);
ResultTable run_q_sweep(const ExperimentSpec& spec);
ResultTable run_init_quality(const ExperimentSpec& spec);
ResultTable run_experiment(const ExperimentSpec& spec);

void write_csv(const ResultTable& table, std::ostream& out);
void emit_csv(const ResultTable& table, const std::filesystem::path& path);

const char* to_string(SolverKind solver);
std::optional<SolverKind> parse_solver(const std::string& name);

// "n1", "n1,sigma=<s>" or "n2".
NoiseSpec parse_noise(const std::string& text);

}  // namespace rbd
