// rbd: command-line front end for the experiment drivers.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbd/harness.hpp"

namespace {

struct Options {
  std::size_t d1 = 100;
  std::size_t d2 = 100;
  std::vector<double> c = {8.0};
  std::vector<double> pfail = {0.0};
  std::vector<double> q;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::string solver = "geometric";
  std::vector<std::string> noise = {"n1"};
  std::string left = "gaussian";
  std::string init = "spectral";
  std::string region = "none";
  double lambda = 1.0;
  std::optional<double> beta;
  double nu = 1.4142135623730951;
  double threshold = 1e-5;
  std::optional<double> min_value;
  std::optional<std::size_t> iters;
  std::size_t workers = 1;
  std::size_t samples = 1000;
  std::string out;
};

std::string join_noise(const std::vector<std::string>& parts) {
  std::string text;
  for (const auto& p : parts) text += (text.empty() ? "" : ",") + p;
  return text;
}

rbd::ExperimentSpec build_spec(const Options& o, rbd::ExperimentKind kind) {
  rbd::ExperimentSpec spec;
  spec.kind = kind;
  spec.d1 = o.d1;
  spec.d2 = o.d2;
  spec.m_ratios = o.c;
  spec.p_fails = o.pfail;
  spec.trials = o.trials;
  spec.base_seed = o.seed;
  const auto solver = rbd::parse_solver(o.solver);
  if (!solver) throw rbd::ConfigError("unknown solver '" + o.solver + "'");
  spec.solver = *solver;
  spec.noise = rbd::parse_noise(join_noise(o.noise));
  const auto model = rbd::parse_sensing_model(o.left);
  if (!model) throw rbd::ConfigError("unknown left operator '" + o.left + "'");
  spec.model = *model;
  if (o.init == "spectral") {
    spec.init = rbd::InitKind::Spectral;
  } else if (o.init == "random-heuristic") {
    spec.init = rbd::InitKind::RandomHeuristic;
  } else {
    throw rbd::ConfigError("unknown init '" + o.init + "'");
  }
  if (o.region == "none") {
    spec.region = rbd::RegionMode::Unconstrained;
  } else if (o.region == "true") {
    spec.region = rbd::RegionMode::TrueScale;
  } else if (o.region == "init") {
    spec.region = rbd::RegionMode::InitScale;
  } else {
    throw rbd::ConfigError("unknown region '" + o.region + "'");
  }
  spec.lambda0 = o.lambda;
  spec.beta = o.beta;
  spec.nu = o.nu;
  spec.success_threshold = o.threshold;
  spec.min_value = o.min_value;
  spec.max_iters = o.iters;
  spec.workers = o.workers;
  if (kind == rbd::ExperimentKind::QSweep) {
    spec.q_grid = o.q;
    if (!o.iters) spec.max_iters = 1000;
  } else if (o.q.size() == 1) {
    spec.decay_q = o.q.front();
  } else if (o.q.size() > 1) {
    throw rbd::ConfigError("--q takes a list only for sweep-q");
  }
  spec.validate();
  return spec;
}

void write_table(const rbd::ResultTable& table, const std::string& out) {
  if (out.empty()) {
    rbd::write_csv(table, std::cout);
  } else {
    rbd::emit_csv(table, out);
  }
}

int cmd_solve(const Options& o) {
  auto spec = build_spec(o, rbd::ExperimentKind::Convergence);
  const rbd::ProblemInstance inst = rbd::cell_instance(spec, 0, 0, 0);
  const rbd::TrialOutcome res = rbd::run_trial(spec, inst, spec.decay_q);

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open '" + o.out + "' for writing");
  }
  std::ostream& out = o.out.empty() ? std::cout : file;
  out << std::setprecision(17);
  out << "iter,objective,relative_error,dist_to_solset,step_size,inner_iters\n";
  for (const auto& r : res.solve.trace.records)
    out << r.iter << ',' << r.objective << ',' << r.relative_error << ',' << r.dist_to_solset << ','
        << r.step_size << ',' << r.inner_iters << '\n';
  if (!out) throw std::runtime_error("failed writing trace");
  std::cerr << "m=" << inst.m() << " outliers=" << inst.outlier_count()
            << " init_relative_error=" << res.init_relative_error
            << " final_relative_error=" << res.solve.trace.last().relative_error
            << " exit=" << rbd::to_string(res.solve.trace.exit) << " matvecs=" << res.solve.trace.matvecs << '\n';
  return 0;
}

int cmd_init(const Options& o) {
  const auto spec = build_spec(o, rbd::ExperimentKind::InitQuality);
  const rbd::ResultTable table = rbd::run_init_quality(spec);
  if (!o.out.empty()) rbd::emit_csv(table, o.out);
  std::cout << std::setprecision(6);
  std::cout << "p_fail,c,trial,m_hat,relative_error,selected\n";
  const auto m_hat = table.find("m_hat");
  const auto rel = table.find("init_relative_error");
  const auto sel = table.find("selected");
  for (std::size_t i = 0; i < m_hat.size(); ++i)
    std::cout << *m_hat[i]->p_fail << ',' << *m_hat[i]->c << ',' << *m_hat[i]->trial << ',' << m_hat[i]->value
              << ',' << rel[i]->value << ',' << static_cast<long>(sel[i]->value) << '\n';
  return 0;
}

int cmd_rip_probe(const Options& o) {
  const auto spec = build_spec(o, rbd::ExperimentKind::Convergence);
  if (o.samples < 1) throw rbd::ConfigError("--samples must be at least 1");
  rbd::ResultTable table;
  for (std::size_t p = 0; p < spec.p_fails.size(); ++p)
    for (std::size_t c = 0; c < spec.m_ratios.size(); ++c)
      for (std::size_t t = 0; t < spec.trials; ++t) {
        const rbd::ProblemInstance inst = rbd::cell_instance(spec, p, c, t);
        const auto est = rbd::estimate_rip_constants(inst.op, inst.outlier_mask, o.samples,
                                                     rbd::derive_seed(inst.spec.seed, {0x919EULL}));
        const rbd::SolutionSet sol{inst.truth, spec.nu};
        const double pf = spec.p_fails[p], cc = spec.m_ratios[c];
        const long tt = static_cast<long>(t);
        table.rows.push_back({pf, cc, std::nullopt, tt, std::nullopt, "c_lower", est.c_lower});
        table.rows.push_back({pf, cc, std::nullopt, tt, std::nullopt, "c_upper", est.c_upper});
        table.rows.push_back({pf, cc, std::nullopt, tt, std::nullopt, "c_outlier", est.c_outlier});
        table.rows.push_back({pf, cc, std::nullopt, tt, std::nullopt, "sharpness_bound", rbd::sharpness_bound(sol)});
      }
  table.sort();
  write_table(table, o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust blind deconvolution experiments"};
  app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");
  app.fallthrough();
  app.require_subcommand(1, 1);

  Options o;
  app.add_option("--d1", o.d1, "Dimension of w");
  app.add_option("--d2", o.d2, "Dimension of x");
  app.add_option("--c", o.c, "Oversampling ratios m/(d1+d2), comma separated")->delimiter(',');
  app.add_option("--pfail", o.pfail, "Outlier fractions, comma separated")->delimiter(',');
  app.add_option("--q", o.q, "Step decay (a list for sweep-q)")->delimiter(',');
  app.add_option("--trials", o.trials, "Trials per cell");
  app.add_option("--seed", o.seed, "Base seed");
  app.add_option("--solver", o.solver, "polyak | geometric | proxlinear");
  app.add_option("--noise", o.noise, "n1 | n1,sigma=<s> | n2")->expected(1, 2);
  app.add_option("--left", o.left, "Left operator: gaussian | hadamard");
  app.add_option("--init", o.init, "spectral | random-heuristic");
  app.add_option("--region", o.region, "Feasible region: none | true | init");
  app.add_option("--lambda", o.lambda, "Initial geometric step");
  app.add_option("--beta", o.beta, "Prox-linear weight (default: estimated upper RIP constant)");
  app.add_option("--nu", o.nu, "Scale bound of the solution set");
  app.add_option("--threshold", o.threshold, "Success threshold on relative error");
  app.add_option("--min-value", o.min_value, "Optimal value for the Polyak step");
  app.add_option("--iters", o.iters, "Iteration budget (outer iterations for prox-linear)");
  app.add_option("--workers", o.workers, "Worker threads");
  app.add_option("--samples", o.samples, "Samples for rip-probe");
  app.add_option("--out", o.out, "CSV output path (default stdout)");

  auto* solve = app.add_subcommand("solve", "Solve one instance and print its trace");
  auto* init = app.add_subcommand("init", "Initialization quality");
  auto* converge = app.add_subcommand("converge", "Per-iteration error traces");
  auto* phase = app.add_subcommand("phase", "Success rates over the (p_fail, c) grid");
  auto* sweep = app.add_subcommand("sweep-q", "Final error over the (q, c) grid");
  auto* rip = app.add_subcommand("rip-probe", "Estimated restricted isometry constants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (solve->parsed()) return cmd_solve(o);
    if (init->parsed()) return cmd_init(o);
    if (rip->parsed()) return cmd_rip_probe(o);
    rbd::ExperimentKind kind = rbd::ExperimentKind::Convergence;
    if (phase->parsed()) kind = rbd::ExperimentKind::PhaseTransition;
    if (sweep->parsed()) kind = rbd::ExperimentKind::QSweep;
    (void)converge;
    write_table(rbd::run_experiment(build_spec(o, kind)), o.out);
    return 0;
  } catch (const rbd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
