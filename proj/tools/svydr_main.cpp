// Command-line front end: scenario simulation, the nuisance convergence-rate
// probe, estimation on external CSV data, and population dumps.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "svydr/harness.hpp"
#include "svydr/kernels.hpp"
#include "svydr/population.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

svydr::popgen::ScenarioSpec load_scenario(const std::string& arg) {
  if (arg.size() == 1 && arg[0] >= '1' && arg[0] <= '6')
    return svydr::popgen::scenario_preset(arg[0] - '0');
  return svydr::harness::scenario_from_config(svydr::harness::parse_key_value_file(arg));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-robust estimation of a finite-population mean from a probability "
               "sample plus a nonprobability sample"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo scenario run with summary table");
  std::string sim_scenario = "1", sim_out, sim_estimators, sim_plan_dump;
  int sim_reps = 100, sim_k = -1, sim_groups = -1, sim_threads = 0;
  double sim_delta = -1.0;
  std::uint64_t sim_seed = 1;
  sim->add_option("--scenario", sim_scenario, "1..6 or a scenario config file");
  sim->add_option("--reps", sim_reps, "replications");
  sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--out", sim_out, "summary CSV path (per-rep CSV goes to <out>.reps.csv)");
  sim->add_option("--estimators", sim_estimators, "comma-separated estimator ids");
  sim->add_option("--k", sim_k, "folds for the cross-fitted variants");
  sim->add_option("--delta", sim_delta, "active-subset delta");
  sim->add_option("--groups", sim_groups, "probability groups L");
  sim->add_option("--threads", sim_threads, "worker threads (0 = auto)");
  sim->add_option("--dump-plan", sim_plan_dump, "write the first replication's fold plan CSV");

  // probe-rates
  auto* probe = app.add_subcommand("probe-rates", "nuisance convergence-rate probe");
  std::string probe_scenario = "1", probe_grid = "50,100,150,300", probe_out,
              probe_learner = "parametric";
  int probe_reps = 30, probe_threads = 0;
  std::uint64_t probe_seed = 1;
  probe->add_option("--scenario", probe_scenario, "1..6 or a scenario config file");
  probe->add_option("--grid", probe_grid, "comma-separated M grid");
  probe->add_option("--reps", probe_reps, "replications per grid point");
  probe->add_option("--seed", probe_seed, "master seed");
  probe->add_option("--learner", probe_learner, "parametric or boosted");
  probe->add_option("--out", probe_out, "probe CSV path (default stdout)");
  probe->add_option("--threads", probe_threads, "worker threads (0 = auto)");

  // estimate
  auto* est = app.add_subcommand("estimate", "apply estimators to external CSV data");
  std::string est_a, est_b, est_cfg;
  est->add_option("--sample-a", est_a, "Sample A CSV (cluster_id,piA,x1,x2,x3,x4)")->required();
  est->add_option("--sample-b", est_b, "Sample B CSV (cluster_id,x1,x2,x3,x4,y)")->required();
  est->add_option("--config", est_cfg, "key-value config (requires n = population size)")
      ->required();

  // dump-population
  auto* dump = app.add_subcommand("dump-population", "write the fixed population as CSV");
  std::string dump_scenario = "1", dump_out;
  std::uint64_t dump_seed = 1;
  dump->add_option("--scenario", dump_scenario, "1..6 or a scenario config file");
  dump->add_option("--seed", dump_seed, "master seed");
  dump->add_option("--out", dump_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      svydr::harness::RunConfig cfg;
      cfg.scenario = load_scenario(sim_scenario);
      cfg.replications = sim_reps;
      cfg.seed = sim_seed;
      cfg.threads = sim_threads;
      cfg.summary_path = sim_out;
      cfg.plan_dump_path = sim_plan_dump;
      if (!sim_estimators.empty()) cfg.estimators = split_commas(sim_estimators);
      if (sim_k > 0) cfg.scenario.folds = sim_k;
      if (sim_delta > 0.0) cfg.scenario.delta = sim_delta;
      if (sim_groups > 0) cfg.scenario.prob_groups = sim_groups;
      const svydr::harness::ScenarioResult result = svydr::harness::run_scenario(cfg);
      svydr::harness::write_summary_text(result.rows, std::cout);
      if (result.failed_replications > 0)
        std::cerr << result.failed_replications << " replication(s) failed and were excluded\n";
      return 0;
    }
    if (*probe) {
      svydr::harness::ProbeConfig cfg;
      cfg.scenario = load_scenario(probe_scenario);
      cfg.replications = probe_reps;
      cfg.seed = probe_seed;
      cfg.threads = probe_threads;
      if (probe_learner == "parametric")
        cfg.family = svydr::learners::LearnerFamily::parametric;
      else if (probe_learner == "boosted")
        cfg.family = svydr::learners::LearnerFamily::boosted_trees;
      else
        throw std::runtime_error("--learner must be parametric or boosted");
      cfg.m_grid.clear();
      for (const std::string& m : split_commas(probe_grid))
        cfg.m_grid.push_back(static_cast<std::uint32_t>(std::stoul(m)));
      const svydr::harness::ProbeResult result = svydr::harness::nuisance_rate_probe(cfg);
      if (probe_out.empty()) {
        svydr::harness::write_probe_csv(result, std::cout);
      } else {
        std::ofstream os(probe_out);
        if (!os) throw std::runtime_error("cannot write: " + probe_out);
        svydr::harness::write_probe_csv(result, os);
      }
      return 0;
    }
    if (*est) {
      const svydr::harness::KeyValueFile kv = svydr::harness::parse_key_value_file(est_cfg);
      svydr::harness::ExternalConfig cfg;
      if (!kv.has("n")) throw std::runtime_error("config must set n (population size)");
      cfg.population_size = std::stoull(kv.get("n"));
      if (kv.has("seed")) cfg.seed = std::stoull(kv.get("seed"));
      const std::string family = kv.get("family", "parametric");
      if (family == "parametric")
        cfg.family = svydr::learners::LearnerFamily::parametric;
      else if (family == "boosted")
        cfg.family = svydr::learners::LearnerFamily::boosted_trees;
      else
        throw std::runtime_error("family must be parametric or boosted");
      if (kv.get("pseudo_likelihood", "full") == "approximate")
        cfg.pseudo_likelihood = svydr::learners::PseudoLikelihood::approximate;
      const auto results = svydr::harness::estimate_external(est_a, est_b, cfg);
      std::printf("%-8s %12s %12s %24s\n", "id", "point", "se", "95%% CI");
      for (const auto& r : results)
        std::printf("%-8s %12.6f %12.6f [%10.6f, %10.6f]\n", r.name.c_str(), r.point,
                    r.se.value_or(0.0), r.ci_lo, r.ci_hi);
      return 0;
    }
    if (*dump) {
      const svydr::popgen::ScenarioSpec spec = load_scenario(dump_scenario);
      const svydr::popgen::FinitePopulation pop =
          svydr::popgen::generate_population(spec, dump_seed);
      svydr::popgen::write_population_csv_file(pop, dump_out);
      std::cout << "wrote " << pop.size << " individuals in " << pop.cluster_count
                << " clusters\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
