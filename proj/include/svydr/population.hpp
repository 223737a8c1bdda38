// Finite-population generation: clusters of 1/2/3-person households with
// negative-binomial household counts, covariates with cluster- and
// household-size-dependent means, and stored true outcome-mean and
// selection-probability surfaces.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "svydr/rng.hpp"

namespace svydr::popgen {

enum class DesignKind { srswor, sampford };

// coef * x[a] * x[b]; a == b encodes a squared term. Indices are 0-based.
struct QuadTerm {
  int a = 0;
  int b = 0;
  double coef = 0.0;
};

struct LinearQuadForm {
  double intercept = 0.0;
  std::array<double, 4> linear{0.0, 0.0, 0.0, 0.0};
  std::vector<QuadTerm> quad;

  double eval(const double* x) const {
    double v = intercept;
    for (int j = 0; j < 4; ++j) v += linear[j] * x[j];
    for (const auto& t : quad) v += t.coef * x[t.a] * x[t.b];
    return v;
  }
};

struct ScenarioSpec {
  int scenario_id = 0;  // 1..6 built-in, 0 = custom
  std::uint32_t clusters_total = 1000;     // J
  std::uint32_t clusters_sampled = 150;    // M
  std::uint32_t houses_per_cluster = 20;   // households drawn per sampled cluster
  int folds = 5;                           // K
  double delta = 0.01;
  int prob_groups = 4;                     // L (1 for SRSWOR designs)
  double house_mean = 100.0;
  double house_var = 400.0;
  double y_sd = 1.0;                       // outcome noise; 0 is a test hook
  LinearQuadForm outcome_mean;             // true E(Y | X)
  LinearQuadForm selection_logit;          // logit of true selection probability
  double target_sample_b = 0.0;            // if > 0, intercept is solved to hit this
  DesignKind cluster_design = DesignKind::sampford;
  std::uint64_t rng_seed = 1;

  void validate() const;  // throws std::invalid_argument on bad settings
};

// Built-in scenario settings (1..6).
ScenarioSpec scenario_preset(int id);

struct Cluster {
  std::uint32_t member_begin = 0, member_end = 0;
  std::uint32_t household_begin = 0, household_end = 0;
  std::array<std::uint32_t, 3> households_by_size{0, 0, 0};
  double size_measure = 0.0;  // total households
};

class FinitePopulation {
 public:
  ScenarioSpec spec;
  std::uint32_t cluster_count = 0;
  std::uint64_t size = 0;  // individuals

  std::vector<Cluster> clusters;
  // per household
  std::vector<std::uint32_t> household_member_begin;
  std::vector<std::uint8_t> household_size;
  // per individual (struct-of-arrays)
  std::vector<double> x1, x2, x3, x4;
  std::vector<double> true_mean;      // m0(X_i)
  std::vector<double> true_sel_prob;  // piB0(X_i)
  std::vector<std::uint8_t> member_household_size;
  std::vector<std::uint32_t> cluster_of;

  std::array<double, 4> covariate_row(std::size_t i) const {
    return {x1[i], x2[i], x3[i], x4[i]};
  }
  double mean_true_mean() const;
};

FinitePopulation generate_population(const ScenarioSpec& spec, std::uint64_t seed);

struct OutcomeDraw {
  std::vector<double> y;
  double ybar = 0.0;  // finite-population mean of the realized outcomes
};

OutcomeDraw draw_outcomes(const FinitePopulation& pop, std::uint64_t seed);

// CSV dump/load (one row per individual) for cross-implementation diffing.
// Individuals are household-contiguous, so the household structure is
// recoverable on load.
void write_population_csv(const FinitePopulation& pop, std::ostream& os);
FinitePopulation read_population_csv(std::istream& is, ScenarioSpec spec);
void write_population_csv_file(const FinitePopulation& pop, const std::string& path);
FinitePopulation read_population_csv_file(const std::string& path, ScenarioSpec spec);

// Monotone bisection for the selection intercept: finds a such that
// sum_i expit(a + eta_i) = target, where eta_i excludes the intercept.
double solve_selection_intercept(const std::vector<double>& eta, double target);

}  // namespace svydr::popgen
