// Scenario orchestration: Monte Carlo replication over the full pipeline
// (outcomes -> Sample A -> Sample B -> fold plan -> nuisance fits ->
// estimators), summary tables, the nuisance convergence-rate probe, and
// estimation on external data files.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "svydr/estimators.hpp"
#include "svydr/learners.hpp"
#include "svydr/population.hpp"

namespace svydr::harness {

// Estimator ids accepted by RunConfig::estimators.
const std::vector<std::string>& all_estimator_ids();
bool is_known_estimator(const std::string& id);

struct RunConfig {
  popgen::ScenarioSpec scenario;
  int replications = 100;
  std::vector<std::string> estimators;  // empty = all
  std::uint64_t seed = 1;
  int threads = 0;                      // 0 = hardware concurrency
  std::string summary_path;             // empty = no file output
  std::string per_rep_path;             // empty = derived from summary_path
  std::string plan_dump_path;           // first replication's K-fold plan
  double max_failure_fraction = 0.05;
  // Overrides for the parametric nuisance specs (used by the
  // double-robustness suite); defaults follow the scenario.
  std::optional<learners::FeatureMap> parametric_outcome_features;
  std::optional<learners::FeatureMap> parametric_selection_features;
  bool crossfit_parametric = false;  // test flag: run parametric rows with K folds
};

struct SummaryRow {
  std::string estimator;
  double bias = 0.0;
  double emp_se = 0.0;
  double mean_se = 0.0;     // mean of SE estimates
  double coverage = 0.0;    // percent
  bool has_se = true;
  int replications = 0;
};

struct RepRecord {
  int rep = 0;
  std::string estimator;
  double point = 0.0;
  std::optional<double> se;
  double ybar = 0.0;
  std::optional<bool> covered;
};

struct ScenarioResult {
  std::vector<SummaryRow> rows;
  std::vector<RepRecord> records;
  int failed_replications = 0;
  std::vector<std::string> failure_messages;
};

ScenarioResult run_scenario(const RunConfig& cfg);

// Summary reduction from per-replication records (fixed order over rep index).
std::vector<SummaryRow> summarize(const std::vector<RepRecord>& records,
                                  const std::vector<std::string>& estimator_order);

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& os);
void write_summary_text(const std::vector<SummaryRow>& rows, std::ostream& os);
std::vector<SummaryRow> read_summary_csv(std::istream& is);
void write_records_csv(const std::vector<RepRecord>& records, std::ostream& os);
std::vector<RepRecord> read_records_csv(std::istream& is);

// --- nuisance convergence-rate probe ----------------------------------------

struct ProbeConfig {
  popgen::ScenarioSpec scenario;
  std::vector<std::uint32_t> m_grid{50, 100, 150, 300};
  int replications = 30;
  std::uint64_t seed = 1;
  int threads = 0;
  learners::LearnerFamily family = learners::LearnerFamily::parametric;
  bool oracle_outcome = false;  // test hook: m-hat == m0
};

struct ProbePoint {
  std::uint32_t m = 0;          // sampled clusters
  std::uint32_t clusters = 0;   // population clusters at this grid point
  double sel_err = 0.0;         // mean over reps of E_X[(piB0/piB-hat - 1)^2]
  double mean_err = 0.0;        // mean over reps of E_X[(m-hat - m0)^2]
  double sel_err_se = 0.0;
  double mean_err_se = 0.0;
  std::vector<double> sel_err_reps, mean_err_reps;
};

struct ProbeResult {
  std::vector<ProbePoint> points;
  double sel_slope = 0.0;   // log-log slope of sel_err vs M
  double mean_slope = 0.0;  // log-log slope of mean_err vs M
};

ProbeResult nuisance_rate_probe(const ProbeConfig& cfg);
void write_probe_csv(const ProbeResult& result, std::ostream& os);

// --- external data ----------------------------------------------------------

struct ExternalConfig {
  std::uint64_t population_size = 0;  // required
  learners::LearnerFamily family = learners::LearnerFamily::parametric;
  learners::PseudoLikelihood pseudo_likelihood = learners::PseudoLikelihood::full;
  std::uint64_t seed = 1;
  std::vector<popgen::QuadTerm> outcome_quad, selection_quad;  // true_model_terms
  learners::FeatureMap feature_map = learners::FeatureMap::main_effects;
};

// Applies the no-cross-fitting DR/TMLE estimators to external Sample-A and
// Sample-B CSV files (columns documented in the README).
std::vector<estimators::EstimateResult> estimate_external(const std::string& sample_a_csv,
                                                          const std::string& sample_b_csv,
                                                          const ExternalConfig& cfg);

// --- flat key-value config files --------------------------------------------

struct KeyValueFile {
  std::vector<std::pair<std::string, std::string>> entries;
  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
};

KeyValueFile parse_key_value_file(const std::string& path);
popgen::ScenarioSpec scenario_from_config(const KeyValueFile& kv);

}  // namespace svydr::harness
