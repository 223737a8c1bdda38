// Point estimators of the finite-population mean (design-only, double-robust
// and targeted variants), the TMLE fluctuation step, and the variance
// estimators built from the cluster-level with-replacement approximation.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svydr/crossfit.hpp"
#include "svydr/design.hpp"
#include "svydr/learners.hpp"
#include "svydr/population.hpp"

namespace svydr::estimators {

struct EstimateResult {
  std::string name;
  double point = 0.0;
  std::optional<double> se;
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% normal interval when se is present
};

// Per-unit working table over the units with R^A + R^B >= 1 (the only units
// with nonzero contributions), with fold-specific nuisance predictions.
struct UnitTable {
  std::vector<std::uint32_t> unit;     // population index
  std::vector<std::uint32_t> cluster;
  std::vector<std::uint16_t> fold;
  std::vector<std::uint8_t> ra, rb;
  std::vector<double> pi_a;
  std::vector<double> y;
  std::vector<double> sel_hat;         // clipped pi^B-hat at the unit's fold
  std::vector<double> mean_hat;        // m-hat at the unit's fold
  std::uint64_t population_size = 0;
  std::uint32_t sampled_clusters = 0;  // M
  std::uint32_t total_clusters = 0;    // J; 0 disables the finite-population correction

  std::size_t size() const { return unit.size(); }
};

UnitTable build_unit_table(const popgen::FinitePopulation& pop, const design::SampleDraw& draw,
                           const crossfit::FoldPlan& plan, const learners::NuisanceFit& fit);

// Design-only estimators (use the realized Y of Sample-A units).
EstimateResult ht(const popgen::FinitePopulation& pop, const design::SampleDraw& draw);
EstimateResult hajek(const popgen::FinitePopulation& pop, const design::SampleDraw& draw);
EstimateResult naive_mean(const design::SampleDraw& draw);

// Double-robust estimators.
EstimateResult dr1(const UnitTable& t);
EstimateResult dr2(const UnitTable& t);
EstimateResult dr2clw(const UnitTable& t);

enum class FluctuationKind { linear, logit };

struct Fluctuation {
  FluctuationKind kind = FluctuationKind::linear;
  std::vector<double> epsilon;  // per fold
};

// Solves, per fold, sum_{i in fold} R^B_i / piB-hat * {Y_i - m-hat(X_i; eps)} = 0.
// The linear fluctuation m + eps/piB-hat has a closed form; the logit
// fluctuation runs Newton iterations and requires Y in (0,1).
Fluctuation tmle_fluctuate(const UnitTable& t, int fold_count, FluctuationKind kind);

// Post-fluctuation predictions m*-hat per table row.
std::vector<double> fluctuated_mean(const UnitTable& t, const Fluctuation& f);

EstimateResult tmle1(const UnitTable& t, const Fluctuation& f);
EstimateResult tmle2(const UnitTable& t, const Fluctuation& f);

// Variance plug-ins: V = V_A + V_B. g_values supplies the Sample-A
// transform (m-hat or its fluctuated/centered versions); residuals are
// Y - m-hat over Sample-B rows.
double variance_dr1(const UnitTable& t, const std::vector<double>& mean_values);
double variance_dr2(const UnitTable& t, const std::vector<double>& mean_values);

// Estimated population size: sum over Sample A of 1/pi^A.
double estimated_population_size(const UnitTable& t);

// U_i(piB-hat, m-hat) summed with compensation; exposed for identity tests.
double mean_u_statistic(const UnitTable& t, const std::vector<double>& mean_values);

}  // namespace svydr::estimators
