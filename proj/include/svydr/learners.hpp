// Nuisance learners behind a uniform interface: parametric logistic fits by
// pseudo-maximum-likelihood, least squares for the outcome mean, and a
// weighted gradient-boosted-tree learner as the data-adaptive option.
// Per-fold fits use only out-of-fold data; Sample-A rows for the selection
// fit are restricted to the fold's active subset with compensated weights.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "svydr/crossfit.hpp"
#include "svydr/design.hpp"
#include "svydr/population.hpp"
#include "svydr/rng.hpp"

namespace svydr::learners {

enum class LearnerFamily { parametric, boosted_trees, oracle_truth };
enum class LearnerTarget { selection, outcome };
enum class FeatureMap { intercept_only, main_effects, true_model_terms };
enum class PseudoLikelihood { full, approximate };

struct BoostParams {
  int n_trees = 300;
  int max_depth = 2;
  double learning_rate = 0.1;
  double min_leaf_weight = 10.0;
  double subsample = 0.8;
  double validation_fraction = 0.2;
  int patience = 25;
};

struct LearnerSpec {
  LearnerFamily family = LearnerFamily::parametric;
  LearnerTarget target = LearnerTarget::outcome;
  FeatureMap feature_map = FeatureMap::main_effects;
  PseudoLikelihood pseudo_likelihood = PseudoLikelihood::full;
  BoostParams boosting;
  double pib_floor = 1e-6;
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  int max_step_halvings = 30;
};

// Expanded parametric design row: intercept, then per the feature map.
// true_model_terms appends the scenario formula's quadratic terms for the
// requested target.
struct FeatureExpander {
  FeatureMap map = FeatureMap::main_effects;
  std::vector<popgen::QuadTerm> quad;  // used by true_model_terms

  int width() const;
  void fill(const double* x, double* row) const;
  static FeatureExpander for_spec(const LearnerSpec& spec, const popgen::ScenarioSpec& scenario);
};

struct FitDiagnostics {
  int iterations = 0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;
};

// Prediction surface over raw covariate rows (x1..x4).
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual double value(const double* x) const = 0;
  virtual void values(const double* const* rows, std::size_t n, double* out) const {
    for (std::size_t i = 0; i < n; ++i) out[i] = value(rows[i]);
  }
};

struct LinearModel final : Predictor {
  FeatureExpander features;
  std::vector<double> beta;
  double value(const double* x) const override;
};

struct LogisticModel final : Predictor {
  FeatureExpander features;
  std::vector<double> beta;
  double floor = 1e-6;
  double cap = 1.0 - 1e-9;
  double value(const double* x) const override;  // clipped probability
  double linear_predictor(const double* x) const;
};

// --- parametric building blocks -------------------------------------------

// Weighted least squares by normal equations + Cholesky. Throws on a
// rank-deficient design, naming the offending column.
std::vector<double> weighted_least_squares(const std::vector<std::vector<double>>& rows,
                                           std::span<const double> y,
                                           std::span<const double> w);

// Rows of the pseudo-likelihood objective
//   l(beta) = sum_i a_i * (x_i' beta) - b_i * softplus(x_i' beta).
// Sample-B rows: full likelihood (a=1, b=0), approximate (a=1, b=1);
// active Sample-A rows: (a=0, b=1/pi^A_adjusted).
struct PseudoLikRows {
  std::vector<std::vector<double>> x;
  std::vector<double> a;
  std::vector<double> b;
};

double pseudo_lik_value(const PseudoLikRows& rows, std::span<const double> beta);
void pseudo_lik_gradient(const PseudoLikRows& rows, std::span<const double> beta,
                         std::span<double> grad);
void pseudo_lik_hessian(const PseudoLikRows& rows, std::span<const double> beta,
                        std::vector<double>& hess);  // row-major p*p, negative definite

// Ascending Newton iterations with step halving.
std::vector<double> maximize_pseudo_likelihood(const PseudoLikRows& rows, int p,
                                               const LearnerSpec& spec, FitDiagnostics* diag);

// --- gradient boosting ------------------------------------------------------

enum class BoostLoss { squared, logistic };

class GbmModel final : public Predictor {
 public:
  struct Node {
    int feature = -1;      // -1: leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double leaf_value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
    double eval(const double* x) const;
  };

  double base_score = 0.0;  // prediction scale (logit scale for logistic loss)
  BoostLoss loss = BoostLoss::squared;
  double floor = 1e-6;
  double cap = 1.0 - 1e-9;
  std::vector<Tree> trees;
  FitDiagnostics diagnostics;

  double raw_score(const double* x) const;
  double value(const double* x) const override;  // probability when logistic
};

// rows: n x 4 raw covariates (row-major), y: targets (0/1 for logistic),
// w: instance weights.
GbmModel fit_gbm(std::span<const double> rows, std::size_t n, std::span<const double> y,
                 std::span<const double> w, BoostLoss loss, const BoostParams& params,
                 rng::RandomStream& stream);

// --- per-fold fitting -------------------------------------------------------

struct NuisanceFit {
  int fold_count = 1;
  std::vector<std::unique_ptr<Predictor>> sel_prob;   // per fold, clipped to [floor, cap]
  std::vector<std::unique_ptr<Predictor>> outcome;    // per fold
  std::vector<FitDiagnostics> sel_diag, outcome_diag;
  double pib_floor = 1e-6;
};

std::unique_ptr<Predictor> fit_outcome(const popgen::FinitePopulation& pop,
                                       const design::SampleDraw& draw,
                                       const crossfit::FoldPlan& plan, int fold,
                                       const LearnerSpec& spec, rng::RandomStream& stream,
                                       FitDiagnostics* diag = nullptr);

std::unique_ptr<Predictor> fit_selection(const popgen::FinitePopulation& pop,
                                         const design::SampleDraw& draw,
                                         const crossfit::FoldPlan& plan, int fold,
                                         const LearnerSpec& spec, rng::RandomStream& stream,
                                         FitDiagnostics* diag = nullptr);

NuisanceFit fit_all_folds(const popgen::FinitePopulation& pop, const design::SampleDraw& draw,
                          const crossfit::FoldPlan& plan, const LearnerSpec& outcome_spec,
                          const LearnerSpec& selection_spec, std::uint64_t seed);

}  // namespace svydr::learners
