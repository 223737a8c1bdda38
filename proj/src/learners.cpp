#include "svydr/learners.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svydr/kernels.hpp"

namespace svydr::learners {

int FeatureExpander::width() const {
  switch (map) {
    case FeatureMap::intercept_only:
      return 1;
    case FeatureMap::main_effects:
      return 5;
    case FeatureMap::true_model_terms:
      return 5 + static_cast<int>(quad.size());
  }
  return 1;
}

void FeatureExpander::fill(const double* x, double* row) const {
  row[0] = 1.0;
  if (map == FeatureMap::intercept_only) return;
  for (int j = 0; j < 4; ++j) row[1 + j] = x[j];
  if (map == FeatureMap::true_model_terms)
    for (std::size_t t = 0; t < quad.size(); ++t)
      row[5 + t] = x[quad[t].a] * x[quad[t].b];
}

FeatureExpander FeatureExpander::for_spec(const LearnerSpec& spec,
                                          const popgen::ScenarioSpec& scenario) {
  FeatureExpander fx;
  fx.map = spec.feature_map;
  if (fx.map == FeatureMap::true_model_terms)
    fx.quad = spec.target == LearnerTarget::outcome ? scenario.outcome_mean.quad
                                                    : scenario.selection_logit.quad;
  if (fx.width() > 32)
    throw std::invalid_argument("feature map wider than 32 columns");
  return fx;
}

namespace {
constexpr int kMaxFeatureWidth = 32;
}

double LinearModel::value(const double* x) const {
  double row[kMaxFeatureWidth];
  features.fill(x, row);
  return kernels::dot(row, beta.data(), beta.size());
}

double LogisticModel::linear_predictor(const double* x) const {
  double row[kMaxFeatureWidth];
  features.fill(x, row);
  return kernels::dot(row, beta.data(), beta.size());
}

double LogisticModel::value(const double* x) const {
  return std::clamp(kernels::expit1(linear_predictor(x)), floor, cap);
}

// --- linear algebra ---------------------------------------------------------

namespace {

// Cholesky solve of the SPD system A x = b (A row major p*p). Returns false
// when a pivot collapses; *bad_col reports the column.
bool cholesky_solve(std::vector<double> a, std::vector<double> b, int p,
                    std::vector<double>& x, int* bad_col) {
  for (int j = 0; j < p; ++j) {
    double diag = a[j * p + j];
    for (int k = 0; k < j; ++k) diag -= a[j * p + k] * a[j * p + k];
    if (!(diag > 1e-12)) {
      if (bad_col) *bad_col = j;
      return false;
    }
    const double root = std::sqrt(diag);
    a[j * p + j] = root;
    for (int i = j + 1; i < p; ++i) {
      double v = a[i * p + j];
      for (int k = 0; k < j; ++k) v -= a[i * p + k] * a[j * p + k];
      a[i * p + j] = v / root;
    }
  }
  // forward then backward substitution
  for (int i = 0; i < p; ++i) {
    double v = b[i];
    for (int k = 0; k < i; ++k) v -= a[i * p + k] * b[k];
    b[i] = v / a[i * p + i];
  }
  x.assign(p, 0.0);
  for (int i = p - 1; i >= 0; --i) {
    double v = b[i];
    for (int k = i + 1; k < p; ++k) v -= a[k * p + i] * x[k];
    x[i] = v / a[i * p + i];
  }
  return true;
}

double softplus(double v) {
  // log(1 + e^v) without overflow
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

}  // namespace

std::vector<double> weighted_least_squares(const std::vector<std::vector<double>>& rows,
                                           std::span<const double> y,
                                           std::span<const double> w) {
  if (rows.empty()) throw std::runtime_error("least squares: empty training set");
  const int p = static_cast<int>(rows[0].size());
  std::vector<double> xtx(static_cast<std::size_t>(p) * p, 0.0), xty(p, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    for (int a = 0; a < p; ++a) {
      const double xa = rows[i][a] * wi;
      xty[a] += xa * y[i];
      for (int b = a; b < p; ++b) xtx[a * p + b] += xa * rows[i][b];
    }
  }
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < a; ++b) xtx[a * p + b] = xtx[b * p + a];
  std::vector<double> beta;
  int bad_col = -1;
  if (!cholesky_solve(xtx, xty, p, beta, &bad_col))
    throw std::runtime_error("least squares: design is rank deficient at column " +
                             std::to_string(bad_col) +
                             " (collinear with earlier columns)");
  return beta;
}

// --- pseudo-likelihood ------------------------------------------------------

double pseudo_lik_value(const PseudoLikRows& rows, std::span<const double> beta) {
  double v = 0.0;
  for (std::size_t i = 0; i < rows.x.size(); ++i) {
    const double eta = kernels::dot(rows.x[i].data(), beta.data(), beta.size());
    v += rows.a[i] * eta - rows.b[i] * softplus(eta);
  }
  return v;
}

void pseudo_lik_gradient(const PseudoLikRows& rows, std::span<const double> beta,
                         std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t i = 0; i < rows.x.size(); ++i) {
    const double eta = kernels::dot(rows.x[i].data(), beta.data(), beta.size());
    const double coef = rows.a[i] - rows.b[i] * kernels::expit1(eta);
    kernels::axpy(coef, rows.x[i].data(), grad.data(), grad.size());
  }
}

void pseudo_lik_hessian(const PseudoLikRows& rows, std::span<const double> beta,
                        std::vector<double>& hess) {
  const int p = static_cast<int>(beta.size());
  hess.assign(static_cast<std::size_t>(p) * p, 0.0);
  for (std::size_t i = 0; i < rows.x.size(); ++i) {
    if (rows.b[i] == 0.0) continue;
    const double eta = kernels::dot(rows.x[i].data(), beta.data(), beta.size());
    const double pi = kernels::expit1(eta);
    const double wi = rows.b[i] * pi * (1.0 - pi);
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b) hess[a * p + b] -= wi * rows.x[i][a] * rows.x[i][b];
  }
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < a; ++b) hess[a * p + b] = hess[b * p + a];
}

std::vector<double> maximize_pseudo_likelihood(const PseudoLikRows& rows, int p,
                                               const LearnerSpec& spec, FitDiagnostics* diag) {
  // warm start at the intercept-only stationary point logit(sum a / sum b)
  std::vector<double> beta(p, 0.0), grad(p), step, hess;
  double a_total = 0.0, b_total = 0.0;
  for (std::size_t i = 0; i < rows.x.size(); ++i) {
    a_total += rows.a[i];
    b_total += rows.b[i];
  }
  if (b_total > 0.0) {
    const double rate = std::clamp(a_total / b_total, 1e-9, 1.0 - 1e-9);
    beta[0] = std::log(rate / (1.0 - rate));
  }
  double obj = pseudo_lik_value(rows, beta);
  double damping = 0.0;
  for (int iter = 1; iter <= spec.max_iterations; ++iter) {
    pseudo_lik_gradient(rows, beta, grad);
    double gnorm = 0.0;
    for (double g : grad) gnorm = std::max(gnorm, std::fabs(g));
    if (diag) {
      diag->iterations = iter;
      diag->final_objective = obj;
      diag->gradient_norm = gnorm;
    }
    if (gnorm < spec.gradient_tolerance) {
      // a converged fit that perfectly separates the positive rows from the
      // weighted negative rows has no interior maximum
      double min_pos = 1e300, max_neg = -1e300;
      for (std::size_t i = 0; i < rows.x.size(); ++i) {
        const double eta = kernels::dot(rows.x[i].data(), beta.data(), beta.size());
        if (rows.a[i] > 0.0)
          min_pos = std::min(min_pos, eta);
        else
          max_neg = std::max(max_neg, eta);
      }
      if (min_pos > max_neg)
        throw std::runtime_error(
            "pseudo-likelihood: training rows are completely separated; the maximizer "
            "is not interior");
      return beta;
    }

    pseudo_lik_hessian(rows, beta, hess);
    double max_diag = 1.0;
    for (int j = 0; j < p; ++j) max_diag = std::max(max_diag, -hess[j * p + j]);

    // Damped Newton: raise the ridge whenever the solve or the line search
    // fails. Acceptance allows slack at the objective's rounding floor so the
    // final quadratic-convergence steps are not rejected as noise.
    const double slack = 1e-12 * (1.0 + std::fabs(obj));
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      std::vector<double> neg_hess(hess.size());
      for (std::size_t i = 0; i < hess.size(); ++i) neg_hess[i] = -hess[i];
      for (int j = 0; j < p; ++j) neg_hess[j * p + j] += damping;
      if (!cholesky_solve(neg_hess, grad, p, step, nullptr)) {
        damping = std::max(damping * 10.0, 1e-10 * max_diag);
        continue;
      }
      double scale = 1.0;
      for (int h = 0; h <= spec.max_step_halvings; ++h, scale *= 0.5) {
        std::vector<double> trial(beta);
        kernels::axpy(scale, step.data(), trial.data(), p);
        const double trial_obj = pseudo_lik_value(rows, trial);
        if (trial_obj >= obj - slack) {
          beta = std::move(trial);
          obj = std::max(obj, trial_obj);
          accepted = true;
          if (h == 0) damping *= 0.25;
          break;
        }
      }
      if (!accepted) damping = std::max(damping * 10.0, 1e-8 * max_diag);
    }
    if (!accepted)
      throw std::runtime_error(
          "pseudo-likelihood: step halving exhausted (complete separation?); gradient norm " +
          std::to_string(gnorm));
    for (double b : beta)
      if (std::fabs(b) > 50.0)
        throw std::runtime_error(
            "pseudo-likelihood: coefficients diverged (complete separation in the "
            "training rows)");
  }
  double gnorm = 0.0;
  pseudo_lik_gradient(rows, beta, grad);
  for (double g : grad) gnorm = std::max(gnorm, std::fabs(g));
  throw std::runtime_error("pseudo-likelihood: no convergence after " +
                           std::to_string(spec.max_iterations) +
                           " Newton iterations; gradient norm " + std::to_string(gnorm));
}

// --- gradient boosting ------------------------------------------------------

double GbmModel::Tree::eval(const double* x) const {
  // left branch holds bins up to the split: values strictly below the edge
  int node = 0;
  while (nodes[node].feature >= 0)
    node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                          : nodes[node].right;
  return nodes[node].leaf_value;
}

double GbmModel::raw_score(const double* x) const {
  double score = base_score;
  for (const auto& t : trees) score += t.eval(x);
  return score;
}

double GbmModel::value(const double* x) const {
  const double score = raw_score(x);
  if (loss == BoostLoss::squared) return score;
  return std::clamp(kernels::expit1(score), floor, cap);
}

namespace {

constexpr int kBins = 64;

struct BinnedData {
  std::size_t n = 0;
  std::vector<std::uint8_t> bin;        // n * 4
  std::vector<double> edges;            // 4 * (kBins - 1) upper edges
  double edge(int f, int b) const { return edges[f * (kBins - 1) + b]; }
};

BinnedData bin_features(std::span<const double> rows, std::size_t n) {
  BinnedData data;
  data.n = n;
  data.bin.resize(n * 4);
  data.edges.assign(4 * (kBins - 1), 0.0);
  std::vector<double> col(n);
  for (int f = 0; f < 4; ++f) {
    for (std::size_t i = 0; i < n; ++i) col[i] = rows[i * 4 + f];
    std::vector<double> sorted(col);
    std::sort(sorted.begin(), sorted.end());
    for (int b = 0; b < kBins - 1; ++b) {
      const std::size_t idx =
          std::min(n - 1, static_cast<std::size_t>((b + 1) * n / kBins));
      data.edges[f * (kBins - 1) + b] = sorted[idx];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* e = &data.edges[f * (kBins - 1)];
      const int b = static_cast<int>(std::upper_bound(e, e + kBins - 1, col[i]) - e);
      data.bin[i * 4 + f] = static_cast<std::uint8_t>(b);
    }
  }
  return data;
}

struct SplitResult {
  bool found = false;
  int feature = -1;
  int bin = -1;  // go left when bin <= this
  double gain = 0.0;
};

// Newton gain G^2/H; min_leaf_weight constrains the hessian mass per child
// (plain row weight for squared loss).
SplitResult best_split(const BinnedData& data, std::span<const std::uint32_t> members,
                       std::span<const double> grad, std::span<const double> hess,
                       double min_leaf_weight) {
  double g_total = 0.0, h_total = 0.0;
  for (std::uint32_t i : members) {
    g_total += grad[i];
    h_total += hess[i];
  }
  SplitResult best;
  if (h_total < 2.0 * min_leaf_weight) return best;
  const double parent_score = g_total * g_total / h_total;
  double gsum[kBins], hsum[kBins];
  for (int f = 0; f < 4; ++f) {
    std::fill(gsum, gsum + kBins, 0.0);
    std::fill(hsum, hsum + kBins, 0.0);
    for (std::uint32_t i : members) {
      const int b = data.bin[static_cast<std::size_t>(i) * 4 + f];
      gsum[b] += grad[i];
      hsum[b] += hess[i];
    }
    double gl = 0.0, hl = 0.0;
    for (int b = 0; b < kBins - 1; ++b) {
      gl += gsum[b];
      hl += hsum[b];
      const double hr = h_total - hl;
      if (hl < min_leaf_weight || hr < min_leaf_weight) continue;
      const double gr = g_total - gl;
      const double gain = gl * gl / hl + gr * gr / hr - parent_score;
      if (gain > best.gain + 1e-12) {
        best.found = true;
        best.feature = f;
        best.bin = b;
        best.gain = gain;
      }
    }
  }
  return best;
}

struct BuildNode {
  std::vector<std::uint32_t> members;
  int depth = 0;
  int index = 0;
};

GbmModel::Tree grow_tree(const BinnedData& data, std::span<const std::uint32_t> sample,
                         std::span<const double> grad, std::span<const double> hess,
                         const BoostParams& params) {
  GbmModel::Tree tree;
  tree.nodes.emplace_back();
  std::vector<BuildNode> stack;
  stack.push_back({{sample.begin(), sample.end()}, 0, 0});
  while (!stack.empty()) {
    BuildNode node = std::move(stack.back());
    stack.pop_back();
    SplitResult split;
    if (node.depth < params.max_depth)
      split = best_split(data, node.members, grad, hess, params.min_leaf_weight);
    if (!split.found) {
      double g = 0.0, h = 0.0;
      for (std::uint32_t i : node.members) {
        g += grad[i];
        h += hess[i];
      }
      tree.nodes[node.index].feature = -1;
      tree.nodes[node.index].leaf_value =
          h > 0.0 ? params.learning_rate * (-g / h) : 0.0;
      continue;
    }
    BuildNode left, right;
    left.depth = right.depth = node.depth + 1;
    for (std::uint32_t i : node.members) {
      if (data.bin[static_cast<std::size_t>(i) * 4 + split.feature] <= split.bin)
        left.members.push_back(i);
      else
        right.members.push_back(i);
    }
    tree.nodes[node.index].feature = split.feature;
    tree.nodes[node.index].threshold = data.edge(split.feature, split.bin);
    left.index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    right.index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node.index].left = left.index;
    tree.nodes[node.index].right = right.index;
    stack.push_back(std::move(left));
    stack.push_back(std::move(right));
  }
  return tree;
}

double tree_eval_row(const GbmModel::Tree& tree, std::span<const double> rows,
                     std::uint32_t i) {
  return tree.eval(&rows[static_cast<std::size_t>(i) * 4]);
}

}  // namespace

GbmModel fit_gbm(std::span<const double> rows, std::size_t n, std::span<const double> y,
                 std::span<const double> w, BoostLoss loss, const BoostParams& params,
                 rng::RandomStream& stream) {
  if (n == 0) throw std::runtime_error("gbm: empty training set");
  GbmModel model;
  model.loss = loss;

  // base score: weighted mean (squared) or weighted base-rate logit
  double wy = 0.0, wtot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    wy += wi * y[i];
    wtot += wi;
  }
  if (loss == BoostLoss::squared) {
    model.base_score = wy / wtot;
  } else {
    const double rate = std::clamp(wy / wtot, 1e-9, 1.0 - 1e-9);
    model.base_score = std::log(rate / (1.0 - rate));
  }

  const BinnedData data = bin_features(rows, n);

  // fixed validation split for early stopping
  std::vector<std::uint8_t> in_valid(n, 0);
  std::size_t n_valid = 0;
  if (params.validation_fraction > 0.0 && n >= 25) {
    n_valid = static_cast<std::size_t>(params.validation_fraction * n);
    for (std::uint32_t i :
         stream.sample_without_replacement(static_cast<std::uint32_t>(n),
                                           static_cast<std::uint32_t>(n_valid)))
      in_valid[i] = 1;
  }
  std::vector<std::uint32_t> train_idx;
  train_idx.reserve(n - n_valid);
  for (std::uint32_t i = 0; i < n; ++i)
    if (!in_valid[i]) train_idx.push_back(i);

  std::vector<double> score(n, model.base_score);
  std::vector<double> grad(n), hess(n);

  auto valid_loss = [&]() {
    double total = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_valid[i]) continue;
      const double wi = w.empty() ? 1.0 : w[i];
      if (loss == BoostLoss::squared) {
        const double d = y[i] - score[i];
        total += wi * d * d;
      } else {
        total += wi * (softplus(score[i]) - y[i] * score[i]);
      }
      wsum += wi;
    }
    return wsum > 0.0 ? total / wsum : 0.0;
  };

  double best_valid = n_valid ? valid_loss() : 0.0;
  std::size_t best_size = 0;
  int stale = 0;

  for (int t = 0; t < params.n_trees; ++t) {
    for (std::uint32_t i : train_idx) {
      const double wi = w.empty() ? 1.0 : w[i];
      if (loss == BoostLoss::squared) {
        grad[i] = wi * (score[i] - y[i]);
        hess[i] = wi;
      } else {
        const double p = kernels::expit1(score[i]);
        grad[i] = wi * (p - y[i]);
        hess[i] = std::max(wi * p * (1.0 - p), 1e-12);
      }
    }
    std::vector<std::uint32_t> sample = train_idx;
    if (params.subsample < 1.0) {
      const std::size_t keep =
          std::max<std::size_t>(1, static_cast<std::size_t>(params.subsample * sample.size()));
      std::vector<std::uint32_t> chosen;
      chosen.reserve(keep);
      for (std::uint32_t pick : stream.sample_without_replacement(
               static_cast<std::uint32_t>(sample.size()), static_cast<std::uint32_t>(keep)))
        chosen.push_back(sample[pick]);
      sample = std::move(chosen);
    }
    GbmModel::Tree tree = grow_tree(data, sample, grad, hess, params);
    if (tree.nodes.size() == 1 && tree.nodes[0].leaf_value == 0.0) break;  // nothing to fit
    for (std::uint32_t i = 0; i < n; ++i)
      score[i] += tree_eval_row(tree, rows, i);
    model.trees.push_back(std::move(tree));

    if (n_valid) {
      const double v = valid_loss();
      if (v < best_valid - 1e-12) {
        best_valid = v;
        best_size = model.trees.size();
        stale = 0;
      } else if (++stale > params.patience) {
        break;
      }
    }
  }
  if (n_valid && best_size < model.trees.size()) model.trees.resize(best_size);
  model.diagnostics.iterations = static_cast<int>(model.trees.size());
  model.diagnostics.final_objective = n_valid ? best_valid : valid_loss();
  return model;
}

// --- per-fold fitting -------------------------------------------------------

std::unique_ptr<Predictor> fit_outcome(const popgen::FinitePopulation& pop,
                                       const design::SampleDraw& draw,
                                       const crossfit::FoldPlan& plan, int fold,
                                       const LearnerSpec& spec, rng::RandomStream& stream,
                                       FitDiagnostics* diag) {
  // training rows: Sample-B units outside the fold (every B unit when K = 1)
  const bool single_fold = plan.fold_count == 1;
  std::vector<std::uint32_t> units;
  for (std::uint32_t i = 0; i < pop.size; ++i)
    if (draw.rb[i] && (single_fold || plan.fold_of_cluster[pop.cluster_of[i]] != fold))
      units.push_back(i);
  if (units.empty())
    throw std::runtime_error("fit_outcome: no Sample-B training rows outside fold " +
                             std::to_string(fold));

  if (spec.family == LearnerFamily::parametric) {
    FeatureExpander fx = FeatureExpander::for_spec(spec, pop.spec);
    const int p = fx.width();
    std::vector<std::vector<double>> rows(units.size(), std::vector<double>(p));
    std::vector<double> y(units.size());
    for (std::size_t r = 0; r < units.size(); ++r) {
      const auto x = pop.covariate_row(units[r]);
      fx.fill(x.data(), rows[r].data());
      y[r] = draw.y[units[r]];
    }
    auto model = std::make_unique<LinearModel>();
    model->features = std::move(fx);
    model->beta = weighted_least_squares(rows, y, {});
    if (diag) diag->iterations = 1;
    return model;
  }
  if (spec.family == LearnerFamily::boosted_trees) {
    std::vector<double> rows(units.size() * 4), y(units.size());
    for (std::size_t r = 0; r < units.size(); ++r) {
      const auto x = pop.covariate_row(units[r]);
      std::copy(x.begin(), x.end(), rows.begin() + r * 4);
      y[r] = draw.y[units[r]];
    }
    auto model = std::make_unique<GbmModel>(
        fit_gbm(rows, units.size(), y, {}, BoostLoss::squared, spec.boosting, stream));
    if (diag) *diag = model->diagnostics;
    return model;
  }
  throw std::invalid_argument("fit_outcome: unsupported learner family");
}

std::unique_ptr<Predictor> fit_selection(const popgen::FinitePopulation& pop,
                                         const design::SampleDraw& draw,
                                         const crossfit::FoldPlan& plan, int fold,
                                         const LearnerSpec& spec, rng::RandomStream& stream,
                                         FitDiagnostics* diag) {
  const bool single_fold = plan.fold_count == 1;
  // Sample-B rows: all out-of-fold B units. Sample-A rows: out-of-fold units
  // in the fold's active clusters, with pi^A scaled by the group multiplier.
  std::vector<std::uint32_t> b_units, a_units;
  std::vector<double> a_weight;
  for (std::uint32_t i = 0; i < pop.size; ++i) {
    const std::uint32_t cl = pop.cluster_of[i];
    if (!single_fold && plan.fold_of_cluster[cl] == fold) continue;
    if (draw.rb[i]) b_units.push_back(i);
    if (draw.ra[i] && plan.active[fold][cl]) {
      const int l = plan.group_of_cluster[cl];
      const double mult = plan.multiplier[plan.cell(l, fold)];
      a_units.push_back(i);
      a_weight.push_back(1.0 / (draw.pi_a[i] * mult));
    }
  }
  if (b_units.empty())
    throw std::runtime_error("fit_selection: no Sample-B rows outside fold " +
                             std::to_string(fold));
  if (a_units.empty())
    throw std::runtime_error("fit_selection: empty active Sample-A set for fold " +
                             std::to_string(fold));

  if (spec.family == LearnerFamily::parametric) {
    FeatureExpander fx = FeatureExpander::for_spec(spec, pop.spec);
    const int p = fx.width();
    PseudoLikRows rows;
    rows.x.reserve(b_units.size() + a_units.size());
    const double b_softplus = spec.pseudo_likelihood == PseudoLikelihood::full ? 0.0 : 1.0;
    for (std::uint32_t i : b_units) {
      const auto x = pop.covariate_row(i);
      std::vector<double> row(p);
      fx.fill(x.data(), row.data());
      rows.x.push_back(std::move(row));
      rows.a.push_back(1.0);
      rows.b.push_back(b_softplus);
    }
    for (std::size_t r = 0; r < a_units.size(); ++r) {
      const auto x = pop.covariate_row(a_units[r]);
      std::vector<double> row(p);
      fx.fill(x.data(), row.data());
      rows.x.push_back(std::move(row));
      rows.a.push_back(0.0);
      rows.b.push_back(a_weight[r]);
    }
    auto model = std::make_unique<LogisticModel>();
    model->features = std::move(fx);
    model->floor = spec.pib_floor;
    model->beta = maximize_pseudo_likelihood(rows, p, spec, diag);
    return model;
  }
  if (spec.family == LearnerFamily::boosted_trees) {
    // weighted binary log-loss: B units positive with weight 1, active A
    // units negative with weight 1/pi^A (the approximate pseudo-likelihood)
    const std::size_t n = b_units.size() + a_units.size();
    std::vector<double> rows(n * 4), y(n), w(n);
    std::size_t r = 0;
    for (std::uint32_t i : b_units) {
      const auto x = pop.covariate_row(i);
      std::copy(x.begin(), x.end(), rows.begin() + r * 4);
      y[r] = 1.0;
      w[r] = 1.0;
      ++r;
    }
    for (std::size_t a = 0; a < a_units.size(); ++a, ++r) {
      const auto x = pop.covariate_row(a_units[a]);
      std::copy(x.begin(), x.end(), rows.begin() + r * 4);
      y[r] = 0.0;
      w[r] = a_weight[a];
    }
    auto model = std::make_unique<GbmModel>(
        fit_gbm(rows, n, y, w, BoostLoss::logistic, spec.boosting, stream));
    model->floor = spec.pib_floor;
    if (diag) *diag = model->diagnostics;
    return model;
  }
  throw std::invalid_argument("fit_selection: unsupported learner family");
}

NuisanceFit fit_all_folds(const popgen::FinitePopulation& pop, const design::SampleDraw& draw,
                          const crossfit::FoldPlan& plan, const LearnerSpec& outcome_spec,
                          const LearnerSpec& selection_spec, std::uint64_t seed) {
  NuisanceFit fit;
  fit.fold_count = plan.fold_count;
  fit.pib_floor = selection_spec.pib_floor;
  fit.sel_prob.resize(plan.fold_count);
  fit.outcome.resize(plan.fold_count);
  fit.sel_diag.resize(plan.fold_count);
  fit.outcome_diag.resize(plan.fold_count);
  for (int k = 0; k < plan.fold_count; ++k) {
    rng::RandomStream out_stream(
        rng::derive_seed(rng::derive_seed(seed, rng::kTagLearner), 2 * k));
    rng::RandomStream sel_stream(
        rng::derive_seed(rng::derive_seed(seed, rng::kTagLearner), 2 * k + 1));
    fit.outcome[k] =
        fit_outcome(pop, draw, plan, k, outcome_spec, out_stream, &fit.outcome_diag[k]);
    fit.sel_prob[k] =
        fit_selection(pop, draw, plan, k, selection_spec, sel_stream, &fit.sel_diag[k]);
  }
  return fit;
}

}  // namespace svydr::learners
