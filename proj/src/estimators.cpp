#include "svydr/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "svydr/kernels.hpp"

namespace svydr::estimators {

namespace {

constexpr double kNormal975 = 1.96;

EstimateResult with_interval(std::string name, double point, std::optional<double> se) {
  EstimateResult r;
  r.name = std::move(name);
  r.point = point;
  r.se = se;
  if (se) {
    r.ci_lo = point - kNormal975 * *se;
    r.ci_hi = point + kNormal975 * *se;
  }
  return r;
}

// Cluster-level PPS-with-replacement variance of the Sample-A term:
// t_j = M * sum_{i in j, A} g_i / pi^A_i over sampled clusters,
// V_A = (1/n^2) (1/(M(M-1))) sum_j (t_j - tbar)^2.
double variance_a_term(const UnitTable& t, const std::vector<double>& g) {
  const std::uint32_t M = t.sampled_clusters;
  if (M < 2)
    throw std::runtime_error("variance: need at least 2 sampled clusters");
  std::unordered_map<std::uint32_t, double> totals;
  totals.reserve(M * 2);
  for (std::size_t r = 0; r < t.size(); ++r)
    if (t.ra[r]) totals[t.cluster[r]] += g[r] / t.pi_a[r];
  if (totals.size() > M)
    throw std::runtime_error("variance: more Sample-A clusters than M");
  std::vector<double> tj;
  tj.reserve(M);
  for (const auto& [cl, e] : totals) tj.push_back(static_cast<double>(M) * e);
  // sampled clusters with no A units still contribute t_j = 0
  while (tj.size() < M) tj.push_back(0.0);
  std::sort(tj.begin(), tj.end());  // deterministic reduction order
  const double tbar = kernels::sum(tj.data(), tj.size()) / M;
  double ss = 0.0;
  for (double v : tj) ss += (v - tbar) * (v - tbar);
  const double n = static_cast<double>(t.population_size);
  // finite-population correction for the first-stage without-replacement draw
  const double fpc = t.total_clusters > M
                         ? 1.0 - static_cast<double>(M) / t.total_clusters
                         : 1.0;
  return fpc * ss / (n * n * M * (M - 1.0));
}

// V_B = (1/n^2) sum_B (1 - piB-hat) / piB-hat^2 * (Y - m-hat)^2.
double variance_b_term(const UnitTable& t, const std::vector<double>& mean_values) {
  double total = 0.0;
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (!t.rb[r]) continue;
    const double resid = t.y[r] - mean_values[r];
    total += (1.0 - t.sel_hat[r]) / (t.sel_hat[r] * t.sel_hat[r]) * resid * resid;
  }
  const double n = static_cast<double>(t.population_size);
  return total / (n * n);
}

double hajek_mean_over_a(const UnitTable& t, const std::vector<double>& values) {
  double num = 0.0, den = 0.0;
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (!t.ra[r]) continue;
    num += values[r] / t.pi_a[r];
    den += 1.0 / t.pi_a[r];
  }
  if (den <= 0.0) throw std::runtime_error("empty Sample A");
  return num / den;
}

}  // namespace

UnitTable build_unit_table(const popgen::FinitePopulation& pop, const design::SampleDraw& draw,
                           const crossfit::FoldPlan& plan, const learners::NuisanceFit& fit) {
  UnitTable t;
  t.population_size = pop.size;
  t.sampled_clusters = plan.sampled_total;
  t.total_clusters = pop.cluster_count;
  for (std::uint32_t i = 0; i < pop.size; ++i) {
    if (!draw.ra[i] && !draw.rb[i]) continue;
    const std::uint32_t cl = pop.cluster_of[i];
    const std::uint16_t k = plan.fold_of_cluster[cl];
    t.unit.push_back(i);
    t.cluster.push_back(cl);
    t.fold.push_back(k);
    t.ra.push_back(draw.ra[i]);
    t.rb.push_back(draw.rb[i]);
    t.pi_a.push_back(draw.pi_a[i]);
    t.y.push_back(draw.y[i]);
    const auto x = pop.covariate_row(i);
    t.sel_hat.push_back(fit.sel_prob[k]->value(x.data()));
    t.mean_hat.push_back(fit.outcome[k]->value(x.data()));
  }
  return t;
}

EstimateResult ht(const popgen::FinitePopulation& pop, const design::SampleDraw& draw) {
  UnitTable t;
  t.population_size = pop.size;
  t.total_clusters = pop.cluster_count;
  std::uint32_t sampled = 0;
  for (std::uint8_t r : draw.rc) sampled += r;
  t.sampled_clusters = sampled;
  double total = 0.0;
  for (std::uint32_t i = 0; i < pop.size; ++i) {
    if (!draw.ra[i]) continue;
    total += draw.y[i] / draw.pi_a[i];
    t.unit.push_back(i);
    t.cluster.push_back(pop.cluster_of[i]);
    t.ra.push_back(1);
    t.rb.push_back(0);
    t.pi_a.push_back(draw.pi_a[i]);
    t.y.push_back(draw.y[i]);
  }
  const double point = total / static_cast<double>(pop.size);
  const double se = std::sqrt(variance_a_term(t, t.y));
  return with_interval("HT", point, se);
}

EstimateResult hajek(const popgen::FinitePopulation& pop, const design::SampleDraw& draw) {
  UnitTable t;
  t.population_size = pop.size;
  t.total_clusters = pop.cluster_count;
  std::uint32_t sampled = 0;
  for (std::uint8_t r : draw.rc) sampled += r;
  t.sampled_clusters = sampled;
  double num = 0.0, den = 0.0;
  for (std::uint32_t i = 0; i < pop.size; ++i) {
    if (!draw.ra[i]) continue;
    num += draw.y[i] / draw.pi_a[i];
    den += 1.0 / draw.pi_a[i];
    t.unit.push_back(i);
    t.cluster.push_back(pop.cluster_of[i]);
    t.ra.push_back(1);
    t.rb.push_back(0);
    t.pi_a.push_back(draw.pi_a[i]);
    t.y.push_back(draw.y[i]);
  }
  if (den <= 0.0) throw std::runtime_error("hajek: empty Sample A");
  const double point = num / den;
  std::vector<double> centered(t.y);
  for (double& v : centered) v -= point;
  // scale by n/den: the Hajek linearization replaces 1/n with 1/n-hat
  double se = std::sqrt(variance_a_term(t, centered)) * static_cast<double>(pop.size) / den;
  return with_interval("Haj", point, se);
}

EstimateResult naive_mean(const design::SampleDraw& draw) {
  double total = 0.0;
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < draw.ra.size(); ++i) {
    if (!draw.ra[i]) continue;
    total += draw.y[i];
    ++count;
  }
  if (count == 0) throw std::runtime_error("naive: empty Sample A");
  return with_interval("naive", total / count, std::nullopt);
}

double estimated_population_size(const UnitTable& t) {
  double total = 0.0;
  for (std::size_t r = 0; r < t.size(); ++r)
    if (t.ra[r]) total += 1.0 / t.pi_a[r];
  return total;
}

double mean_u_statistic(const UnitTable& t, const std::vector<double>& mean_values) {
  std::vector<double> terms;
  terms.reserve(2 * t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (t.rb[r])
      terms.push_back((t.y[r] - mean_values[r]) / t.sel_hat[r]);
    if (t.ra[r]) terms.push_back(mean_values[r] / t.pi_a[r]);
  }
  return kernels::neumaier_sum(terms.data(), terms.size()) /
         static_cast<double>(t.population_size);
}

double variance_dr1(const UnitTable& t, const std::vector<double>& mean_values) {
  return variance_a_term(t, mean_values) + variance_b_term(t, mean_values);
}

double variance_dr2(const UnitTable& t, const std::vector<double>& mean_values) {
  const double center = hajek_mean_over_a(t, mean_values);
  std::vector<double> centered(mean_values);
  for (double& v : centered) v -= center;
  return variance_a_term(t, centered) + variance_b_term(t, mean_values);
}

EstimateResult dr1(const UnitTable& t) {
  const double point = mean_u_statistic(t, t.mean_hat);
  const double se = std::sqrt(variance_dr1(t, t.mean_hat));
  return with_interval("DR1", point, se);
}

EstimateResult dr2(const UnitTable& t) {
  const double nhat = estimated_population_size(t);
  if (nhat <= 0.0) throw std::runtime_error("dr2: empty Sample A");
  const double point =
      mean_u_statistic(t, t.mean_hat) * static_cast<double>(t.population_size) / nhat;
  const double se = std::sqrt(variance_dr2(t, t.mean_hat));
  return with_interval("DR2", point, se);
}

EstimateResult dr2clw(const UnitTable& t) {
  const double nhat_a = estimated_population_size(t);
  double nhat_b = 0.0, resid_total = 0.0, mean_total = 0.0;
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (t.ra[r]) mean_total += t.mean_hat[r] / t.pi_a[r];
    if (t.rb[r]) {
      nhat_b += 1.0 / t.sel_hat[r];
      resid_total += (t.y[r] - t.mean_hat[r]) / t.sel_hat[r];
    }
  }
  if (nhat_a <= 0.0) throw std::runtime_error("dr2clw: empty Sample A");
  if (nhat_b <= 0.0) throw std::runtime_error("dr2clw: empty Sample B");
  const double point = mean_total / nhat_a + resid_total / nhat_b;
  const double se = std::sqrt(variance_dr2(t, t.mean_hat));
  return with_interval("DR2clw", point, se);
}

Fluctuation tmle_fluctuate(const UnitTable& t, int fold_count, FluctuationKind kind) {
  Fluctuation f;
  f.kind = kind;
  f.epsilon.assign(fold_count, 0.0);
  for (int k = 0; k < fold_count; ++k) {
    std::vector<double> num_terms, den_terms;
    for (std::size_t r = 0; r < t.size(); ++r) {
      if (!t.rb[r] || t.fold[r] != k) continue;
      if (kind == FluctuationKind::linear) {
        num_terms.push_back((t.y[r] - t.mean_hat[r]) / t.sel_hat[r]);
        den_terms.push_back(1.0 / (t.sel_hat[r] * t.sel_hat[r]));
      } else {
        if (!(t.y[r] > 0.0 && t.y[r] < 1.0))
          throw std::runtime_error("tmle logit fluctuation requires Y in (0,1)");
      }
    }
    if (kind == FluctuationKind::linear) {
      if (den_terms.empty())
        throw std::runtime_error("tmle: fold " + std::to_string(k) +
                                 " contains no Sample-B units");
      f.epsilon[k] = kernels::neumaier_sum(num_terms.data(), num_terms.size()) /
                     kernels::neumaier_sum(den_terms.data(), den_terms.size());
      continue;
    }

    // logit fluctuation: Newton on the score of the offset-logistic model
    bool any = false;
    double eps = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double score = 0.0, dscore = 0.0;
      any = false;
      for (std::size_t r = 0; r < t.size(); ++r) {
        if (!t.rb[r] || t.fold[r] != k) continue;
        any = true;
        const double m = std::clamp(t.mean_hat[r], 1e-12, 1.0 - 1e-12);
        const double offset = std::log(m / (1.0 - m));
        const double inv_sel = 1.0 / t.sel_hat[r];
        const double fitted = kernels::expit1(offset + eps * inv_sel);
        score += inv_sel * (t.y[r] - fitted);
        dscore -= inv_sel * inv_sel * fitted * (1.0 - fitted);
      }
      if (!any)
        throw std::runtime_error("tmle: fold " + std::to_string(k) +
                                 " contains no Sample-B units");
      if (std::fabs(score) < 1e-12) break;
      if (dscore >= 0.0)
        throw std::runtime_error("tmle logit fluctuation: flat score");
      eps -= score / dscore;
      if (iter == 99)
        throw std::runtime_error("tmle logit fluctuation did not converge");
    }
    f.epsilon[k] = eps;
  }
  return f;
}

std::vector<double> fluctuated_mean(const UnitTable& t, const Fluctuation& f) {
  std::vector<double> out(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double eps = f.epsilon[t.fold[r]];
    if (f.kind == FluctuationKind::linear) {
      out[r] = t.mean_hat[r] + eps / t.sel_hat[r];
    } else {
      const double m = std::clamp(t.mean_hat[r], 1e-12, 1.0 - 1e-12);
      out[r] = kernels::expit1(std::log(m / (1.0 - m)) + eps / t.sel_hat[r]);
    }
  }
  return out;
}

EstimateResult tmle1(const UnitTable& t, const Fluctuation& f) {
  const std::vector<double> star = fluctuated_mean(t, f);
  std::vector<double> terms;
  for (std::size_t r = 0; r < t.size(); ++r)
    if (t.ra[r]) terms.push_back(star[r] / t.pi_a[r]);
  const double point = kernels::neumaier_sum(terms.data(), terms.size()) /
                       static_cast<double>(t.population_size);
  const double se = std::sqrt(variance_dr1(t, star));
  return with_interval("TMLE1", point, se);
}

EstimateResult tmle2(const UnitTable& t, const Fluctuation& f) {
  const std::vector<double> star = fluctuated_mean(t, f);
  const double nhat = estimated_population_size(t);
  if (nhat <= 0.0) throw std::runtime_error("tmle2: empty Sample A");
  std::vector<double> terms;
  for (std::size_t r = 0; r < t.size(); ++r)
    if (t.ra[r]) terms.push_back(star[r] / t.pi_a[r]);
  const double point = kernels::neumaier_sum(terms.data(), terms.size()) / nhat;
  const double se = std::sqrt(variance_dr2(t, star));
  return with_interval("TMLE2", point, se);
}

}  // namespace svydr::estimators
