#include "svydr/population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "svydr/kernels.hpp"

namespace svydr::popgen {

void ScenarioSpec::validate() const {
  if (clusters_total == 0) throw std::invalid_argument("scenario: J must be > 0");
  if (clusters_sampled == 0 || clusters_sampled >= clusters_total)
    throw std::invalid_argument("scenario: require 0 < M < J");
  if (folds < 1) throw std::invalid_argument("scenario: K must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("scenario: delta must lie in (0,1)");
  if (prob_groups < 1) throw std::invalid_argument("scenario: L must be >= 1");
  if (house_mean <= 0.0) throw std::invalid_argument("scenario: household mean must be > 0");
  if (house_var < house_mean)
    throw std::invalid_argument("scenario: household variance must be >= mean");
  if (y_sd < 0.0) throw std::invalid_argument("scenario: outcome sd must be >= 0");
  for (const auto& form : {outcome_mean, selection_logit})
    for (const auto& t : form.quad)
      if (t.a < 0 || t.a > 3 || t.b < 0 || t.b > 3)
        throw std::invalid_argument("scenario: quadratic term indexes a covariate outside x1..x4");
}

ScenarioSpec scenario_preset(int id) {
  ScenarioSpec s;
  s.scenario_id = id;
  switch (id) {
    case 1:
    case 2:
      s.outcome_mean = {0.0, {1.0, 1.0, 2.0, 1.0}, {}};
      s.selection_logit = {id == 1 ? -6.2 : -7.5, {0.5, 1.0, 0.5, 1.0}, {}};
      s.clusters_sampled = 150;
      s.houses_per_cluster = 20;
      break;
    case 3:
    case 4:
    case 5:
    case 6:
      s.outcome_mean = {0.0, {0.5, 0.5, 2.0, 1.0}, {{0, 2, 2.0}, {1, 1, 1.0}}};
      s.selection_logit = {-6.4, {0.25, 0.5, 0.5, 1.0}, {{0, 2, 1.0}, {1, 1, 0.5}}};
      s.clusters_sampled = (id == 3 || id == 5) ? 150 : 50;
      s.houses_per_cluster = (id == 3 || id == 4) ? 20 : 5;
      break;
    default:
      throw std::invalid_argument("scenario_preset: id must be 1..6");
  }
  return s;
}

double FinitePopulation::mean_true_mean() const {
  return kernels::sum(true_mean.data(), true_mean.size()) / static_cast<double>(size);
}

namespace {

// Cluster- and household-size-dependent covariate means: z is the
// standardized log household total of the cluster, u a cluster effect.
struct CovariateContext {
  double z = 0.0;
  double u = 0.0;
};

double continuous_mean(const CovariateContext& c, int q) {
  return 0.3 * c.z + 0.1 * (q - 2) + c.u;
}
double binary_logit(const CovariateContext& c, int q) {
  return 0.3 * c.z + 0.2 * (q - 2) + c.u;
}

}  // namespace

FinitePopulation generate_population(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  rng::RandomStream stream(rng::derive_seed(seed, rng::kTagPopulation));

  const std::uint32_t J = spec.clusters_total;
  FinitePopulation pop;
  pop.spec = spec;
  pop.cluster_count = J;
  pop.clusters.resize(J);

  // Pass 1: household counts. A cluster with zero households in every size
  // class is redrawn so the size measure stays positive.
  std::vector<std::array<std::uint32_t, 3>> counts(J);
  for (std::uint32_t j = 0; j < J; ++j) {
    for (;;) {
      std::array<std::uint32_t, 3> h;
      for (int q = 0; q < 3; ++q)
        h[q] = static_cast<std::uint32_t>(
            stream.negative_binomial(spec.house_mean, spec.house_var));
      if (h[0] + h[1] + h[2] > 0) {
        counts[j] = h;
        break;
      }
    }
  }

  // Standardize log household totals across clusters (sample sd).
  std::vector<double> log_h(J);
  for (std::uint32_t j = 0; j < J; ++j)
    log_h[j] = std::log(static_cast<double>(counts[j][0] + counts[j][1] + counts[j][2]));
  double mean_lh = kernels::sum(log_h.data(), J) / J;
  double ss = 0.0;
  for (double v : log_h) ss += (v - mean_lh) * (v - mean_lh);
  double sd_lh = J > 1 ? std::sqrt(ss / (J - 1)) : 1.0;
  if (sd_lh == 0.0) sd_lh = 1.0;

  // Pass 2: lay out households and individuals, draw covariates.
  std::uint32_t member = 0, household = 0;
  for (std::uint32_t j = 0; j < J; ++j) {
    Cluster& cl = pop.clusters[j];
    cl.households_by_size = counts[j];
    cl.size_measure =
        static_cast<double>(counts[j][0] + counts[j][1] + counts[j][2]);
    cl.member_begin = member;
    cl.household_begin = household;

    CovariateContext ctx;
    ctx.z = (log_h[j] - mean_lh) / sd_lh;
    ctx.u = stream.normal(0.0, 0.2);

    for (int qi = 0; qi < 3; ++qi) {
      const int q = qi + 1;
      const double mu_c = continuous_mean(ctx, q);
      const double p_b = kernels::expit1(binary_logit(ctx, q));
      for (std::uint32_t h = 0; h < counts[j][qi]; ++h) {
        pop.household_member_begin.push_back(member);
        pop.household_size.push_back(static_cast<std::uint8_t>(q));
        ++household;
        for (int m = 0; m < q; ++m) {
          pop.x1.push_back(mu_c + stream.uniform());
          pop.x2.push_back(mu_c + stream.uniform());
          pop.x3.push_back(stream.bernoulli(p_b) ? 1.0 : 0.0);
          pop.x4.push_back(stream.bernoulli(p_b) ? 1.0 : 0.0);
          pop.member_household_size.push_back(static_cast<std::uint8_t>(q));
          pop.cluster_of.push_back(j);
          ++member;
        }
      }
    }
    cl.member_end = member;
    cl.household_end = household;
  }
  pop.size = member;

  // Evaluate and freeze the true surfaces.
  pop.true_mean.resize(pop.size);
  pop.true_sel_prob.resize(pop.size);
  std::vector<double> logit_sel(pop.size);
  for (std::size_t i = 0; i < pop.size; ++i) {
    const std::array<double, 4> x = pop.covariate_row(i);
    pop.true_mean[i] = spec.outcome_mean.eval(x.data());
    logit_sel[i] = spec.selection_logit.eval(x.data()) - spec.selection_logit.intercept;
  }
  double intercept = spec.selection_logit.intercept;
  if (spec.target_sample_b > 0.0)
    intercept = solve_selection_intercept(logit_sel, spec.target_sample_b);
  pop.spec.selection_logit.intercept = intercept;
  for (std::size_t i = 0; i < pop.size; ++i) logit_sel[i] += intercept;
  kernels::expit(logit_sel.data(), pop.true_sel_prob.data(), pop.size);
  return pop;
}

OutcomeDraw draw_outcomes(const FinitePopulation& pop, std::uint64_t seed) {
  rng::RandomStream stream(rng::derive_seed(seed, rng::kTagOutcomes));
  OutcomeDraw draw;
  draw.y.resize(pop.size);
  const double sd = pop.spec.y_sd;
  if (sd == 0.0) {
    draw.y = pop.true_mean;
  } else {
    for (std::size_t i = 0; i < pop.size; ++i)
      draw.y[i] = pop.true_mean[i] + sd * stream.normal();
  }
  draw.ybar = kernels::sum(draw.y.data(), draw.y.size()) / static_cast<double>(pop.size);
  return draw;
}

double solve_selection_intercept(const std::vector<double>& eta, double target) {
  if (target <= 0.0 || target >= static_cast<double>(eta.size()))
    throw std::invalid_argument("solve_selection_intercept: target outside (0, n)");
  std::vector<double> logits(eta.size()), probs(eta.size());
  auto total = [&](double a) {
    for (std::size_t i = 0; i < eta.size(); ++i) logits[i] = a + eta[i];
    kernels::expit(logits.data(), probs.data(), probs.size());
    return kernels::sum(probs.data(), probs.size());
  };
  double lo = -40.0, hi = 40.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void write_population_csv(const FinitePopulation& pop, std::ostream& os) {
  os << "cluster_id,q,x1,x2,x3,x4,m0,pib0\n";
  char buf[256];
  for (std::size_t i = 0; i < pop.size; ++i) {
    std::snprintf(buf, sizeof(buf), "%u,%d,%.17g,%.17g,%g,%g,%.17g,%.17g\n",
                  pop.cluster_of[i], static_cast<int>(pop.member_household_size[i]),
                  pop.x1[i], pop.x2[i], pop.x3[i], pop.x4[i], pop.true_mean[i],
                  pop.true_sel_prob[i]);
    os << buf;
  }
}

FinitePopulation read_population_csv(std::istream& is, ScenarioSpec spec) {
  FinitePopulation pop;
  pop.spec = spec;
  std::string line;
  if (!std::getline(is, line) || line.rfind("cluster_id,", 0) != 0)
    throw std::runtime_error("population csv: missing header");
  std::int64_t current_cluster = -1;
  int pending_members = 0;  // members left in the household being read
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    auto next = [&]() {
      if (!std::getline(row, field, ','))
        throw std::runtime_error("population csv: short row");
      return field;
    };
    const std::uint32_t cl = static_cast<std::uint32_t>(std::stoul(next()));
    const int q = std::stoi(next());
    if (q < 1 || q > 3) throw std::runtime_error("population csv: q outside 1..3");
    const double v1 = std::stod(next()), v2 = std::stod(next()),
                 v3 = std::stod(next()), v4 = std::stod(next()),
                 m0 = std::stod(next()), pib0 = std::stod(next());

    if (static_cast<std::int64_t>(cl) != current_cluster) {
      if (pending_members != 0)
        throw std::runtime_error("population csv: household split across clusters");
      if (static_cast<std::int64_t>(cl) != current_cluster + 1)
        throw std::runtime_error("population csv: cluster ids must be contiguous");
      current_cluster = cl;
      Cluster c;
      c.member_begin = static_cast<std::uint32_t>(pop.x1.size());
      c.household_begin = static_cast<std::uint32_t>(pop.household_size.size());
      pop.clusters.push_back(c);
    }
    if (pending_members == 0) {
      pop.household_member_begin.push_back(static_cast<std::uint32_t>(pop.x1.size()));
      pop.household_size.push_back(static_cast<std::uint8_t>(q));
      pop.clusters.back().households_by_size[q - 1]++;
      pending_members = q;
    } else if (q != pop.household_size.back()) {
      throw std::runtime_error("population csv: household members disagree on q");
    }
    --pending_members;
    pop.x1.push_back(v1);
    pop.x2.push_back(v2);
    pop.x3.push_back(v3);
    pop.x4.push_back(v4);
    pop.true_mean.push_back(m0);
    pop.true_sel_prob.push_back(pib0);
    pop.member_household_size.push_back(static_cast<std::uint8_t>(q));
    pop.cluster_of.push_back(cl);
    pop.clusters.back().member_end = static_cast<std::uint32_t>(pop.x1.size());
    pop.clusters.back().household_end = static_cast<std::uint32_t>(pop.household_size.size());
  }
  if (pending_members != 0) throw std::runtime_error("population csv: truncated household");
  for (auto& c : pop.clusters)
    c.size_measure = static_cast<double>(c.households_by_size[0] + c.households_by_size[1] +
                                         c.households_by_size[2]);
  pop.cluster_count = static_cast<std::uint32_t>(pop.clusters.size());
  pop.size = pop.x1.size();
  return pop;
}

void write_population_csv_file(const FinitePopulation& pop, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_population_csv(pop, os);
}

FinitePopulation read_population_csv_file(const std::string& path, ScenarioSpec spec) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_population_csv(is, std::move(spec));
}

}  // namespace svydr::popgen
