#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "svydr/kernels.hpp"
#include "svydr/population.hpp"

using namespace svydr;

TEST_CASE("scenario presets store the published surfaces") {
  const auto s1 = popgen::scenario_preset(1);
  const double zero[4] = {0, 0, 0, 0};
  CHECK(s1.outcome_mean.eval(zero) == 0.0);
  CHECK(s1.selection_logit.eval(zero) == -6.2);
  CHECK(popgen::scenario_preset(2).selection_logit.eval(zero) == -7.5);

  const auto s3 = popgen::scenario_preset(3);
  CHECK(s3.selection_logit.eval(zero) == -6.4);
  const double x[4] = {1.0, 2.0, 1.0, 0.0};
  // 0.5*1 + 0.5*2 + 2*1 + 0 + 2*1*1 + 2^2
  CHECK(s3.outcome_mean.eval(x) == doctest::Approx(0.5 + 1.0 + 2.0 + 2.0 + 4.0));
  // -6.4 + 0.25 + 1.0 + 0.5 + 0 + 1*1 + 0.5*4
  CHECK(s3.selection_logit.eval(x) == doctest::Approx(-6.4 + 0.25 + 1.0 + 0.5 + 1.0 + 2.0));
  CHECK(popgen::scenario_preset(4).clusters_sampled == 50);
  CHECK(popgen::scenario_preset(5).houses_per_cluster == 5);
  CHECK_THROWS(popgen::scenario_preset(7));
}

TEST_CASE("generated population has the advertised scale") {
  auto spec = popgen::scenario_preset(1);
  const auto pop = popgen::generate_population(spec, 1);
  CHECK(pop.cluster_count == 1000);

  // expected individuals per cluster is 600 (tolerance 3%)
  const double mean_size = static_cast<double>(pop.size) / pop.cluster_count;
  CHECK(mean_size == doctest::Approx(600.0).epsilon(0.03));

  // household count moments over 3000 draws: mean 100 +- 5, var 400 +- 60
  double sum = 0.0, sumsq = 0.0;
  int n = 0;
  for (const auto& c : pop.clusters)
    for (int q = 0; q < 3; ++q) {
      sum += c.households_by_size[q];
      sumsq += static_cast<double>(c.households_by_size[q]) * c.households_by_size[q];
      ++n;
    }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::fabs(mean - 100.0) < 5.0);
  CHECK(std::fabs(var - 400.0) < 60.0);

  // member count identity per cluster
  for (const auto& c : pop.clusters) {
    const auto h = c.households_by_size;
    CHECK(c.member_end - c.member_begin == h[0] + 2 * h[1] + 3 * h[2]);
    CHECK(c.size_measure == doctest::Approx(h[0] + h[1] + h[2]));
    CHECK(c.size_measure > 0.0);
  }
}

TEST_CASE("stored surfaces match recomputation from covariates") {
  auto spec = popgen::scenario_preset(3);
  spec.clusters_total = 60;
  spec.clusters_sampled = 10;
  const auto pop = popgen::generate_population(spec, 9);
  for (std::size_t i = 0; i < pop.size; i += 7) {
    const auto x = pop.covariate_row(i);
    CHECK(pop.true_mean[i] ==
          doctest::Approx(pop.spec.outcome_mean.eval(x.data())).epsilon(1e-14));
    const double pib = kernels::expit1(pop.spec.selection_logit.eval(x.data()));
    CHECK(std::fabs(pop.true_sel_prob[i] - pib) < 1e-12);
    CHECK(pop.true_sel_prob[i] > 0.0);
    CHECK(pop.true_sel_prob[i] < 1.0);
    CHECK((pop.x3[i] == 0.0 || pop.x3[i] == 1.0));
    CHECK((pop.x4[i] == 0.0 || pop.x4[i] == 1.0));
  }
}

TEST_CASE("degenerate negative binomial (var == mean) still generates") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 50;
  spec.clusters_sampled = 10;
  spec.house_mean = 40.0;
  spec.house_var = 40.0;  // Poisson limit
  const auto pop = popgen::generate_population(spec, 3);
  CHECK(pop.cluster_count == 50);
  double sum = 0.0, sumsq = 0.0;
  for (const auto& c : pop.clusters)
    for (int q = 0; q < 3; ++q) {
      sum += c.households_by_size[q];
      sumsq += static_cast<double>(c.households_by_size[q]) * c.households_by_size[q];
    }
  const double mean = sum / 150.0, var = sumsq / 150.0 - mean * mean;
  CHECK(mean == doctest::Approx(40.0).epsilon(0.1));
  CHECK(var == doctest::Approx(40.0).epsilon(0.35));
}

TEST_CASE("outcomes: zero-variance hook, determinism, and the estimand") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 80;
  spec.clusters_sampled = 20;

  SUBCASE("variance forced to zero returns the true surface") {
    spec.y_sd = 0.0;
    const auto pop = popgen::generate_population(spec, 5);
    const auto draw = popgen::draw_outcomes(pop, 123);
    for (std::size_t i = 0; i < pop.size; i += 11) CHECK(draw.y[i] == pop.true_mean[i]);
    CHECK(draw.ybar == doctest::Approx(pop.mean_true_mean()).epsilon(1e-12));
  }

  SUBCASE("same seed gives identical outcomes; fresh seeds differ") {
    const auto pop = popgen::generate_population(spec, 5);
    const auto d1 = popgen::draw_outcomes(pop, 77);
    const auto d2 = popgen::draw_outcomes(pop, 77);
    CHECK(d1.y == d2.y);
    const auto d3 = popgen::draw_outcomes(pop, 78);
    CHECK(d1.y != d3.y);
  }

  SUBCASE("population is untouched by outcome draws") {
    const auto pop = popgen::generate_population(spec, 5);
    const auto x1_before = pop.x1;
    const auto m0_before = pop.true_mean;
    (void)popgen::draw_outcomes(pop, 1);
    (void)popgen::draw_outcomes(pop, 2);
    CHECK(pop.x1 == x1_before);
    CHECK(pop.true_mean == m0_before);
  }

  SUBCASE("mean of ybar over replications tracks the mean of m0") {
    const auto pop = popgen::generate_population(spec, 5);
    const int reps = 50;
    std::vector<double> ybars(reps);
    for (int r = 0; r < reps; ++r) ybars[r] = popgen::draw_outcomes(pop, 1000 + r).ybar;
    double mean = 0.0;
    for (double v : ybars) mean += v;
    mean /= reps;
    double sd = 0.0;
    for (double v : ybars) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / (reps - 1));
    const double mc_se = sd / std::sqrt(static_cast<double>(reps));
    CHECK(std::fabs(mean - pop.mean_true_mean()) < 4.0 * mc_se + 1e-12);
  }
}

TEST_CASE("population csv round trip") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 20;
  spec.clusters_sampled = 5;
  const auto pop = popgen::generate_population(spec, 8);
  std::stringstream ss;
  popgen::write_population_csv(pop, ss);
  const auto loaded = popgen::read_population_csv(ss, spec);
  REQUIRE(loaded.size == pop.size);
  REQUIRE(loaded.cluster_count == pop.cluster_count);
  CHECK(loaded.household_size == pop.household_size);
  CHECK(loaded.household_member_begin == pop.household_member_begin);
  for (std::size_t i = 0; i < pop.size; ++i) {
    CHECK(loaded.x1[i] == pop.x1[i]);
    CHECK(loaded.true_sel_prob[i] == pop.true_sel_prob[i]);
    CHECK(loaded.cluster_of[i] == pop.cluster_of[i]);
  }
  for (std::uint32_t j = 0; j < pop.cluster_count; ++j)
    CHECK(loaded.clusters[j].size_measure == pop.clusters[j].size_measure);
}

TEST_CASE("selection intercept solver hits the target size") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 100;
  spec.clusters_sampled = 20;
  spec.target_sample_b = 900.0;
  const auto pop = popgen::generate_population(spec, 4);
  const double total = kernels::sum(pop.true_sel_prob.data(), pop.size);
  CHECK(total == doctest::Approx(900.0).epsilon(1e-6));
}

TEST_CASE("invalid scenarios are rejected") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_sampled = spec.clusters_total;
  CHECK_THROWS(spec.validate());
  spec = popgen::scenario_preset(1);
  spec.delta = 1.0;
  CHECK_THROWS(spec.validate());
  spec = popgen::scenario_preset(1);
  spec.house_var = 50.0;  // below the mean
  CHECK_THROWS(spec.validate());
  spec = popgen::scenario_preset(1);
  spec.outcome_mean.quad.push_back({0, 9, 1.0});
  CHECK_THROWS(spec.validate());
}
