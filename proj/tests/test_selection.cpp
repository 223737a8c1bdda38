#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "svydr/kernels.hpp"
#include "svydr/population.hpp"
#include "svydr/rng.hpp"
#include "svydr/selection.hpp"

using namespace svydr;

TEST_CASE("degenerate selection probability of one selects everyone") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 10;
  spec.clusters_sampled = 2;
  auto pop = popgen::generate_population(spec, 1);
  std::fill(pop.true_sel_prob.begin(), pop.true_sel_prob.end(), 1.0 - 1e-15);
  rng::RandomStream s(2);
  const auto rb = selection::draw_sample_b(pop, s);
  for (auto v : rb) CHECK(v == 1);
}

TEST_CASE("realized sample-B size concentrates on the sum of probabilities") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 120;
  spec.clusters_sampled = 20;
  const auto pop = popgen::generate_population(spec, 3);
  const double expected = kernels::sum(pop.true_sel_prob.data(), pop.size);
  double var = 0.0;
  for (double p : pop.true_sel_prob) var += p * (1.0 - p);
  const double sigma = std::sqrt(var);

  rng::RandomStream s(4);
  for (int rep = 0; rep < 5; ++rep) {
    const auto rb = selection::draw_sample_b(pop, s);
    double size = 0.0;
    for (auto v : rb) size += v;
    CHECK(std::fabs(size - expected) < 4.0 * sigma);
  }
}

TEST_CASE("selection rates match the true surface within covariate bins") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 30;
  spec.clusters_sampled = 5;
  // raise the base rate so bins have counts
  spec.selection_logit.intercept = -1.0;
  const auto pop = popgen::generate_population(spec, 5);

  const int reps = 200;
  // bins on (x3, x4)
  double hits[4] = {0, 0, 0, 0};
  double mass[4] = {0, 0, 0, 0};
  rng::RandomStream s(6);
  for (int r = 0; r < reps; ++r) {
    const auto rb = selection::draw_sample_b(pop, s);
    for (std::size_t i = 0; i < pop.size; ++i) {
      const int bin = static_cast<int>(pop.x3[i]) * 2 + static_cast<int>(pop.x4[i]);
      hits[bin] += rb[i];
    }
  }
  double expected[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < pop.size; ++i) {
    const int bin = static_cast<int>(pop.x3[i]) * 2 + static_cast<int>(pop.x4[i]);
    expected[bin] += pop.true_sel_prob[i];
    mass[bin] += pop.true_sel_prob[i] * (1.0 - pop.true_sel_prob[i]);
  }
  for (int b = 0; b < 4; ++b) {
    const double sigma = std::sqrt(reps * mass[b]);
    CHECK(std::fabs(hits[b] - reps * expected[b]) < 3.0 * sigma);
  }
}

TEST_CASE("selection is independent of the outcome draw order") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 20;
  spec.clusters_sampled = 4;
  const auto pop = popgen::generate_population(spec, 7);
  rng::RandomStream s1(9), s2(9);
  const auto rb1 = selection::draw_sample_b(pop, s1);
  (void)popgen::draw_outcomes(pop, 1234);
  const auto rb2 = selection::draw_sample_b(pop, s2);
  CHECK(rb1 == rb2);
}
