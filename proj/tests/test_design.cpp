#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "svydr/design.hpp"
#include "svydr/population.hpp"
#include "svydr/rng.hpp"

using namespace svydr;

namespace {

// Exact Sampford pmf over all C(J,M) subsets:
// p(s) proportional to prod_{j in s} pi_j/(1-pi_j) * sum_{j in s} (1-pi_j).
std::map<std::vector<int>, double> sampford_pmf(const std::vector<double>& pi, int M) {
  const int J = static_cast<int>(pi.size());
  std::map<std::vector<int>, double> pmf;
  std::vector<int> subset;
  double total = 0.0;
  auto recurse = [&](auto&& self, int start) -> void {
    if (static_cast<int>(subset.size()) == M) {
      double prod = 1.0, slack = 0.0;
      for (int j : subset) {
        prod *= pi[j] / (1.0 - pi[j]);
        slack += 1.0 - pi[j];
      }
      pmf[subset] = prod * slack;
      total += prod * slack;
      return;
    }
    for (int j = start; j < J; ++j) {
      subset.push_back(j);
      self(self, j + 1);
      subset.pop_back();
    }
  };
  recurse(recurse, 0);
  for (auto& [s, w] : pmf) w /= total;
  return pmf;
}

}  // namespace

TEST_CASE("cluster inclusion probabilities") {
  SUBCASE("equal measures give the uniform rate") {
    std::vector<double> h(10, 3.0);
    const auto pi = design::cluster_inclusion_probs(h, 5);
    for (double p : pi) CHECK(p == doctest::Approx(0.5));
  }
  SUBCASE("clamp and renormalize keeps the total at M") {
    std::vector<double> h = {1.0, 1.0, 2.0};
    const auto pi = design::cluster_inclusion_probs(h, 2);
    CHECK(pi[2] == doctest::Approx(1.0 - 1e-9));
    CHECK(pi[0] == doctest::Approx(pi[1]));
    CHECK(pi[0] + pi[1] + pi[2] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(pi[0] > 0.5);  // absorbed the clamped mass
  }
  SUBCASE("scenario-scale normalization") {
    rng::RandomStream s(3);
    std::vector<double> h(1000);
    for (auto& v : h) v = 250.0 + s.uniform() * 100.0;
    const auto pi = design::cluster_inclusion_probs(h, 150);
    double total = 0.0;
    for (double p : pi) total += p;
    CHECK(std::fabs(total - 150.0) < 1e-9);
  }
  SUBCASE("preconditions") {
    std::vector<double> h = {1.0, 2.0};
    CHECK_THROWS(design::cluster_inclusion_probs(h, 2));
    std::vector<double> bad = {1.0, 0.0, 2.0};
    CHECK_THROWS(design::cluster_inclusion_probs(bad, 1));
  }
}

TEST_CASE("sampford rejects invalid target probabilities") {
  design::ClusterDesign d;
  d.draw_count = 2;
  d.target_pi = {1.0, 0.5, 0.5};
  rng::RandomStream s(1);
  CHECK_THROWS(design::sampford_draw(d, s));
}

TEST_CASE("sampford symmetric fixture: equal inclusion frequencies") {
  design::ClusterDesign d;
  d.draw_count = 2;
  d.target_pi = {0.5, 0.5, 0.5, 0.5};
  rng::RandomStream s(7);
  const int reps = 20000;
  std::vector<int> hits(4, 0);
  for (int r = 0; r < reps; ++r) {
    const auto rc = design::sampford_draw(d, s);
    int count = 0;
    for (int j = 0; j < 4; ++j) {
      hits[j] += rc[j];
      count += rc[j];
    }
    CHECK(count == 2);
  }
  const double sigma = std::sqrt(reps * 0.5 * 0.5);
  for (int j = 0; j < 4; ++j) CHECK(std::fabs(hits[j] - reps * 0.5) < 3.0 * sigma);
}

TEST_CASE("sampford unequal fixture matches the enumerated pmf") {
  const std::vector<double> pi = {0.9, 0.6, 0.5};
  const auto pmf = sampford_pmf(pi, 2);
  // enumeration oracle: weights 6.75, 5.4, 1.35 over {01},{02},{12}
  CHECK(pmf.at({0, 1}) == doctest::Approx(0.5));
  CHECK(pmf.at({0, 2}) == doctest::Approx(0.4));
  CHECK(pmf.at({1, 2}) == doctest::Approx(0.1));
  // first-order inclusion probabilities from the pmf equal the targets
  for (int j = 0; j < 3; ++j) {
    double inc = 0.0;
    for (const auto& [s, p] : pmf)
      if (std::find(s.begin(), s.end(), j) != s.end()) inc += p;
    CHECK(inc == doctest::Approx(pi[j]).epsilon(1e-12));
  }

  design::ClusterDesign d;
  d.draw_count = 2;
  d.target_pi = pi;
  rng::RandomStream s(11);
  const int reps = 20000;
  std::map<std::vector<int>, int> counts;
  std::vector<int> hits(3, 0);
  for (int r = 0; r < reps; ++r) {
    const auto rc = design::sampford_draw(d, s);
    std::vector<int> subset;
    for (int j = 0; j < 3; ++j)
      if (rc[j]) {
        subset.push_back(j);
        hits[j]++;
      }
    counts[subset]++;
  }
  for (const auto& [subset, p] : pmf) {
    const double expected = reps * p;
    const double sigma = std::sqrt(reps * p * (1.0 - p));
    CHECK(std::fabs(counts[subset] - expected) < 3.0 * sigma);
  }
  for (int j = 0; j < 3; ++j) {
    const double sigma = std::sqrt(reps * pi[j] * (1.0 - pi[j]));
    CHECK(std::fabs(hits[j] - reps * pi[j]) < 3.0 * sigma);
  }
}

TEST_CASE("srswor draws fixed-size uniform subsets") {
  rng::RandomStream s(13);
  std::vector<int> hits(6, 0);
  const int reps = 6000;
  for (int r = 0; r < reps; ++r) {
    const auto rc = design::srswor_draw(6, 3, s);
    int count = 0;
    for (int j = 0; j < 6; ++j) {
      hits[j] += rc[j];
      count += rc[j];
    }
    CHECK(count == 3);
  }
  const double sigma = std::sqrt(reps * 0.5 * 0.5);
  for (int j = 0; j < 6; ++j) CHECK(std::fabs(hits[j] - reps * 0.5) < 4.0 * sigma);
}

TEST_CASE("two-stage sample A") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 40;
  spec.clusters_sampled = 8;
  spec.houses_per_cluster = 20;
  const auto pop = popgen::generate_population(spec, 21);
  std::vector<double> h(pop.cluster_count);
  for (std::uint32_t j = 0; j < pop.cluster_count; ++j) h[j] = pop.clusters[j].size_measure;
  const auto pi_c = design::cluster_inclusion_probs(h, 8);
  rng::RandomStream s(17);
  design::ClusterDesign d;
  d.draw_count = 8;
  d.target_pi = pi_c;
  const auto rc = design::sampford_draw(d, s);
  const auto a = design::draw_sample_a(pop, rc, pi_c, 20, s);

  SUBCASE("sample size is exactly M * n_house") {
    CHECK(a.count == 8u * 20u);
    std::uint64_t total = 0;
    for (auto v : a.in_sample) total += v;
    CHECK(total == a.count);
  }

  SUBCASE("inclusion probabilities follow the two-stage formula for everyone") {
    for (std::size_t i = 0; i < pop.size; i += 5) {
      const std::uint32_t j = pop.cluster_of[i];
      const double households = pop.clusters[j].size_measure;
      const double expected =
          pi_c[j] * (20.0 / households) / pop.member_household_size[i];
      CHECK(a.pi_a[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  SUBCASE("sampled members come only from sampled clusters") {
    for (std::size_t i = 0; i < pop.size; ++i)
      if (a.in_sample[i]) CHECK(rc[pop.cluster_of[i]] == 1);
  }

  SUBCASE("a cluster with too few households is rejected by name") {
    CHECK_THROWS_WITH_AS(design::draw_sample_a(pop, rc, pi_c, 100000, s),
                         doctest::Contains("households"), std::invalid_argument);
  }
}

TEST_CASE("hand fixture: q=2 household in a 100-household cluster") {
  // direct formula: (20/100) * (1/2) = 0.1 at pi_c = 1
  const double pi_ac = (20.0 / 100.0) * 0.5;
  CHECK(pi_ac == doctest::Approx(0.1));
}

TEST_CASE("horvitz-thompson population-size identity across draws") {
  auto spec = popgen::scenario_preset(1);
  spec.clusters_total = 60;
  spec.clusters_sampled = 12;
  spec.houses_per_cluster = 10;
  const auto pop = popgen::generate_population(spec, 29);
  std::vector<double> h(pop.cluster_count);
  for (std::uint32_t j = 0; j < pop.cluster_count; ++j) h[j] = pop.clusters[j].size_measure;
  const auto pi_c = design::cluster_inclusion_probs(h, 12);
  design::ClusterDesign d;
  d.draw_count = 12;
  d.target_pi = pi_c;
  rng::RandomStream s(31);
  const int reps = 600;
  std::vector<double> nhat(reps);
  for (int r = 0; r < reps; ++r) {
    const auto rc = design::sampford_draw(d, s);
    const auto a = design::draw_sample_a(pop, rc, pi_c, 10, s);
    double total = 0.0;
    for (std::size_t i = 0; i < pop.size; ++i)
      if (a.in_sample[i]) total += 1.0 / a.pi_a[i];
    nhat[r] = total;
  }
  double mean = 0.0;
  for (double v : nhat) mean += v;
  mean /= reps;
  double sd = 0.0;
  for (double v : nhat) sd += (v - mean) * (v - mean);
  sd = std::sqrt(sd / (reps - 1));
  const double mc_se = sd / std::sqrt(static_cast<double>(reps));
  CHECK(std::fabs(mean - static_cast<double>(pop.size)) < 3.0 * mc_se);
}
