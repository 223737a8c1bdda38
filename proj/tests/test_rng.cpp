#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "svydr/rng.hpp"

using namespace svydr;

TEST_CASE("streams are deterministic given the seed") {
  rng::RandomStream a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("derive_seed separates tags and replications") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t tag = 0; tag < 1000; ++tag)
    seen.insert(rng::derive_seed(7, tag));
  CHECK(seen.size() == 1000);
  CHECK(rng::derive_seed(7, 1) != rng::derive_seed(8, 1));
}

TEST_CASE("uniform and below stay in range") {
  rng::RandomStream s(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = s.below(7);
    CHECK(k < 7);
  }
}

TEST_CASE("normal moments") {
  rng::RandomStream s(11);
  const int n = 200000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    mean += z;
    m2 += z * z;
  }
  mean /= n;
  m2 /= n;
  // 3 sigma on the mean: 3/sqrt(n)
  CHECK(std::fabs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson and gamma moments") {
  rng::RandomStream s(17);
  const int n = 100000;
  double pm = 0.0, pv = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(s.poisson(100.0));
    pm += x;
    pv += x * x;
  }
  pm /= n;
  pv = pv / n - pm * pm;
  CHECK(pm == doctest::Approx(100.0).epsilon(0.01));
  CHECK(pv == doctest::Approx(100.0).epsilon(0.05));

  double gm = 0.0;
  for (int i = 0; i < n; ++i) gm += s.gamma(33.0, 2.0);
  CHECK(gm / n == doctest::Approx(66.0).epsilon(0.01));
}

TEST_CASE("negative binomial hits the requested mean and variance") {
  rng::RandomStream s(23);
  const int n = 200000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(s.negative_binomial(100.0, 400.0));
    m += x;
    m2 += x * x;
  }
  m /= n;
  const double var = m2 / n - m * m;
  CHECK(m == doctest::Approx(100.0).epsilon(0.01));
  CHECK(var == doctest::Approx(400.0).epsilon(0.05));
}

TEST_CASE("negative binomial degenerates to poisson when var == mean") {
  rng::RandomStream s(29);
  const int n = 100000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(s.negative_binomial(50.0, 50.0));
    m += x;
    m2 += x * x;
  }
  m /= n;
  const double var = m2 / n - m * m;
  CHECK(m == doctest::Approx(50.0).epsilon(0.015));
  CHECK(var == doctest::Approx(50.0).epsilon(0.06));
  CHECK_THROWS(s.negative_binomial(50.0, 40.0));
}

TEST_CASE("sample_without_replacement is uniform over elements") {
  rng::RandomStream s(31);
  std::vector<int> hits(10, 0);
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto pick = s.sample_without_replacement(10, 3);
    std::set<std::uint32_t> uniq(pick.begin(), pick.end());
    CHECK(uniq.size() == 3);
    for (auto i : pick) hits[i]++;
  }
  const double expected = reps * 0.3;
  const double sigma = std::sqrt(reps * 0.3 * 0.7);
  for (int i = 0; i < 10; ++i) CHECK(std::fabs(hits[i] - expected) < 4.0 * sigma);
}
