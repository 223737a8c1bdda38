#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "svydr/kernels.hpp"
#include "svydr/rng.hpp"

using namespace svydr;

namespace {

std::vector<double> random_vector(std::size_t n, rng::RandomStream& stream, double lo,
                                  double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * stream.uniform();
  return v;
}

}  // namespace

TEST_CASE("scalar reference values") {
  const double a[] = {1.0, 2.0, 3.0, 4.0, 5.0};
  const double b[] = {2.0, -1.0, 0.5, 0.0, 1.0};
  CHECK(kernels::scalar::dot(a, b, 5) == doctest::Approx(6.5));
  CHECK(kernels::scalar::sum(a, 5) == doctest::Approx(15.0));
  CHECK(kernels::scalar::sum_sq_diff(a, b, 5) == doctest::Approx(1 + 9 + 6.25 + 16 + 16));
  double y[] = {1.0, 1.0, 1.0, 1.0, 1.0};
  kernels::scalar::axpy(2.0, a, y, 5);
  CHECK(y[4] == doctest::Approx(11.0));
  const double num[] = {1.0, 2.0};
  const double den[] = {2.0, 2.0};
  CHECK(kernels::scalar::ratio_err_sq(num, den, 2) == doctest::Approx(0.25));
}

TEST_CASE("scalar expit matches closed form") {
  const double xs[] = {-40.0, -5.0, -1.0, -1e-12, 0.0, 1e-12, 1.0, 5.0, 40.0};
  double out[9];
  kernels::scalar::expit(xs, out, 9);
  for (int i = 0; i < 9; ++i)
    CHECK(out[i] == doctest::Approx(1.0 / (1.0 + std::exp(-xs[i]))).epsilon(1e-14));
  CHECK(out[4] == 0.5);
}

#ifdef __x86_64__
TEST_CASE("avx2 backend equivalence on random inputs") {
  if (!kernels::avx2_supported()) return;
  rng::RandomStream stream(987654321);
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 1001u, 100003u}) {
    const auto a = random_vector(n, stream, -3.0, 3.0);
    const auto b = random_vector(n, stream, 0.5, 4.0);
    CHECK(kernels::avx2::dot(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::dot(a.data(), b.data(), n)).epsilon(1e-11));
    CHECK(kernels::avx2::sum(a.data(), n) ==
          doctest::Approx(kernels::scalar::sum(a.data(), n)).epsilon(1e-11));
    CHECK(kernels::avx2::sum_sq_diff(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::sum_sq_diff(a.data(), b.data(), n)).epsilon(1e-11));
    CHECK(kernels::avx2::ratio_err_sq(a.data(), b.data(), n) ==
          doctest::Approx(kernels::scalar::ratio_err_sq(a.data(), b.data(), n)).epsilon(1e-11));

    std::vector<double> y1(n, 0.5), y2(n, 0.5);
    kernels::scalar::axpy(1.7, a.data(), y1.data(), n);
    kernels::avx2::axpy(1.7, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-13));
  }
}

TEST_CASE("avx2 expit equivalence across the full range") {
  if (!kernels::avx2_supported()) return;
  rng::RandomStream stream(13579);
  std::vector<double> xs = random_vector(4096, stream, -30.0, 30.0);
  for (double edge : {-750.0, -710.0, -708.0, -100.0, 0.0, 100.0, 708.0, 750.0})
    xs.push_back(edge);
  std::vector<double> got(xs.size()), want(xs.size());
  kernels::avx2::expit(xs.data(), got.data(), xs.size());
  kernels::scalar::expit(xs.data(), want.data(), xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(5e-14));
    CHECK(got[i] >= 0.0);
    CHECK(got[i] <= 1.0);
  }
}

TEST_CASE("integer-valued sums are exact in both backends") {
  if (!kernels::avx2_supported()) return;
  rng::RandomStream stream(24680);
  std::vector<double> v(4097);
  for (auto& x : v) x = static_cast<double>(stream.below(1000)) - 500.0;
  CHECK(kernels::avx2::sum(v.data(), v.size()) == kernels::scalar::sum(v.data(), v.size()));
}
#endif

TEST_CASE("dispatch honors forced backend") {
  const double a[] = {1.0, 2.0, 3.0};
  kernels::set_backend(kernels::Backend::scalar);
  CHECK(kernels::active_backend() == kernels::Backend::scalar);
  CHECK(kernels::sum(a, 3) == 6.0);
  kernels::set_backend(kernels::Backend::avx2);  // no-op when unsupported
  CHECK(kernels::sum(a, 3) == 6.0);
}

TEST_CASE("neumaier sum recovers cancelled digits") {
  std::vector<double> v = {1e16, 3.14159, -1e16};
  CHECK(kernels::neumaier_sum(v.data(), v.size()) == doctest::Approx(3.14159).epsilon(1e-12));
}
