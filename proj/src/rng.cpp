#include "svydr/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace svydr::rng {

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RandomStream::below: n must be > 0");
  unsigned __int128 m =
      static_cast<unsigned __int128>(engine_.next()) * static_cast<unsigned __int128>(n);
  std::uint64_t lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    std::uint64_t threshold = (0 - n) % n;
    while (lo < threshold) {
      m = static_cast<unsigned __int128>(engine_.next()) * static_cast<unsigned __int128>(n);
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RandomStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform_pos();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double RandomStream::gamma(double shape, double scale) {
  if (shape <= 0.0 || scale <= 0.0)
    throw std::invalid_argument("RandomStream::gamma: shape and scale must be > 0");
  if (shape < 1.0) {
    // Boost: G(a) = G(a+1) * U^{1/a}.
    const double u = uniform_pos();
    return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
  }
}

std::uint64_t RandomStream::poisson(double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("RandomStream::poisson: lambda < 0");
  std::uint64_t total = 0;
  // Poisson(a + b) = Poisson(a) + Poisson(b); chunk to keep exp(-chunk) sane.
  while (lambda > 30.0) {
    total += poisson(30.0);
    lambda -= 30.0;
  }
  const double limit = std::exp(-lambda);
  double prod = 1.0;
  std::uint64_t k = 0;
  do {
    ++k;
    prod *= uniform_pos();
  } while (prod > limit);
  return total + k - 1;
}

std::uint64_t RandomStream::negative_binomial(double mean, double variance) {
  if (mean <= 0.0)
    throw std::invalid_argument("negative_binomial: mean must be > 0");
  if (variance < mean)
    throw std::invalid_argument("negative_binomial: variance must be >= mean");
  if (variance == mean) return poisson(mean);
  const double r = mean * mean / (variance - mean);
  const double scale = (variance - mean) / mean;
  return poisson(gamma(r, scale));
}

std::vector<std::uint32_t> RandomStream::sample_without_replacement(std::uint32_t n,
                                                                    std::uint32_t k) {
  if (k > n)
    throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint32_t j = i + static_cast<std::uint32_t>(below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace svydr::rng
