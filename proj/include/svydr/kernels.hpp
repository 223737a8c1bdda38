// Numeric inner-loop primitives. Scalar reference implementations live in
// kernels::scalar; the top-level entry points dispatch at runtime to an AVX2
// backend when the CPU supports it. The two backends are equivalence-tested;
// results may differ only by floating-point reassociation.
#pragma once

#include <cstddef>
#include <span>

namespace svydr::kernels {

enum class Backend { scalar, avx2 };

// Backend selected at startup (AVX2 when available). Tests may force one.
Backend active_backend();
void set_backend(Backend b);
bool avx2_supported();

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
// sum over i of (num[i]/den[i] - 1)^2
double ratio_err_sq(const double* num, const double* den, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
// out[i] = 1 / (1 + exp(-x[i]))
void expit(const double* x, double* out, std::size_t n);
}  // namespace scalar

#ifdef __x86_64__
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
double ratio_err_sq(const double* num, const double* den, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void expit(const double* x, double* out, std::size_t n);
}  // namespace avx2
#endif

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
double ratio_err_sq(const double* num, const double* den, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void expit(const double* x, double* out, std::size_t n);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return dot(a.data(), b.data(), a.size());
}
inline double sum(std::span<const double> a) { return sum(a.data(), a.size()); }
inline double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  return sum_sq_diff(a.data(), b.data(), a.size());
}
inline double ratio_err_sq(std::span<const double> num, std::span<const double> den) {
  return ratio_err_sq(num.data(), den.data(), num.size());
}
inline void expit(std::span<const double> x, std::span<double> out) {
  expit(x.data(), out.data(), x.size());
}

// Neumaier compensated sum; used where identity checks need residuals far
// below the naive rounding of the summands. Always scalar.
double neumaier_sum(const double* a, std::size_t n);
inline double neumaier_sum(std::span<const double> a) {
  return neumaier_sum(a.data(), a.size());
}

inline double expit1(double x) {
  double out;
  expit(&x, &out, 1);
  return out;
}

}  // namespace svydr::kernels
