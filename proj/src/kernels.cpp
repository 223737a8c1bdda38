#include "svydr/kernels.hpp"

#include <cmath>

namespace svydr::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double ratio_err_sq(const double* num, const double* den, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = num[i] / den[i] - 1.0;
    acc += r * r;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void expit(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    if (v >= 0.0) {
      const double t = std::exp(-v);
      out[i] = 1.0 / (1.0 + t);
    } else {
      const double t = std::exp(v);
      out[i] = t / (1.0 + t);
    }
  }
}

}  // namespace scalar

namespace {

Backend g_backend = []() {
#ifdef __x86_64__
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::avx2;
#endif
  return Backend::scalar;
}();

}  // namespace

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
#ifdef __x86_64__
  if (b == Backend::avx2 && !avx2_supported()) b = Backend::scalar;
#else
  b = Backend::scalar;
#endif
  g_backend = b;
}

bool avx2_supported() {
#ifdef __x86_64__
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

#ifdef __x86_64__
#define SVYDR_DISPATCH(fn, ...) \
  return g_backend == Backend::avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#define SVYDR_DISPATCH_VOID(fn, ...)                  \
  if (g_backend == Backend::avx2)                     \
    avx2::fn(__VA_ARGS__);                            \
  else                                                \
    scalar::fn(__VA_ARGS__)
#else
#define SVYDR_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#define SVYDR_DISPATCH_VOID(fn, ...) scalar::fn(__VA_ARGS__)
#endif

double dot(const double* a, const double* b, std::size_t n) {
  SVYDR_DISPATCH(dot, a, b, n);
}
double sum(const double* a, std::size_t n) { SVYDR_DISPATCH(sum, a, n); }
double sum_sq_diff(const double* a, const double* b, std::size_t n) {
  SVYDR_DISPATCH(sum_sq_diff, a, b, n);
}
double ratio_err_sq(const double* num, const double* den, std::size_t n) {
  SVYDR_DISPATCH(ratio_err_sq, num, den, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  SVYDR_DISPATCH_VOID(axpy, alpha, x, y, n);
}
void expit(const double* x, double* out, std::size_t n) {
  SVYDR_DISPATCH_VOID(expit, x, out, n);
}

double neumaier_sum(const double* a, std::size_t n) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s + a[i];
    if (std::fabs(s) >= std::fabs(a[i]))
      c += (s - t) + a[i];
    else
      c += (a[i] - t) + s;
    s = t;
  }
  return s + c;
}

}  // namespace svydr::kernels
