#include <algorithm>
#include <cmath>
#include <limits>

#include "stzi/kernels.hpp"

namespace stzi::kernels {
namespace {

void expScalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

double sumScalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double dotScalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpyScalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double logMeanExpScalar(const double* x, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x, x + n);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s / static_cast<double>(n));
}

MeanVar meanVarScalar(const double* x, std::size_t n) {
  if (n == 0) return {0.0, 0.0};
  const double mean = sumScalar(x, n) / static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    ss += d * d;
  }
  return {mean, ss / static_cast<double>(n - 1)};
}

double logisticMeanScalar(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-std::abs(x[i]));
    s += x[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  return s / static_cast<double>(n);
}

}  // namespace

const KernelTable& scalarTable() {
  static const KernelTable table{"scalar",          expScalar,      sumScalar,
                                 dotScalar,         axpyScalar,     logMeanExpScalar,
                                 meanVarScalar,     logisticMeanScalar};
  return table;
}

}  // namespace stzi::kernels
