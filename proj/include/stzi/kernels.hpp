#pragma once

// Data-parallel inner loops over Monte Carlo samples. Each kernel has a
// scalar reference implementation and, on x86-64 hosts with AVX2+FMA, a
// vectorized variant. The active table is chosen once at startup; set
// STZI_SIMD=scalar to force the reference path.

#include <cstddef>
#include <span>

namespace stzi::kernels {

struct MeanVar {
  double mean;
  double variance;  // sample variance, divisor n-1
};

struct KernelTable {
  const char* name;
  void (*exp)(const double* x, double* out, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // log(mean(exp(x)))
  double (*logMeanExp)(const double* x, std::size_t n);
  MeanVar (*meanVar)(const double* x, std::size_t n);
  // mean(1 / (1 + exp(-x)))
  double (*logisticMean)(const double* x, std::size_t n);
};

const KernelTable& scalarTable();
// nullptr when the host cannot run it or it was not compiled in.
const KernelTable* avx2Table();
const KernelTable& active();

inline double logMeanExp(std::span<const double> x) { return active().logMeanExp(x.data(), x.size()); }
inline MeanVar meanVar(std::span<const double> x) { return active().meanVar(x.data(), x.size()); }
inline double logisticMean(std::span<const double> x) { return active().logisticMean(x.data(), x.size()); }
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace stzi::kernels
