#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "stzi/geometry.hpp"
#include "stzi/rng.hpp"

namespace stzi {

// Which latent effect a precision block prices. The enumerator order is the
// global latent ordering [beta | psi | theta | phi].
enum class LatentLabel { Fixed = 0, Spline = 1, Spatial = 2, SpatioTemporal = 3 };

std::string to_string(LatentLabel label);

// Matérn field with smoothness fixed at 1 (alpha = 2).
struct SpdeParams {
  double range = 1.0;  // degrees
  double sigma = 1.0;  // marginal standard deviation

  double kappa() const;
  // SPDE scaling giving marginal variance sigma^2.
  double tau() const;
};

struct Ar1Params {
  double rho = 0.0;
  double tau = 1.0;  // innovation precision
};

struct PrecisionBlock {
  SparseMatrix matrix;
  int dimension = 0;
  LatentLabel label = LatentLabel::Spatial;
};

PrecisionBlock spdePrecision(const FemMatrices& fem, const SpdeParams& params);
double maternCovariance(double distance, const SpdeParams& params);
PrecisionBlock ar1Precision(int timePoints, const Ar1Params& params);
// Q_time (x) Q_space, time-major ordering.
PrecisionBlock spatioTemporalPrecision(const PrecisionBlock& spatial, const PrecisionBlock& temporal);

// Uniform cubic B-spline basis with L functions over [first, last].
class SplineBasis {
 public:
  SplineBasis(double first, double last, int count);

  int size() const { return count_; }
  double first() const { return first_; }
  double last() const { return last_; }
  // Centres of the L basis functions.
  std::vector<double> knots() const;
  Eigen::VectorXd evaluate(double t) const;
  SparseRowMatrix basisMatrix(std::span<const double> times) const;

 private:
  double first_, last_, spacing_;
  int count_;
};

struct SplineFit {
  SplineBasis basis;
  SparseRowMatrix matrix;  // n x L
};

SplineFit splineBasisBuild(std::span<const double> years, int knotCount);
// One knot per three distinct years, at least 6, never more than the number
// of distinct years (and never below 4).
int defaultKnotCount(int distinctYears);

enum class PcKind { Range, Sd, Precision, Correlation };

// range:       P(r < threshold) = probability
// sd:          P(sigma > threshold) = probability
// precision:   P(tau > threshold) = probability
// correlation: P(rho > threshold) = probability, base model rho = 1
struct QuantileSpec {
  double threshold;
  double probability;
};

class PcPrior {
 public:
  PcPrior(PcKind kind, QuantileSpec spec);
  double logDensity(double value) const;
  double rate() const { return lambda_; }
  PcKind kind() const { return kind_; }
  QuantileSpec spec() const { return spec_; }

 private:
  PcKind kind_;
  QuantileSpec spec_;
  double lambda_;
};

double pcPriorLogDensity(PcKind kind, double value, QuantileSpec spec);

// Log-determinant of a sparse SPD matrix; throws if factorization fails.
double sparseLogDet(const SparseMatrix& q);

// Draws from N(0, Q^{-1}) using one cached sparse Cholesky factor.
class GmrfSampler {
 public:
  explicit GmrfSampler(const SparseMatrix& precision);
  Eigen::VectorXd draw(Rng& rng) const;
  // Solves L^T w = z and undoes the fill-reducing permutation.
  Eigen::VectorXd transform(const Eigen::VectorXd& z) const;
  double logDet() const;
  int dimension() const { return static_cast<int>(dimension_); }

 private:
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  Eigen::Index dimension_;
};

}  // namespace stzi
