#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <unsupported/Eigen/KroneckerProduct>

#include "stzi/error.hpp"
#include "stzi/fields.hpp"

namespace stzi {

std::string to_string(LatentLabel label) {
  switch (label) {
    case LatentLabel::Fixed: return "beta";
    case LatentLabel::Spline: return "psi";
    case LatentLabel::Spatial: return "theta";
    case LatentLabel::SpatioTemporal: return "phi";
  }
  return "unknown";
}

double SpdeParams::kappa() const { return std::sqrt(8.0) / range; }

double SpdeParams::tau() const { return 1.0 / (sigma * kappa() * std::sqrt(4.0 * std::numbers::pi)); }

PrecisionBlock spdePrecision(const FemMatrices& fem, const SpdeParams& p) {
  if (!(p.range > 0.0) || !(p.sigma > 0.0)) throw Error("SPDE range and sigma must be positive");
  const double k2 = p.kappa() * p.kappa();
  const double t2 = p.tau() * p.tau();
  const Eigen::Index n = fem.massLumped.size();

  SparseMatrix c(n, n);
  SparseMatrix cInv(n, n);
  c.reserve(Eigen::VectorXi::Constant(n, 1));
  cInv.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    c.insert(i, i) = fem.massLumped[i];
    cInv.insert(i, i) = 1.0 / fem.massLumped[i];
  }
  const SparseMatrix& g = fem.stiffness;
  SparseMatrix gcg = g * cInv * g;
  SparseMatrix q = t2 * (k2 * k2 * c + 2.0 * k2 * g + gcg);
  // Symmetrize away rounding in the triple product.
  SparseMatrix qt = q.transpose();
  q = 0.5 * (q + qt);
  return {q, static_cast<int>(n), LatentLabel::Spatial};
}

double maternCovariance(double d, const SpdeParams& p) {
  const double s2 = p.sigma * p.sigma;
  const double x = p.kappa() * std::fabs(d);
  if (x == 0.0) return s2;
  if (x > 700.0) return 0.0;
  return s2 * x * std::cyl_bessel_k(1.0, x);
}

PrecisionBlock ar1Precision(int t, const Ar1Params& p) {
  if (t < 1) throw Error("AR(1) needs at least one time point");
  if (!(std::fabs(p.rho) < 1.0)) throw Error("AR(1) correlation must satisfy |rho| < 1");
  if (!(p.tau > 0.0)) throw Error("AR(1) precision must be positive");
  std::vector<Eigen::Triplet<double>> trips;
  if (t == 1) {
    trips.emplace_back(0, 0, p.tau * (1.0 - p.rho * p.rho));
  } else {
    for (int i = 0; i < t; ++i) {
      const bool end = i == 0 || i == t - 1;
      trips.emplace_back(i, i, p.tau * (end ? 1.0 : 1.0 + p.rho * p.rho));
      if (i + 1 < t) {
        trips.emplace_back(i, i + 1, -p.tau * p.rho);
        trips.emplace_back(i + 1, i, -p.tau * p.rho);
      }
    }
  }
  SparseMatrix q(t, t);
  q.setFromTriplets(trips.begin(), trips.end());
  return {q, t, LatentLabel::Spline};
}

PrecisionBlock spatioTemporalPrecision(const PrecisionBlock& spatial, const PrecisionBlock& temporal) {
  SparseMatrix q;
  Eigen::KroneckerProductSparse<SparseMatrix, SparseMatrix> kp(temporal.matrix, spatial.matrix);
  kp.evalTo(q);
  return {q, temporal.dimension * spatial.dimension, LatentLabel::SpatioTemporal};
}

SplineBasis::SplineBasis(double first, double last, int count)
    : first_(first), last_(last), spacing_((last - first) / (count - 3)), count_(count) {
  if (count < 4) throw Error("cubic spline basis needs at least 4 knots");
  if (!(last > first)) throw Error("spline domain must have positive length");
}

std::vector<double> SplineBasis::knots() const {
  std::vector<double> k(count_);
  for (int l = 0; l < count_; ++l) k[l] = first_ + (l - 1) * spacing_;
  return k;
}

Eigen::VectorXd SplineBasis::evaluate(double t) const {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(count_);
  const double u = (t - first_) / spacing_;
  const int i = std::clamp(static_cast<int>(std::floor(u)), 0, count_ - 4);
  const double s = u - i;
  const double s2 = s * s, s3 = s2 * s;
  row[i] = (1 - s) * (1 - s) * (1 - s) / 6.0;
  row[i + 1] = (3 * s3 - 6 * s2 + 4) / 6.0;
  row[i + 2] = (-3 * s3 + 3 * s2 + 3 * s + 1) / 6.0;
  row[i + 3] = s3 / 6.0;
  return row;
}

SparseRowMatrix SplineBasis::basisMatrix(std::span<const double> times) const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(times.size() * 4);
  for (std::size_t r = 0; r < times.size(); ++r) {
    const Eigen::VectorXd row = evaluate(times[r]);
    for (int l = 0; l < count_; ++l)
      if (row[l] != 0.0) trips.emplace_back(static_cast<int>(r), l, row[l]);
  }
  SparseRowMatrix m(static_cast<Eigen::Index>(times.size()), count_);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SplineFit splineBasisBuild(std::span<const double> years, int knotCount) {
  if (knotCount < 4) throw Error("cubic spline basis needs at least 4 knots");
  const std::set<double> distinct(years.begin(), years.end());
  if (static_cast<int>(distinct.size()) < knotCount)
    throw Error("spline basis with " + std::to_string(knotCount) + " knots needs at least that many distinct years");
  SplineBasis basis(*distinct.begin(), *distinct.rbegin(), knotCount);
  SparseRowMatrix m = basis.basisMatrix(years);
  return {basis, std::move(m)};
}

int defaultKnotCount(int distinctYears) {
  const int byRule = std::max(6, (distinctYears + 2) / 3);
  return std::max(4, std::min(byRule, distinctYears));
}

namespace {

double correlationMass(double lambda, double u) {
  return -std::expm1(-lambda * std::sqrt(1.0 - u)) / -std::expm1(-lambda * std::sqrt(2.0));
}

}  // namespace

PcPrior::PcPrior(PcKind kind, QuantileSpec spec) : kind_(kind), spec_(spec), lambda_(0.0) {
  const double a = spec.probability;
  const double u = spec.threshold;
  if (!(a > 0.0 && a < 1.0)) throw Error("PC prior probability must lie in (0,1)");
  switch (kind) {
    case PcKind::Range:
      if (!(u > 0)) throw Error("PC range threshold must be positive");
      lambda_ = -std::log(a) * u;
      break;
    case PcKind::Sd:
      if (!(u > 0)) throw Error("PC sd threshold must be positive");
      lambda_ = -std::log(a) / u;
      break;
    case PcKind::Precision:
      if (!(u > 0)) throw Error("PC precision threshold must be positive");
      lambda_ = -std::log1p(-a) * std::sqrt(u);
      break;
    case PcKind::Correlation: {
      if (!(u > -1.0 && u < 1.0)) throw Error("PC correlation threshold must lie in (-1,1)");
      const double floor = std::sqrt(1.0 - u) / std::sqrt(2.0);
      if (!(a > floor)) throw Error("unattainable PC correlation quantile: P(rho > u) must exceed " + std::to_string(floor));
      // P(rho > u) increases with lambda; bisect on log lambda.
      double lo = std::log(1e-10), hi = std::log(1e6);
      if (correlationMass(std::exp(hi), u) < a) throw Error("unattainable PC correlation quantile");
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (correlationMass(std::exp(mid), u) < a ? lo : hi) = mid;
      }
      lambda_ = std::exp(0.5 * (lo + hi));
      break;
    }
  }
}

double PcPrior::logDensity(double v) const {
  const double l = lambda_;
  switch (kind_) {
    case PcKind::Range:
      if (!(v > 0)) return -INFINITY;
      return std::log(l) - 2.0 * std::log(v) - l / v;
    case PcKind::Sd:
      if (!(v >= 0)) return -INFINITY;
      return std::log(l) - l * v;
    case PcKind::Precision:
      if (!(v > 0)) return -INFINITY;
      return std::log(0.5 * l) - 1.5 * std::log(v) - l / std::sqrt(v);
    case PcKind::Correlation: {
      if (!(v > -1.0 && v < 1.0)) return -INFINITY;
      const double d = std::sqrt(1.0 - v);
      return std::log(l) - l * d - std::log(2.0 * d) - std::log(-std::expm1(-l * std::sqrt(2.0)));
    }
  }
  return -INFINITY;
}

double pcPriorLogDensity(PcKind kind, double value, QuantileSpec spec) {
  return PcPrior(kind, spec).logDensity(value);
}

double sparseLogDet(const SparseMatrix& q) {
  return GmrfSampler(q).logDet();
}

GmrfSampler::GmrfSampler(const SparseMatrix& precision) : dimension_(precision.rows()) {
  llt_.compute(precision);
  if (llt_.info() != Eigen::Success) throw Error("GMRF precision is not positive definite");
}

Eigen::VectorXd GmrfSampler::transform(const Eigen::VectorXd& z) const {
  Eigen::VectorXd w = llt_.matrixU().solve(z);
  return llt_.permutationPinv() * w;
}

Eigen::VectorXd GmrfSampler::draw(Rng& rng) const {
  Eigen::VectorXd z(dimension_);
  for (Eigen::Index i = 0; i < dimension_; ++i) z[i] = rng.normal();
  return transform(z);
}

double GmrfSampler::logDet() const {
  const SparseMatrix& l = llt_.matrixL().nestedExpression();
  double s = 0.0;
  for (Eigen::Index j = 0; j < l.outerSize(); ++j) {
    // Lower-triangular, column-major: the diagonal is each column's first entry.
    SparseMatrix::InnerIterator it(l, j);
    s += std::log(it.value());
  }
  return 2.0 * s;
}

}  // namespace stzi
