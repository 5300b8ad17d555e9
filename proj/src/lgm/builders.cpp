#include <cmath>
#include <numbers>

#include "stzi/error.hpp"
#include "stzi/lgm.hpp"

namespace stzi {

std::string to_string(StructuralForm form) {
  switch (form) {
    case StructuralForm::Baseline: return "baseline";
    case StructuralForm::FormI: return "form_i";
    case StructuralForm::FormII: return "form_ii";
  }
  return "unknown";
}

StructuralForm formFromString(const std::string& name) {
  if (name == "baseline") return StructuralForm::Baseline;
  if (name == "form_i" || name == "I" || name == "i" || name == "formI") return StructuralForm::FormI;
  if (name == "form_ii" || name == "II" || name == "ii" || name == "formII") return StructuralForm::FormII;
  throw Error("unknown structural form '" + name + "'");
}

double toNatural(Transform t, double internal) {
  return t == Transform::Log ? std::exp(internal) : std::tanh(internal);
}

double toInternal(Transform t, double natural) {
  if (t == Transform::Log) {
    if (!(natural > 0.0)) throw Error("log-scale hyperparameter must be positive");
    return std::log(natural);
  }
  if (!(std::fabs(natural) < 1.0)) throw Error("correlation hyperparameter must satisfy |rho| < 1");
  return std::atanh(natural);
}

namespace {

// log(1 - tanh(x)^2) = -2 log cosh(x)
double logOneMinusTanh2(double x) {
  const double a = std::fabs(x);
  return -2.0 * (a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2);
}

}  // namespace

double logJacobian(Transform t, double internal) {
  return t == Transform::Log ? internal : logOneMinusTanh2(internal);
}

SplineAr1Builder::SplineAr1Builder(int knots, const HyperPriorConfig& priors, double initialTau, double initialRho)
    : knots_(knots),
      tauPrior_(PcKind::Precision, priors.splinePrecision),
      rhoPrior_(PcKind::Correlation, priors.correlation),
      init_{toInternal(Transform::Log, initialTau), toInternal(Transform::Atanh, initialRho)} {
  if (knots < 1) throw Error("spline block needs at least one coefficient");
}

SparseMatrix SplineAr1Builder::precision(std::span<const double> h) const {
  return ar1Precision(knots_, {std::tanh(h[1]), std::exp(h[0])}).matrix;
}

double SplineAr1Builder::logDet(std::span<const double> h) const {
  // det of the stationary AR(1) precision is tau^L (1 - rho^2)
  return knots_ * h[0] + logOneMinusTanh2(h[1]);
}

double SplineAr1Builder::logPrior(std::span<const double> h) const {
  return tauPrior_.logDensity(std::exp(h[0])) + h[0] + rhoPrior_.logDensity(std::tanh(h[1])) +
         logOneMinusTanh2(h[1]);
}

namespace {

// Q = tau^2 (k2 C + G) C^-1 (k2 C + G), so only k2 C + G needs a factorization.
double spdeLogDet(const FemMatrices& fem, double range, double sigma) {
  const SpdeParams p{range, sigma};
  const double k2 = p.kappa() * p.kappa();
  SparseMatrix m = fem.stiffness;
  const Eigen::Index n = fem.massLumped.size();
  for (Eigen::Index i = 0; i < n; ++i) m.coeffRef(i, i) += k2 * fem.massLumped[i];
  double logC = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logC += std::log(fem.massLumped[i]);
  return 2.0 * n * std::log(p.tau()) + 2.0 * sparseLogDet(m) - logC;
}

}  // namespace

SpdeBuilder::SpdeBuilder(FemMatrices fem, const HyperPriorConfig& priors, double initialRange, double initialSigma)
    : fem_(std::move(fem)),
      rangePrior_(PcKind::Range, priors.range),
      sdPrior_(PcKind::Sd, priors.sd),
      init_{toInternal(Transform::Log, initialRange), toInternal(Transform::Log, initialSigma)} {}

SparseMatrix SpdeBuilder::precision(std::span<const double> h) const {
  return spdePrecision(fem_, {std::exp(h[0]), std::exp(h[1])}).matrix;
}

double SpdeBuilder::logDet(std::span<const double> h) const { return spdeLogDet(fem_, std::exp(h[0]), std::exp(h[1])); }

double SpdeBuilder::logPrior(std::span<const double> h) const {
  return rangePrior_.logDensity(std::exp(h[0])) + h[0] + sdPrior_.logDensity(std::exp(h[1])) + h[1];
}

SpatioTemporalBuilder::SpatioTemporalBuilder(FemMatrices fem, int timePoints, const HyperPriorConfig& priors,
                                             double initialRange, double initialSigma, double initialRho)
    : fem_(std::move(fem)),
      timePoints_(timePoints),
      rangePrior_(PcKind::Range, priors.range),
      sdPrior_(PcKind::Sd, priors.sd),
      rhoPrior_(PcKind::Correlation, priors.correlation),
      init_{toInternal(Transform::Log, initialRange), toInternal(Transform::Log, initialSigma),
            toInternal(Transform::Atanh, initialRho)} {
  if (timePoints < 1) throw Error("spatio-temporal block needs at least one time point");
}

SparseMatrix SpatioTemporalBuilder::precision(std::span<const double> h) const {
  const PrecisionBlock spatial = spdePrecision(fem_, {std::exp(h[0]), std::exp(h[1])});
  const PrecisionBlock temporal = ar1Precision(timePoints_, {std::tanh(h[2]), 1.0});
  return spatioTemporalPrecision(spatial, temporal).matrix;
}

double SpatioTemporalBuilder::logDet(std::span<const double> h) const {
  const double spatial = spdeLogDet(fem_, std::exp(h[0]), std::exp(h[1]));
  const double temporal = logOneMinusTanh2(h[2]);
  const double k = static_cast<double>(fem_.massLumped.size());
  return timePoints_ * spatial + k * temporal;
}

double SpatioTemporalBuilder::logPrior(std::span<const double> h) const {
  return rangePrior_.logDensity(std::exp(h[0])) + h[0] + sdPrior_.logDensity(std::exp(h[1])) + h[1] +
         rhoPrior_.logDensity(std::tanh(h[2])) + logOneMinusTanh2(h[2]);
}

}  // namespace stzi
