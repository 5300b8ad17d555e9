#include <cmath>
#include <limits>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "stzi/error.hpp"
#include "stzi/likelihoods.hpp"

namespace stzi {

std::string to_string(Family f) {
  switch (f) {
    case Family::Bernoulli: return "bernoulli";
    case Family::Poisson: return "poisson";
    case Family::NegBinomial: return "negbinomial";
    case Family::GPoisson: return "gpoisson";
  }
  return "unknown";
}

Family familyFromString(const std::string& name) {
  if (name == "bernoulli" || name == "binomial") return Family::Bernoulli;
  if (name == "poisson") return Family::Poisson;
  if (name == "negbinomial" || name == "nbinomial" || name == "nb") return Family::NegBinomial;
  if (name == "gpoisson") return Family::GPoisson;
  throw Error("unknown family '" + name + "'");
}

void FamilySpec::validate() const {
  if (powerP != 1.0) throw Error("only powerP = 1 is supported");
  if (family == Family::NegBinomial && !(dispersion > 0.0))
    throw Error("negative binomial dispersion xi must be positive");
  if (family == Family::GPoisson && !(dispersion >= 0.0))
    throw Error("generalized Poisson dispersion must be non-negative");
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace {

void checkY(const FamilySpec& spec, std::int64_t y) {
  if (y < 0) throw Error("observation must be non-negative");
  if (spec.family == Family::Bernoulli && y > 1) throw Error("Bernoulli observation must be 0 or 1");
}

double lfact(std::int64_t y) { return std::lgamma(static_cast<double>(y) + 1.0); }

}  // namespace

double logPmf(const FamilySpec& spec, std::int64_t y, double eta) {
  checkY(spec, y);
  spec.validate();
  const double yd = static_cast<double>(y);
  switch (spec.family) {
    case Family::Bernoulli:
      return yd * eta - softplus(eta);
    case Family::Poisson:
      return yd * eta - std::exp(eta) - lfact(y);
    case Family::NegBinomial: {
      const double xi = spec.dispersion;
      return std::lgamma(yd + xi) - std::lgamma(xi) - lfact(y) - yd * softplus(-eta) - xi * softplus(eta);
    }
    case Family::GPoisson: {
      const double phi = std::exp(eta);
      const double a = 1.0 + spec.dispersion;
      if (y == 0) return -phi / a;
      const double m = phi + spec.dispersion * yd;
      return eta + (yd - 1.0) * std::log(m) - yd * std::log(a) - lfact(y) - m / a;
    }
  }
  return -std::numeric_limits<double>::infinity();
}

EtaDerivatives dLogPmf(const FamilySpec& spec, std::int64_t y, double eta) {
  checkY(spec, y);
  spec.validate();
  const double yd = static_cast<double>(y);
  switch (spec.family) {
    case Family::Bernoulli: {
      const double p = logistic(eta);
      return {yd - p, -p * (1.0 - p)};
    }
    case Family::Poisson: {
      const double l = std::exp(eta);
      return {yd - l, -l};
    }
    case Family::NegBinomial: {
      const double mu = logistic(eta);
      const double oneMinus = logistic(-eta);
      const double xi = spec.dispersion;
      return {yd * oneMinus - xi * mu, -(yd + xi) * mu * oneMinus};
    }
    case Family::GPoisson: {
      const double phi = std::exp(eta);
      const double a = 1.0 + spec.dispersion;
      if (y == 0) return {-phi / a, -phi / a};
      const double m = phi + spec.dispersion * yd;
      return {1.0 + (yd - 1.0) * phi / m - phi / a,
              (yd - 1.0) * phi * spec.dispersion * yd / (m * m) - phi / a};
    }
  }
  return {0.0, 0.0};
}

double familyMean(const FamilySpec& spec, double eta) {
  switch (spec.family) {
    case Family::Bernoulli: return logistic(eta);
    case Family::Poisson: return std::exp(eta);
    case Family::NegBinomial: return spec.dispersion * std::exp(eta);
    case Family::GPoisson: return std::exp(eta);
  }
  return 0.0;
}

double familyVariance(const FamilySpec& spec, double eta) {
  const double e = std::exp(eta);
  switch (spec.family) {
    case Family::Bernoulli: {
      const double p = logistic(eta);
      return p * (1 - p);
    }
    case Family::Poisson: return e;
    case Family::NegBinomial: return spec.dispersion * e * (1.0 + e);
    case Family::GPoisson: return e * (1.0 + spec.dispersion) * (1.0 + spec.dispersion);
  }
  return 0.0;
}

double familyCdf(const FamilySpec& spec, std::int64_t y, double eta) {
  if (y < 0) return 0.0;
  switch (spec.family) {
    case Family::Bernoulli:
      return y >= 1 ? 1.0 : logistic(-eta);
    case Family::Poisson:
      return boost::math::gamma_q(static_cast<double>(y) + 1.0, std::exp(eta));
    case Family::NegBinomial:
      // Failures-before-success form with success probability 1 - mu.
      return boost::math::ibeta(spec.dispersion, static_cast<double>(y) + 1.0, logistic(-eta));
    case Family::GPoisson: {
      double s = 0.0;
      for (std::int64_t j = 0; j <= y; ++j) s += std::exp(logPmf(spec, j, eta));
      return std::min(s, 1.0);
    }
  }
  return 1.0;
}

double zeroInflatedPmf(double pi, const FamilySpec& spec, std::int64_t y, double eta) {
  if (!(pi >= 0.0 && pi <= 1.0)) throw Error("mixture probability must lie in [0,1]");
  const double count = pi > 0.0 ? pi * std::exp(logPmf(spec, y, eta)) : 0.0;
  return (y == 0 ? 1.0 - pi : 0.0) + count;
}

std::int64_t sampleCount(const FamilySpec& spec, double eta, Rng& rng) {
  switch (spec.family) {
    case Family::Bernoulli:
      return rng.uniform() < logistic(eta) ? 1 : 0;
    case Family::Poisson:
      return rng.poisson(std::exp(eta));
    case Family::NegBinomial: {
      const double rate = rng.gamma(spec.dispersion, std::exp(eta));
      return rng.poisson(rate);
    }
    case Family::GPoisson: {
      // Inversion with the tail cut at cumulative mass 1 - 1e-12.
      const double u = rng.uniform();
      double cum = 0.0;
      for (std::int64_t j = 0;; ++j) {
        cum += std::exp(logPmf(spec, j, eta));
        if (u < cum || cum >= 1.0 - 1e-12) return j;
      }
    }
  }
  return 0;
}

bool drawExceeds(const FamilySpec& spec, double eta, std::int64_t k, Rng& rng) {
  return exceedsAt(spec, eta, k, rng.uniform());
}

bool exceedsAt(const FamilySpec& spec, double eta, std::int64_t k, double u) {
  if (k < 0) return true;
  double cdf = 0.0;
  switch (spec.family) {
    case Family::Bernoulli:
      cdf = k >= 1 ? 1.0 : logistic(-eta);
      break;
    case Family::Poisson: {
      const double lambda = std::exp(eta);
      double p = std::exp(-lambda);
      if (p < 1e-300) {
        cdf = familyCdf(spec, k, eta);
        break;
      }
      cdf = p;
      for (std::int64_t j = 1; j <= k && cdf <= u; ++j) {
        p *= lambda / static_cast<double>(j);
        cdf += p;
      }
      break;
    }
    case Family::NegBinomial: {
      const double xi = spec.dispersion;
      const double logP0 = -xi * softplus(eta);
      if (logP0 < -690.0) {
        cdf = familyCdf(spec, k, eta);
        break;
      }
      const double mu = logistic(eta);
      double p = std::exp(logP0);
      cdf = p;
      for (std::int64_t j = 0; j < k && cdf <= u; ++j) {
        p *= mu * (static_cast<double>(j) + xi) / static_cast<double>(j + 1);
        cdf += p;
      }
      break;
    }
    case Family::GPoisson:
      for (std::int64_t j = 0; j <= k && cdf <= u; ++j) cdf += std::exp(logPmf(spec, j, eta));
      break;
  }
  return u >= cdf;
}

}  // namespace stzi
