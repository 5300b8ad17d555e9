#pragma once

#include <cstdint>
#include <string>

#include "stzi/rng.hpp"

namespace stzi {

enum class Family { Bernoulli, Poisson, NegBinomial, GPoisson };

std::string to_string(Family f);
Family familyFromString(const std::string& name);

// Observation family under the reparameterizations used by the model:
//   Bernoulli:   pi = logistic(eta)
//   Poisson:     lambda = exp(eta)
//   NegBinomial: Gamma(y+xi)/(Gamma(xi) y!) mu^y (1-mu)^xi, mu = logistic(eta);
//                mean xi*exp(eta)
//   GPoisson:    phi (phi + d phi^(p-1) y)^(y-1) / ((1 + d phi^(p-1))^y y!)
//                * exp(-(phi + d phi^(p-1) y) / (1 + d phi^(p-1))), phi = exp(eta)
struct FamilySpec {
  Family family = Family::Poisson;
  double dispersion = 0.0;  // xi for NegBinomial, d (>= 0) for GPoisson
  double powerP = 1.0;

  void validate() const;
  bool hasDispersion() const { return family == Family::NegBinomial || family == Family::GPoisson; }
};

struct EtaDerivatives {
  double first;
  double second;
};

double logPmf(const FamilySpec& spec, std::int64_t y, double eta);
EtaDerivatives dLogPmf(const FamilySpec& spec, std::int64_t y, double eta);
double familyMean(const FamilySpec& spec, double eta);
double familyVariance(const FamilySpec& spec, double eta);
// P(Y <= y)
double familyCdf(const FamilySpec& spec, std::int64_t y, double eta);

// Mixture (1 - pi) 1{y = 0} + pi P(y | eta).
double zeroInflatedPmf(double pi, const FamilySpec& spec, std::int64_t y, double eta);

std::int64_t sampleCount(const FamilySpec& spec, double eta, Rng& rng);
// One draw of 1{Y > k}, by inverting the CDF only as far as k.
bool drawExceeds(const FamilySpec& spec, double eta, std::int64_t k, Rng& rng);
// 1{F^{-1}(u) > k} for a given uniform u.
bool exceedsAt(const FamilySpec& spec, double eta, std::int64_t k, double u);

double logistic(double x);
// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace stzi
