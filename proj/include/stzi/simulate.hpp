#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "stzi/data.hpp"
#include "stzi/lgm.hpp"
#include "stzi/model.hpp"

namespace stzi {

// logit P(count process active) = intercept + slope * safe
struct ZeroMechanism {
  double intercept = 4.0;
  double slope = -7.0;
};

struct SimulationConfig {
  int n = 2000;
  int meshNodes = 30;  // target K; the mesh is refined until it has at least this many nodes
  int timePoints = 5;
  int firstYear = 2000;
  StructuralForm form = StructuralForm::FormII;
  FamilySpec family{Family::NegBinomial, 1.5};
  // intercept, season:Spring, season:Summer, season:Winter, zone:safe
  std::vector<double> beta{1.2, 0.3, -0.25, 0.15, -0.4};
  SpdeParams field{0.5, 0.8};
  Ar1Params temporal{0.6, 1.0};  // rho of phi (form II) or of psi (form I, with tau)
  bool zeroInflation = true;
  ZeroMechanism zeros;
  double safeFraction = 0.35;
  std::uint64_t seed = 1;
};

struct SimulationTruth {
  std::vector<double> beta;
  SpdeParams field;
  Ar1Params temporal;
  FamilySpec family;
  StructuralForm form = StructuralForm::FormII;
  Eigen::VectorXd latent;  // field block(s) in model order
  Eigen::VectorXd eta;
  std::vector<double> pi;
  std::vector<bool> structuralZero;
  std::uint64_t seed = 0;
};

struct SimulatedData {
  EncodedDataset data;
  SpatialContext context;
  SimulationTruth truth;
};

// Draws a dataset on the unit square from the exact latent priors.
SimulatedData simulateDataset(const SimulationConfig& cfg);

void writeTruthJson(std::ostream& out, const SimulationTruth& truth);

struct DenseReference {
  FitResult fit;
  Eigen::MatrixXd precision;
  double logDetPosterior = 0.0;
  double logDetPrior = 0.0;
  double logMarginal = 0.0;
};

// Laplace approximation at fixed hyperparameters using dense matrices only.
// Limited to at most 400 non-fixed latent variables.
DenseReference denseReferenceFit(const ModelSpec& spec, const Eigen::VectorXd& hyper);

struct SampleConfig {
  int events = 8490;
  int firstYear = 1997;
  int lastYear = 2022;
  std::uint64_t seed = 2022;
};

struct SyntheticSample {
  std::vector<EventRecord> records;
  RegionSet regions;
  Polygon boundary;
};

// ACLED-schema events over a fictional country with twelve regions.
SyntheticSample generateSyntheticSample(const SampleConfig& cfg);
void writeRegionsGeoJson(std::ostream& out, const RegionSet& regions);
void writePopulationCsv(std::ostream& out, const RegionSet& regions);

}  // namespace stzi
