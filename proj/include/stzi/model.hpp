#pragma once

#include <cstdint>
#include <vector>

#include "stzi/data.hpp"
#include "stzi/fields.hpp"
#include "stzi/geometry.hpp"
#include "stzi/lgm.hpp"

namespace stzi {

// Mesh and time axis shared by both model components.
struct SpatialContext {
  Mesh mesh;
  FemMatrices fem;
  Polygon domain;
  std::vector<int> years;  // distinct, sorted

  int timeIndex(int year) const;
  double diameter() const;
};

SpatialContext makeSpatialContext(const std::vector<Point>& points, const Polygon& domain, const MeshOptions& options,
                                  std::vector<int> years);

struct ComponentConfig {
  StructuralForm form = StructuralForm::FormII;
  FamilySpec family;
  int knots = 0;  // spline knots for form I; 0 picks defaultKnotCount
  HyperPriorConfig priors;
  double initialRange = 0.0;  // 0 uses a fifth of the domain diameter
  double initialSigma = 1.0;
  double initialRho = 0.5;
  bool useOffset = false;
  DispersionPrior dispersionPrior;
};

// Design, offset and latent blocks of one component for the given response.
ModelSpec buildComponentSpec(const EncodedDataset& data, const SpatialContext& ctx, const ComponentConfig& cfg,
                             const std::vector<std::int64_t>& response);

// Row i of the spatio-temporal projector for point p at time index t.
SparseRowMatrix spaceTimeProjector(const Mesh& mesh, const std::vector<Point>& points,
                                   const std::vector<int>& timeIndex, int timePoints);

}  // namespace stzi
