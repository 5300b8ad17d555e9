#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stzi/lgm.hpp"
#include "stzi/model.hpp"

namespace stzi {

// A fitted component together with everything needed to rebuild its model
// or project it to new locations.
struct ComponentFit {
  std::string component;  // "binary" or "count"
  ComponentConfig config;
  SpatialContext context;
  int knots = 0;  // spline basis size under form I
  FitResult fit;
  std::optional<double> threshold;
  std::vector<std::size_t> rows;  // dataset rows in the likelihood; empty means all
  std::uint64_t seed = 0;
};

constexpr int kFitFormatVersion = 1;

// JSON container: versioned header, latent mode, precision as (row, col,
// value) triplets of the upper triangle, hyperparameter summaries.
void writeComponentFit(std::ostream& out, const ComponentFit& fit);
ComponentFit readComponentFit(std::istream& in);

// Spline basis size used for form I given the context.
int resolvedKnots(const ComponentConfig& cfg, const SpatialContext& ctx);

}  // namespace stzi
