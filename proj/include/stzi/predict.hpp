#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stzi/artifacts.hpp"
#include "stzi/geometry.hpp"
#include "stzi/rng.hpp"

namespace stzi {

// Maps latent samples of a fitted component to the linear predictor at new
// points. Covariates are held at their reference levels (intercept only).
// Throws for years outside the fitted set and for points outside the mesh.
SparseRowMatrix predictionMatrix(const ComponentFit& component, const std::vector<Point>& points,
                                 const std::vector<int>& years);

// n x S linear predictor samples; `offsets` may be empty.
Eigen::MatrixXd projectField(const ComponentFit& component, const Eigen::MatrixXd& latentSamples,
                             const std::vector<Point>& points, const std::vector<int>& years,
                             const Eigen::VectorXd& offsets = {});

enum class EventSet { Occurrence, CountAbove };

// Occurrence: mean of Bernoulli(logistic(eta_s)) draws. CountAbove: mean of
// 1{Y_s > k} with Y_s drawn from the family at eta_s. Draws use stratified
// uniforms across the samples.
double exceedanceProbability(std::span<const double> etaSamples, const FamilySpec& family, EventSet set,
                             std::int64_t k, Rng& rng);

struct PredictConfig {
  int nx = 150;
  int ny = 150;
  std::vector<int> years;  // empty: the last fitted year
  std::int64_t threshold = 20;
  int samples = 10000;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct CellPrediction {
  Point point;
  int year = 0;
  std::size_t region = 0;
  double pOccur = 0.0;
  double pExceed = 0.0;
  double seOccur = 0.0;   // Monte Carlo standard errors
  double seExceed = 0.0;
};

struct RegionSummary {
  std::string name;
  int year = 0;
  std::size_t cells = 0;
  double pOccur = 0.0;
  double pExceed = 0.0;
};

struct ExceedanceGrid {
  int nx = 0, ny = 0;
  double lon0 = 0, lat0 = 0, dlon = 0, dlat = 0;
  std::vector<int> years;
  std::int64_t threshold = 0;
  int samples = 0;
  std::vector<CellPrediction> cells;  // cells inside some region only
  std::size_t outsideCells = 0;       // per year
};

// Regular grid over the bounding box of the regions; cells whose centre lies
// in no region are counted and skipped.
ExceedanceGrid predictExceedance(const ComponentFit& binary, const ComponentFit& count, const RegionSet& regions,
                                 const PredictConfig& cfg);

struct RegionTable {
  std::vector<RegionSummary> rows;
  std::vector<std::string> emptyRegions;  // no interior cells; omitted from rows
};

RegionTable aggregateRegions(const ExceedanceGrid& grid, const RegionSet& regions);

constexpr int kGridFormatVersion = 1;

// lon,lat,year,p_occur,p_exceed,region,se_occur,se_exceed
void writeGridCsv(std::ostream& out, const ExceedanceGrid& grid, const RegionSet& regions);
void writeRegionGeoJson(std::ostream& out, const RegionTable& table, const RegionSet& regions,
                        const ExceedanceGrid& grid);
void writePredictManifest(std::ostream& out, const ExceedanceGrid& grid, const RegionTable& table,
                          const PredictConfig& cfg);

}  // namespace stzi
