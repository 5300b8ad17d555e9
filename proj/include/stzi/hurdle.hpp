#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stzi/artifacts.hpp"
#include "stzi/diagnostics.hpp"
#include "stzi/lgm.hpp"
#include "stzi/model.hpp"

namespace stzi {

// Marks a zero treated as structural: it is left out of the count likelihood.
constexpr std::int64_t kStructuralZero = -1;

std::vector<std::int64_t> makeBinary(const std::vector<std::int64_t>& y);

struct CountOutcome {
  std::vector<std::int64_t> z1;      // y, 0 for count zeros, kStructuralZero for NA
  std::vector<std::size_t> rows;     // indices with z1 != NA
  std::size_t structuralZeros = 0;
  std::size_t countZeros = 0;
};

// NA iff y == 0 and piTilde < c.
CountOutcome classifyZeros(const std::vector<std::int64_t>& y, const std::vector<double>& piTilde, double c);

// Monte Carlo mean of logistic(eta_i) over posterior samples of the binary fit.
std::vector<double> predictPiTilde(const LatentModel& binary, const FitResult& fit, int samples, std::uint64_t seed);

// Unique piTilde values at zero observations plus {0, 1}, sorted, thinned by
// quantiles to at most `cap` entries (0 and 1 always kept).
std::vector<double> defaultThresholdGrid(const std::vector<std::int64_t>& y, const std::vector<double>& piTilde,
                                         int cap = 201);

struct ThresholdOptions {
  int waicSamples = 1000;
  std::uint64_t seed = 0;
  OptimizerOptions optimizer;
  // Step of the simplex for candidates started from the first candidate's optimum.
  double warmStep = 0.25;
  int threads = 1;
};

struct ThresholdCandidate {
  double c = 0.0;
  bool ok = false;
  std::size_t structuralZeros = 0;
  std::size_t countZeros = 0;
  WaicResult waic;  // over y > 0 only
  double logMarginal = 0.0;
  int evaluations = 0;
  bool reused = false;  // same classification as an earlier candidate
  std::string warning;
};

struct ThresholdSelection {
  std::vector<double> grid;
  std::vector<ThresholdCandidate> table;
  double chosen = 0.0;
  std::size_t chosenIndex = 0;
  std::vector<std::string> warnings;
  FitResult countFit;  // at the chosen c
  CountOutcome outcome;
};

// countSpec carries the full response y; each candidate fits the rows kept by
// classifyZeros and scores WAIC over y > 0.
ThresholdSelection selectThreshold(const std::vector<std::int64_t>& y, const std::vector<double>& piTilde,
                                   const ModelSpec& countSpec, const std::vector<double>& grid,
                                   const ThresholdOptions& options);

struct PipelineConfig {
  ComponentConfig binary;
  ComponentConfig count;
  int piSamples = 10000;
  int gridCap = 201;
  std::optional<std::vector<double>> grid;
  ThresholdOptions threshold;
  std::uint64_t seed = 0;

  PipelineConfig();
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct SequentialFit {
  ComponentFit binary;
  bool binaryDegenerate = false;  // no zeros: the binary part is skipped and piTilde = 1
  std::vector<double> piTilde;
  ThresholdSelection selection;
  ComponentFit count;
  std::vector<StageTiming> timings;
};

// Stage 1 only: binary fit and piTilde.
SequentialFit fitBinaryStage(const EncodedDataset& data, const SpatialContext& ctx, const PipelineConfig& cfg);
// Stages 2-3 given a completed stage 1.
void fitCountStage(SequentialFit& fit, const EncodedDataset& data, const SpatialContext& ctx, const PipelineConfig& cfg);
SequentialFit fitSequential(const EncodedDataset& data, const SpatialContext& ctx, const PipelineConfig& cfg);

// Chosen c, per-c WAIC table and seeds; timings are written separately so
// that the report is reproducible byte for byte.
void writeThresholdReport(std::ostream& out, const ThresholdSelection& sel, const PipelineConfig& cfg);
void writeTimings(std::ostream& out, const std::vector<StageTiming>& timings);

}  // namespace stzi
