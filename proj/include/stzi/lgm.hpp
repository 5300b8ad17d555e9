#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "stzi/fields.hpp"
#include "stzi/geometry.hpp"
#include "stzi/likelihoods.hpp"

namespace stzi {

enum class StructuralForm { Baseline, FormI, FormII };

std::string to_string(StructuralForm form);
StructuralForm formFromString(const std::string& name);

inline std::span<const double> asSpan(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Hyperparameters live on an unconstrained scale.
enum class Transform { Log, Atanh };

double toNatural(Transform t, double internal);
double toInternal(Transform t, double natural);
// log |d natural / d internal|
double logJacobian(Transform t, double internal);

// Prior precision of one latent block as a function of its hyperparameters.
class PrecisionBuilder {
 public:
  virtual ~PrecisionBuilder() = default;
  virtual LatentLabel label() const = 0;
  virtual int dimension() const = 0;
  virtual std::vector<std::string> hyperNames() const = 0;
  virtual std::vector<Transform> hyperTransforms() const = 0;
  virtual std::vector<double> initialInternal() const = 0;
  virtual SparseMatrix precision(std::span<const double> internal) const = 0;
  virtual double logDet(std::span<const double> internal) const = 0;
  // Log prior density of the internal parameters, Jacobian included.
  virtual double logPrior(std::span<const double> internal) const = 0;
};

struct HyperPriorConfig {
  QuantileSpec range{1.42, 0.9};
  QuantileSpec sd{1.0, 0.9};
  QuantileSpec splinePrecision{0.5, 0.9};
  QuantileSpec correlation{0.0, 0.9};
};

// Cubic-spline coefficients psi with a stationary AR(1) prior (rho, tau).
class SplineAr1Builder final : public PrecisionBuilder {
 public:
  SplineAr1Builder(int knots, const HyperPriorConfig& priors, double initialTau = 1.0, double initialRho = 0.5);
  LatentLabel label() const override { return LatentLabel::Spline; }
  int dimension() const override { return knots_; }
  std::vector<std::string> hyperNames() const override { return {"tau_psi", "rho_psi"}; }
  std::vector<Transform> hyperTransforms() const override { return {Transform::Log, Transform::Atanh}; }
  std::vector<double> initialInternal() const override { return init_; }
  SparseMatrix precision(std::span<const double> internal) const override;
  double logDet(std::span<const double> internal) const override;
  double logPrior(std::span<const double> internal) const override;

 private:
  int knots_;
  PcPrior tauPrior_, rhoPrior_;
  std::vector<double> init_;
};

// SPDE Matérn field theta on the mesh nodes, hyperparameters (range, sigma).
class SpdeBuilder final : public PrecisionBuilder {
 public:
  SpdeBuilder(FemMatrices fem, const HyperPriorConfig& priors, double initialRange, double initialSigma = 1.0);
  LatentLabel label() const override { return LatentLabel::Spatial; }
  int dimension() const override { return static_cast<int>(fem_.massLumped.size()); }
  std::vector<std::string> hyperNames() const override { return {"range_theta", "sigma_theta"}; }
  std::vector<Transform> hyperTransforms() const override { return {Transform::Log, Transform::Log}; }
  std::vector<double> initialInternal() const override { return init_; }
  SparseMatrix precision(std::span<const double> internal) const override;
  double logDet(std::span<const double> internal) const override;
  double logPrior(std::span<const double> internal) const override;

 private:
  FemMatrices fem_;
  PcPrior rangePrior_, sdPrior_;
  std::vector<double> init_;
};

// Spatio-temporal field phi = AR(1) in time (x) SPDE in space, time-major.
class SpatioTemporalBuilder final : public PrecisionBuilder {
 public:
  SpatioTemporalBuilder(FemMatrices fem, int timePoints, const HyperPriorConfig& priors, double initialRange,
                        double initialSigma = 1.0, double initialRho = 0.5);
  LatentLabel label() const override { return LatentLabel::SpatioTemporal; }
  int dimension() const override { return static_cast<int>(fem_.massLumped.size()) * timePoints_; }
  int timePoints() const { return timePoints_; }
  std::vector<std::string> hyperNames() const override { return {"range_phi", "sigma_phi", "rho_phi"}; }
  std::vector<Transform> hyperTransforms() const override {
    return {Transform::Log, Transform::Log, Transform::Atanh};
  }
  std::vector<double> initialInternal() const override { return init_; }
  SparseMatrix precision(std::span<const double> internal) const override;
  double logDet(std::span<const double> internal) const override;
  double logPrior(std::span<const double> internal) const override;

 private:
  FemMatrices fem_;
  int timePoints_;
  PcPrior rangePrior_, sdPrior_, rhoPrior_;
  std::vector<double> init_;
};

struct LatentBlockSpec {
  SparseRowMatrix projector;  // n x m
  std::shared_ptr<const PrecisionBuilder> precision;
};

// Gamma(shape, rate) prior on the family dispersion (xi or the GPoisson d).
struct DispersionPrior {
  double shape = 1.0;
  double rate = 0.1;
  double initial = 1.0;
};

struct ModelSpec {
  SparseRowMatrix design;  // n x p, intercept + dummy-coded covariates
  std::vector<std::string> designNames;
  Eigen::VectorXd offset;  // n
  std::vector<std::int64_t> response;
  std::vector<LatentBlockSpec> blocks;
  FamilySpec family;
  StructuralForm form = StructuralForm::Baseline;
  double fixedEffectPrecision = 1e-4;
  DispersionPrior dispersionPrior;
};

// Keeps only the listed rows of every per-observation component.
ModelSpec subsetRows(const ModelSpec& spec, std::span<const std::size_t> rows);

struct BlockLayout {
  LatentLabel label;
  int offset;
  int dimension;
};

// Validated model with the joint latent ordering [beta | psi | theta | phi].
class LatentModel {
 public:
  int observations() const { return static_cast<int>(response_.size()); }
  int latentDimension() const { return latentDim_; }
  int fixedDimension() const { return fixedDim_; }
  int hyperDimension() const { return static_cast<int>(hyperNames_.size()); }
  const std::vector<std::string>& hyperNames() const { return hyperNames_; }
  const std::vector<Transform>& hyperTransforms() const { return hyperTransforms_; }
  const std::vector<BlockLayout>& layout() const { return layout_; }
  const SparseRowMatrix& joint() const { return joint_; }
  const SparseMatrix& jointTransposed() const { return jointT_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  const std::vector<std::int64_t>& response() const { return response_; }
  const FamilySpec& baseFamily() const { return family_; }
  StructuralForm form() const { return form_; }
  const std::vector<std::string>& designNames() const { return designNames_; }

  Eigen::VectorXd initialHyper() const;
  FamilySpec familyAt(std::span<const double> hyper) const;
  SparseMatrix priorPrecision(std::span<const double> hyper) const;
  double priorLogDet(std::span<const double> hyper) const;
  double hyperLogPrior(std::span<const double> hyper) const;
  Eigen::VectorXd linearPredictor(const Eigen::VectorXd& latent) const;

 private:
  friend LatentModel assemble(const ModelSpec& spec);

  struct BlockEntry {
    std::shared_ptr<const PrecisionBuilder> builder;
    int offset;
    int hyperOffset;
  };

  SparseRowMatrix joint_;
  SparseMatrix jointT_;
  Eigen::VectorXd offset_;
  std::vector<std::int64_t> response_;
  FamilySpec family_;
  StructuralForm form_ = StructuralForm::Baseline;
  DispersionPrior dispersionPrior_;
  double fixedPrecision_ = 1e-4;
  int fixedDim_ = 0;
  int latentDim_ = 0;
  std::vector<BlockEntry> blocks_;
  std::vector<BlockLayout> layout_;
  std::vector<std::string> hyperNames_;
  std::vector<Transform> hyperTransforms_;
  std::vector<std::string> designNames_;
  int dispersionIndex_ = -1;
};

LatentModel assemble(const ModelSpec& spec);

// Symbolic factorization reused across Newton steps and hyper evaluations.
struct LaplaceWorkspace {
  Eigen::SimplicialLLT<SparseMatrix> llt;
  SparseMatrix pattern;  // explicit zeros over the union sparsity pattern
  bool analyzed = false;
};

struct InnerResult {
  Eigen::VectorXd mode;
  SparseMatrix precision;  // Q* = Q_prior + A' W A at the mode
  Eigen::VectorXd eta;
  double logLik = 0.0;
  double quadraticForm = 0.0;  // x*' Q_prior x*
  double logDetPosterior = 0.0;
  double gradientNorm = 0.0;
  int iterations = 0;
};

struct NewtonOptions {
  double gradientTolerance = 1e-6;
  int maxIterations = 50;
  int maxHalvings = 30;
};

InnerResult innerMode(const LatentModel& model, std::span<const double> hyper, LaplaceWorkspace& ws,
                      const Eigen::VectorXd* init = nullptr, const NewtonOptions& options = {});
InnerResult innerMode(const LatentModel& model, std::span<const double> hyper);

struct LaplaceEvaluation {
  InnerResult inner;
  double logMarginal = 0.0;
  double priorLogDet = 0.0;
  double hyperLogPrior = 0.0;
};

LaplaceEvaluation evaluateLaplace(const LatentModel& model, std::span<const double> hyper, LaplaceWorkspace& ws,
                                  const Eigen::VectorXd* init = nullptr);
double logMarginalHyper(const LatentModel& model, std::span<const double> hyper);

struct OptimizerOptions {
  double relativeTolerance = 1e-6;
  int maxEvaluations = 500;
  double initialStep = 0.5;
  double hessianStep = 1e-3;
};

struct HyperSummary {
  std::vector<std::string> names;
  std::vector<Transform> transforms;
  Eigen::VectorXd internalMode;
  Eigen::MatrixXd internalCovariance;
  std::vector<double> naturalMode;
  // Gaussian-on-internal-scale 95% intervals mapped to the natural scale.
  std::vector<double> lower95, upper95;
};

struct FitResult {
  Eigen::VectorXd latentMode;
  SparseMatrix latentPrecision;
  HyperSummary hyper;
  double logMarginal = 0.0;
  Eigen::VectorXd perObservationLogLik;
  FamilySpec family;  // dispersion fixed at its mode
  StructuralForm form = StructuralForm::Baseline;
  std::vector<BlockLayout> layout;
  std::vector<std::string> designNames;
  int evaluations = 0;
  bool hessianWarning = false;
  // Hyper intervals come from a Gaussian approximation, not integration.
  bool approximateIntervals = true;
};

FitResult optimizeHyper(const LatentModel& model, const Eigen::VectorXd& init, const OptimizerOptions& options = {},
                        const Eigen::VectorXd* latentInit = nullptr);
FitResult optimizeHyper(const LatentModel& model);
// Laplace fit with hyperparameters held at `hyper` (no optimization).
FitResult fitAtHyper(const LatentModel& model, const Eigen::VectorXd& hyper);

// Draws from N(mode, Q*^{-1}); column s is sample s.
Eigen::MatrixXd samplePosterior(const FitResult& fit, int samples, std::uint64_t seed);

// Same stream as samplePosterior, delivered in batches: concatenating the
// batches of next() reproduces samplePosterior(fit, total, seed).
class PosteriorSampler {
 public:
  PosteriorSampler(const FitResult& fit, std::uint64_t seed);
  Eigen::MatrixXd next(int count);

 private:
  Eigen::VectorXd mode_;
  GmrfSampler sampler_;
  Rng rng_;
};

// Minimizes f with Nelder-Mead. Non-finite values count as +inf.
struct NelderMeadResult {
  Eigen::VectorXd argmin;
  double value;
  int evaluations;
  bool converged;
};
NelderMeadResult nelderMead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& start,
                            double step, double relativeTolerance, int maxEvaluations);

// Per-sample, per-observation log-likelihood, S x n.
Eigen::MatrixXd logLikelihoodSamples(const LatentModel& model, const FitResult& fit, const Eigen::MatrixXd& samples);

}  // namespace stzi
