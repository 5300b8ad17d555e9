#include <algorithm>
#include <cmath>

#include "stzi/error.hpp"
#include "stzi/lgm.hpp"

namespace stzi {

namespace {

SparseRowMatrix takeRows(const SparseRowMatrix& m, std::span<const std::size_t> rows) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    if (src < 0 || src >= m.rows()) throw Error("row index out of range");
    for (SparseRowMatrix::InnerIterator it(m, src); it; ++it)
      trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  }
  SparseRowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

ModelSpec subsetRows(const ModelSpec& spec, std::span<const std::size_t> rows) {
  ModelSpec out = spec;
  out.design = takeRows(spec.design, rows);
  out.response.resize(rows.size());
  out.offset.resize(static_cast<Eigen::Index>(rows.size()));
  const bool hasOffset = spec.offset.size() > 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.response[r] = spec.response.at(rows[r]);
    out.offset[static_cast<Eigen::Index>(r)] = hasOffset ? spec.offset[static_cast<Eigen::Index>(rows[r])] : 0.0;
  }
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) out.blocks[b].projector = takeRows(spec.blocks[b].projector, rows);
  return out;
}

LatentModel assemble(const ModelSpec& spec) {
  LatentModel m;
  const auto n = static_cast<Eigen::Index>(spec.response.size());
  if (n == 0) throw Error("model has no observations");
  if (spec.design.rows() != n) throw Error("design matrix has " + std::to_string(spec.design.rows()) +
                                           " rows, expected " + std::to_string(n));
  if (spec.offset.size() != 0 && spec.offset.size() != n) throw Error("offset length does not match observations");
  if (!(spec.fixedEffectPrecision > 0.0)) throw Error("fixed-effect prior precision must be positive");

  FamilySpec probe = spec.family;
  if (probe.hasDispersion() && !(probe.dispersion > 0.0)) probe.dispersion = 1.0;
  probe.validate();
  for (std::int64_t y : spec.response) {
    if (y < 0) throw Error("observation must be non-negative");
    if (spec.family.family == Family::Bernoulli && y > 1) throw Error("Bernoulli observation must be 0 or 1");
  }

  m.response_ = spec.response;
  m.offset_ = spec.offset.size() == n ? spec.offset : Eigen::VectorXd::Zero(n);
  m.family_ = spec.family;
  m.form_ = spec.form;
  m.dispersionPrior_ = spec.dispersionPrior;
  m.fixedPrecision_ = spec.fixedEffectPrecision;
  m.fixedDim_ = static_cast<int>(spec.design.cols());
  m.designNames_ = spec.designNames;
  if (m.designNames_.size() != static_cast<std::size_t>(m.fixedDim_)) {
    m.designNames_.clear();
    for (int j = 0; j < m.fixedDim_; ++j) m.designNames_.push_back("beta" + std::to_string(j));
  }

  std::vector<std::size_t> order(spec.blocks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return static_cast<int>(spec.blocks[a].precision->label()) < static_cast<int>(spec.blocks[b].precision->label());
  });

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(spec.design.nonZeros()));
  for (Eigen::Index r = 0; r < n; ++r)
    for (SparseRowMatrix::InnerIterator it(spec.design, r); it; ++it)
      trips.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  m.layout_.push_back({LatentLabel::Fixed, 0, m.fixedDim_});

  int offset = m.fixedDim_;
  for (std::size_t idx : order) {
    const LatentBlockSpec& b = spec.blocks[idx];
    if (!b.precision) throw Error("latent block without a precision builder");
    const int dim = b.precision->dimension();
    if (b.projector.rows() != n || b.projector.cols() != dim)
      throw Error("projector for block '" + to_string(b.precision->label()) + "' has shape " +
                  std::to_string(b.projector.rows()) + "x" + std::to_string(b.projector.cols()) + ", expected " +
                  std::to_string(n) + "x" + std::to_string(dim));
    for (Eigen::Index r = 0; r < n; ++r)
      for (SparseRowMatrix::InnerIterator it(b.projector, r); it; ++it)
        trips.emplace_back(static_cast<int>(r), offset + static_cast<int>(it.col()), it.value());
    m.blocks_.push_back({b.precision, offset, static_cast<int>(m.hyperNames_.size())});
    m.layout_.push_back({b.precision->label(), offset, dim});
    for (const auto& name : b.precision->hyperNames()) m.hyperNames_.push_back(name);
    for (Transform t : b.precision->hyperTransforms()) m.hyperTransforms_.push_back(t);
    offset += dim;
  }
  m.latentDim_ = offset;
  if (spec.family.hasDispersion()) {
    m.dispersionIndex_ = static_cast<int>(m.hyperNames_.size());
    m.hyperNames_.push_back(spec.family.family == Family::NegBinomial ? "xi" : "gp_dispersion");
    m.hyperTransforms_.push_back(Transform::Log);
  }

  m.joint_.resize(n, m.latentDim_);
  m.joint_.setFromTriplets(trips.begin(), trips.end());
  m.joint_.makeCompressed();
  m.jointT_ = m.joint_.transpose();
  m.jointT_.makeCompressed();
  return m;
}

Eigen::VectorXd LatentModel::initialHyper() const {
  Eigen::VectorXd h(hyperDimension());
  for (const BlockEntry& b : blocks_) {
    const auto init = b.builder->initialInternal();
    for (std::size_t i = 0; i < init.size(); ++i) h[b.hyperOffset + static_cast<int>(i)] = init[i];
  }
  if (dispersionIndex_ >= 0) {
    const double start = family_.dispersion > 0.0 ? family_.dispersion : dispersionPrior_.initial;
    h[dispersionIndex_] = std::log(start);
  }
  return h;
}

FamilySpec LatentModel::familyAt(std::span<const double> hyper) const {
  FamilySpec f = family_;
  if (dispersionIndex_ >= 0) f.dispersion = std::exp(hyper[static_cast<std::size_t>(dispersionIndex_)]);
  return f;
}

namespace {

std::span<const double> blockHyper(std::span<const double> hyper, int offset, std::size_t count) {
  return hyper.subspan(static_cast<std::size_t>(offset), count);
}

}  // namespace

SparseMatrix LatentModel::priorPrecision(std::span<const double> hyper) const {
  if (static_cast<int>(hyper.size()) != hyperDimension()) throw Error("hyperparameter vector has the wrong length");
  std::vector<Eigen::Triplet<double>> trips;
  for (int j = 0; j < fixedDim_; ++j) trips.emplace_back(j, j, fixedPrecision_);
  for (const BlockEntry& b : blocks_) {
    const SparseMatrix q = b.builder->precision(blockHyper(hyper, b.hyperOffset, b.builder->hyperNames().size()));
    for (int k = 0; k < q.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(q, k); it; ++it)
        trips.emplace_back(b.offset + static_cast<int>(it.row()), b.offset + static_cast<int>(it.col()), it.value());
  }
  SparseMatrix q(latentDim_, latentDim_);
  q.setFromTriplets(trips.begin(), trips.end());
  return q;
}

double LatentModel::priorLogDet(std::span<const double> hyper) const {
  double s = fixedDim_ * std::log(fixedPrecision_);
  for (const BlockEntry& b : blocks_)
    s += b.builder->logDet(blockHyper(hyper, b.hyperOffset, b.builder->hyperNames().size()));
  return s;
}

double LatentModel::hyperLogPrior(std::span<const double> hyper) const {
  double s = 0.0;
  for (const BlockEntry& b : blocks_)
    s += b.builder->logPrior(blockHyper(hyper, b.hyperOffset, b.builder->hyperNames().size()));
  if (dispersionIndex_ >= 0) {
    const double x = hyper[static_cast<std::size_t>(dispersionIndex_)];
    const double a = dispersionPrior_.shape, r = dispersionPrior_.rate;
    s += a * std::log(r) - std::lgamma(a) + a * x - r * std::exp(x);
  }
  return s;
}

Eigen::VectorXd LatentModel::linearPredictor(const Eigen::VectorXd& latent) const {
  return joint_ * latent + offset_;
}

}  // namespace stzi
