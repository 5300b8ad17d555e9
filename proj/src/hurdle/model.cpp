#include <algorithm>
#include <cmath>
#include <memory>

#include "stzi/error.hpp"
#include "stzi/model.hpp"

namespace stzi {

int SpatialContext::timeIndex(int year) const {
  const auto it = std::lower_bound(years.begin(), years.end(), year);
  if (it == years.end() || *it != year) throw Error("year " + std::to_string(year) + " is not one of the fitted years");
  return static_cast<int>(it - years.begin());
}

double SpatialContext::diameter() const {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Point& p : domain.empty() ? mesh.vertices : domain) {
    x0 = std::min(x0, p.lon), x1 = std::max(x1, p.lon);
    y0 = std::min(y0, p.lat), y1 = std::max(y1, p.lat);
  }
  return std::hypot(x1 - x0, y1 - y0);
}

SpatialContext makeSpatialContext(const std::vector<Point>& points, const Polygon& domain, const MeshOptions& options,
                                  std::vector<int> years) {
  SpatialContext ctx;
  ctx.mesh = buildMesh(points, domain, options);
  ctx.fem = assembleFem(ctx.mesh);
  ctx.domain = domain.empty() ? convexHull(points) : domain;
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());
  if (years.empty()) throw Error("no years in the data");
  ctx.years = std::move(years);
  return ctx;
}

SparseRowMatrix spaceTimeProjector(const Mesh& mesh, const std::vector<Point>& points,
                                   const std::vector<int>& timeIndex, int timePoints) {
  const Projector pr = projectPoints(mesh, points);
  const int k = mesh.size();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(pr.matrix.nonZeros()));
  for (Eigen::Index r = 0; r < pr.matrix.rows(); ++r) {
    const int t = timeIndex[static_cast<std::size_t>(r)];
    if (t < 0 || t >= timePoints) throw Error("time index out of range");
    for (SparseRowMatrix::InnerIterator it(pr.matrix, r); it; ++it)
      trips.emplace_back(static_cast<int>(r), t * k + static_cast<int>(it.col()), it.value());
  }
  SparseRowMatrix out(pr.matrix.rows(), static_cast<Eigen::Index>(k) * timePoints);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

ModelSpec buildComponentSpec(const EncodedDataset& data, const SpatialContext& ctx, const ComponentConfig& cfg,
                             const std::vector<std::int64_t>& response) {
  const std::size_t n = data.size();
  if (response.size() != n) throw Error("response length does not match the dataset");
  ModelSpec spec;
  spec.design = data.design;
  spec.designNames = data.columnNames;
  spec.offset = cfg.useOffset ? data.offset : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (spec.offset.size() != static_cast<Eigen::Index>(n)) spec.offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  spec.response = response;
  spec.family = cfg.family;
  spec.form = cfg.form;
  spec.dispersionPrior = cfg.dispersionPrior;
  const double range0 = cfg.initialRange > 0.0 ? cfg.initialRange : 0.2 * ctx.diameter();

  std::vector<int> tIndex(n);
  for (std::size_t i = 0; i < n; ++i) tIndex[i] = ctx.timeIndex(data.years[i]);

  switch (cfg.form) {
    case StructuralForm::Baseline:
      break;
    case StructuralForm::FormI: {
      const int distinct = static_cast<int>(ctx.years.size());
      const int knots = cfg.knots > 0 ? cfg.knots : defaultKnotCount(distinct);
      if (distinct < 2) throw Error("form I needs at least two distinct years");
      std::vector<double> t(n);
      for (std::size_t i = 0; i < n; ++i) t[i] = data.years[i];
      SplineBasis basis(ctx.years.front(), ctx.years.back(), knots);
      spec.blocks.push_back({basis.basisMatrix(t), std::make_shared<SplineAr1Builder>(knots, cfg.priors, 1.0, cfg.initialRho)});
      spec.blocks.push_back({projectPoints(ctx.mesh, data.points).matrix,
                             std::make_shared<SpdeBuilder>(ctx.fem, cfg.priors, range0, cfg.initialSigma)});
      break;
    }
    case StructuralForm::FormII: {
      const int tp = static_cast<int>(ctx.years.size());
      spec.blocks.push_back({spaceTimeProjector(ctx.mesh, data.points, tIndex, tp),
                             std::make_shared<SpatioTemporalBuilder>(ctx.fem, tp, cfg.priors, range0, cfg.initialSigma,
                                                                     cfg.initialRho)});
      break;
    }
  }
  return spec;
}

}  // namespace stzi
