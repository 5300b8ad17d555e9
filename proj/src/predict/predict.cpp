#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "json.hpp"
#include "stzi/error.hpp"
#include "stzi/model.hpp"
#include "stzi/parallel.hpp"
#include "stzi/predict.hpp"

namespace stzi {

namespace {

constexpr int kBatch = 250;

constexpr std::uint64_t kStreamBinary = 1;
constexpr std::uint64_t kStreamCount = 2;
constexpr std::uint64_t kStreamCells = 3;

}  // namespace

SparseRowMatrix predictionMatrix(const ComponentFit& c, const std::vector<Point>& points, const std::vector<int>& years) {
  const FitResult& f = c.fit;
  if (points.size() != years.size()) throw Error("points and years differ in length");
  const auto n = static_cast<Eigen::Index>(points.size());
  std::vector<int> tIndex(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) tIndex[i] = c.context.timeIndex(years[i]);

  std::vector<Eigen::Triplet<double>> trips;
  const bool hasIntercept = !f.designNames.empty() && f.designNames.front() == "intercept";
  if (hasIntercept)
    for (Eigen::Index i = 0; i < n; ++i) trips.emplace_back(static_cast<int>(i), 0, 1.0);

  const Mesh& mesh = c.context.mesh;
  auto addBlock = [&](const SparseRowMatrix& a, int offset) {
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (SparseRowMatrix::InnerIterator it(a, r); it; ++it)
        trips.emplace_back(static_cast<int>(r), offset + static_cast<int>(it.col()), it.value());
  };
  auto checkInside = [&](const Projector& pr) {
    for (std::size_t i = 0; i < pr.outside.size(); ++i)
      if (pr.outside[i])
        throw Error("prediction point (" + std::to_string(points[i].lon) + ", " + std::to_string(points[i].lat) +
                    ") lies outside the mesh");
  };
  for (const BlockLayout& b : f.layout) {
    switch (b.label) {
      case LatentLabel::Fixed:
        break;
      case LatentLabel::Spline: {
        std::vector<double> t(years.begin(), years.end());
        const SplineBasis basis(c.context.years.front(), c.context.years.back(), b.dimension);
        addBlock(basis.basisMatrix(t), b.offset);
        break;
      }
      case LatentLabel::Spatial: {
        const Projector pr = projectPoints(mesh, points);
        checkInside(pr);
        addBlock(pr.matrix, b.offset);
        break;
      }
      case LatentLabel::SpatioTemporal: {
        const Projector pr = projectPoints(mesh, points);
        checkInside(pr);
        addBlock(spaceTimeProjector(mesh, points, tIndex, static_cast<int>(c.context.years.size())), b.offset);
        break;
      }
    }
  }
  SparseRowMatrix a(n, f.latentMode.size());
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

Eigen::MatrixXd projectField(const ComponentFit& component, const Eigen::MatrixXd& latentSamples,
                             const std::vector<Point>& points, const std::vector<int>& years,
                             const Eigen::VectorXd& offsets) {
  if (latentSamples.rows() != component.fit.latentMode.size()) throw Error("latent samples have the wrong dimension");
  Eigen::MatrixXd eta = predictionMatrix(component, points, years) * latentSamples;
  if (offsets.size() > 0) {
    if (offsets.size() != eta.rows()) throw Error("offsets differ in length from the points");
    eta.colwise() += offsets;
  }
  return eta;
}

double exceedanceProbability(std::span<const double> eta, const FamilySpec& family, EventSet set, std::int64_t k,
                             Rng& rng) {
  if (eta.empty()) throw Error("exceedance needs at least one sample");
  if (set == EventSet::CountAbove && k < 0) throw Error("exceedance threshold k must be non-negative");
  // Sample s uses a uniform from stratum [s/S, (s+1)/S). The samples are
  // exchangeable, so each draw is still exact and the mean stays unbiased.
  const double n = static_cast<double>(eta.size());
  std::size_t hits = 0;
  for (std::size_t s = 0; s < eta.size(); ++s) {
    const double u = (static_cast<double>(s) + rng.uniform()) / n;
    if (set == EventSet::Occurrence)
      hits += u < logistic(eta[s]);
    else
      hits += exceedsAt(family, eta[s], k, u);
  }
  return static_cast<double>(hits) / static_cast<double>(eta.size());
}

ExceedanceGrid predictExceedance(const ComponentFit& binary, const ComponentFit& count, const RegionSet& regions,
                                 const PredictConfig& cfg) {
  if (cfg.threshold < 0) throw Error("exceedance threshold k must be non-negative");
  if (cfg.nx < 1 || cfg.ny < 1) throw Error("prediction grid needs at least one cell per axis");
  if (cfg.samples < 1) throw Error("prediction needs at least one posterior sample");
  if (regions.regions.empty()) throw Error("prediction needs at least one region");
  if (count.fit.latentMode.size() == 0) throw Error("count fit is empty");

  ExceedanceGrid g;
  g.nx = cfg.nx;
  g.ny = cfg.ny;
  g.threshold = cfg.threshold;
  g.samples = cfg.samples;
  g.years = cfg.years.empty() ? std::vector<int>{count.context.years.back()} : cfg.years;
  for (int y : g.years) {
    count.context.timeIndex(y);
    if (binary.fit.latentMode.size() > 0) binary.context.timeIndex(y);
  }

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Region& r : regions.regions)
    for (const Polygon& ring : r.rings)
      for (const Point& p : ring) {
        x0 = std::min(x0, p.lon), x1 = std::max(x1, p.lon);
        y0 = std::min(y0, p.lat), y1 = std::max(y1, p.lat);
      }
  g.lon0 = x0;
  g.lat0 = y0;
  g.dlon = (x1 - x0) / cfg.nx;
  g.dlat = (y1 - y0) / cfg.ny;

  // Cell centres inside some region; row-major from the south-west corner.
  std::vector<Point> centres;
  std::vector<std::size_t> cellRegion;
  for (int j = 0; j < cfg.ny; ++j)
    for (int i = 0; i < cfg.nx; ++i) {
      const Point p{x0 + (i + 0.5) * g.dlon, y0 + (j + 0.5) * g.dlat};
      std::size_t hit = regions.regions.size();
      for (std::size_t r = 0; r < regions.regions.size(); ++r)
        if (pointInRings(regions.regions[r].rings, p)) {
          hit = r;
          break;
        }
      if (hit == regions.regions.size()) {
        ++g.outsideCells;
        continue;
      }
      centres.push_back(p);
      cellRegion.push_back(hit);
    }
  const std::size_t nc = centres.size();
  const bool haveBinary = binary.fit.latentMode.size() > 0;
  const FamilySpec countFamily = count.fit.family;

  for (std::size_t yi = 0; yi < g.years.size(); ++yi) {
    const int year = g.years[yi];
    const std::vector<int> years(nc, year);
    Eigen::VectorXd offsets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nc));
    if (count.config.useOffset)
      for (std::size_t c = 0; c < nc; ++c) {
        const Region& r = regions.regions[cellRegion[c]];
        const auto it = r.population.find(year);
        if (it == r.population.end() || !(it->second > 0.0))
          throw Error("region '" + r.name + "' has no positive population for year " + std::to_string(year));
        offsets[static_cast<Eigen::Index>(c)] = std::log(it->second);
      }
    const SparseMatrix countT = SparseMatrix(predictionMatrix(count, centres, years).transpose());
    SparseMatrix binaryT;
    if (haveBinary) binaryT = SparseMatrix(predictionMatrix(binary, centres, years).transpose());

    // Same posterior draws for every year.
    PosteriorSampler countSampler(count.fit, mixSeed(cfg.seed, kStreamCount));
    std::optional<PosteriorSampler> binarySampler;
    if (haveBinary) binarySampler.emplace(binary.fit, mixSeed(cfg.seed, kStreamBinary));

    std::vector<std::size_t> occur(nc, 0), exceed(nc, 0);
    int batchIndex = 0;
    for (int done = 0; done < cfg.samples; done += kBatch, ++batchIndex) {
      const int b = std::min(kBatch, cfg.samples - done);
      // b x cells, so that each cell's samples are contiguous.
      Eigen::MatrixXd etaC = countSampler.next(b).transpose() * countT;
      etaC.rowwise() += offsets.transpose();
      Eigen::MatrixXd etaB;
      if (haveBinary) etaB = binarySampler->next(b).transpose() * binaryT;
      parallelFor(nc, cfg.threads, [&](std::size_t c) {
        const std::uint64_t cellSeed = mixSeed(cfg.seed + kStreamCells, yi * nc + c);
        Rng rng(mixSeed(cellSeed, static_cast<std::uint64_t>(batchIndex)));
        const auto ci = static_cast<Eigen::Index>(c);
        const std::span<const double> ec(etaC.data() + ci * b, static_cast<std::size_t>(b));
        exceed[c] += static_cast<std::size_t>(
            std::llround(b * exceedanceProbability(ec, countFamily, EventSet::CountAbove, cfg.threshold, rng)));
        if (haveBinary) {
          const std::span<const double> eb(etaB.data() + ci * b, static_cast<std::size_t>(b));
          occur[c] += static_cast<std::size_t>(
              std::llround(b * exceedanceProbability(eb, {}, EventSet::Occurrence, 0, rng)));
        } else {
          occur[c] += static_cast<std::size_t>(b);
        }
      });
    }
    const double s = cfg.samples;
    for (std::size_t c = 0; c < nc; ++c) {
      CellPrediction cell;
      cell.point = centres[c];
      cell.year = year;
      cell.region = cellRegion[c];
      cell.pOccur = static_cast<double>(occur[c]) / s;
      cell.pExceed = static_cast<double>(exceed[c]) / s;
      cell.seOccur = std::sqrt(cell.pOccur * (1.0 - cell.pOccur) / s);
      cell.seExceed = std::sqrt(cell.pExceed * (1.0 - cell.pExceed) / s);
      g.cells.push_back(cell);
    }
  }
  return g;
}

RegionTable aggregateRegions(const ExceedanceGrid& grid, const RegionSet& regions) {
  RegionTable t;
  std::map<std::pair<std::size_t, int>, RegionSummary> acc;
  std::vector<bool> seen(regions.regions.size(), false);
  for (const CellPrediction& c : grid.cells) {
    if (c.region >= regions.regions.size()) continue;
    seen[c.region] = true;
    RegionSummary& s = acc[{c.region, c.year}];
    s.name = regions.regions[c.region].name;
    s.year = c.year;
    ++s.cells;
    s.pOccur += c.pOccur;
    s.pExceed += c.pExceed;
  }
  for (std::size_t r = 0; r < regions.regions.size(); ++r) {
    if (!seen[r]) {
      t.emptyRegions.push_back(regions.regions[r].name);
      continue;
    }
    for (int year : grid.years) {
      auto it = acc.find({r, year});
      if (it == acc.end()) continue;
      RegionSummary s = it->second;
      s.pOccur /= static_cast<double>(s.cells);
      s.pExceed /= static_cast<double>(s.cells);
      t.rows.push_back(s);
    }
  }
  return t;
}

void writeGridCsv(std::ostream& out, const ExceedanceGrid& grid, const RegionSet& regions) {
  out << "lon,lat,year,p_occur,p_exceed,region,se_occur,se_exceed\n";
  char buf[256];
  for (const CellPrediction& c : grid.cells) {
    const std::string& name = regions.regions.at(c.region).name;
    const bool quote = name.find_first_of(",\"") != std::string::npos;
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d,%.6f,%.6f,", c.point.lon, c.point.lat, c.year, c.pOccur, c.pExceed);
    out << buf << (quote ? "\"" + name + "\"" : name);
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", c.seOccur, c.seExceed);
    out << buf;
  }
}

void writeRegionGeoJson(std::ostream& out, const RegionTable& table, const RegionSet& regions,
                        const ExceedanceGrid& grid) {
  nlohmann::json fc;
  fc["type"] = "FeatureCollection";
  fc["stzi_schema"] = "stzi.region-summary";
  fc["version"] = kGridFormatVersion;
  fc["threshold"] = grid.threshold;
  fc["samples"] = grid.samples;
  fc["omitted_regions"] = table.emptyRegions;
  fc["features"] = nlohmann::json::array();
  for (const Region& r : regions.regions) {
    nlohmann::json years = nlohmann::json::array(), occ = nlohmann::json::array(), exc = nlohmann::json::array();
    std::size_t cells = 0;
    for (const RegionSummary& s : table.rows)
      if (s.name == r.name) {
        years.push_back(s.year);
        occ.push_back(s.pOccur);
        exc.push_back(s.pExceed);
        cells = s.cells;
      }
    if (years.empty()) continue;
    nlohmann::json rings = nlohmann::json::array();
    for (const Polygon& ring : r.rings) {
      nlohmann::json coords = nlohmann::json::array();
      for (const Point& p : ring) coords.push_back({p.lon, p.lat});
      if (!ring.empty()) coords.push_back({ring.front().lon, ring.front().lat});
      rings.push_back(coords);
    }
    fc["features"].push_back({{"type", "Feature"},
                              {"properties",
                               {{"name", r.name}, {"cells", cells}, {"years", years}, {"p_occur", occ}, {"p_exceed", exc}}},
                              {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
  }
  out << fc.dump(1) << '\n';
}

void writePredictManifest(std::ostream& out, const ExceedanceGrid& grid, const RegionTable& table,
                          const PredictConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "stzi.prediction";
  j["version"] = kGridFormatVersion;
  j["grid_csv_columns"] = {"lon", "lat", "year", "p_occur", "p_exceed", "region", "se_occur", "se_exceed"};
  j["nx"] = grid.nx;
  j["ny"] = grid.ny;
  j["bbox"] = {grid.lon0, grid.lat0, grid.lon0 + grid.nx * grid.dlon, grid.lat0 + grid.ny * grid.dlat};
  j["years"] = grid.years;
  j["threshold"] = grid.threshold;
  j["samples"] = grid.samples;
  j["seed"] = cfg.seed;
  j["cells_per_year"] = grid.years.empty() ? 0 : grid.cells.size() / grid.years.size();
  j["outside_cells_per_year"] = grid.outsideCells;
  j["rows"] = grid.cells.size();
  j["mc_se_bound"] = 0.5 / std::sqrt(static_cast<double>(grid.samples));
  j["omitted_regions"] = table.emptyRegions;
  j["covariates"] = "reference levels (intercept only)";
  out << j.dump(1) << '\n';
}

}  // namespace stzi
