#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>

#include "json.hpp"
#include "stzi/error.hpp"
#include "stzi/simulate.hpp"

namespace stzi {

namespace {

// Exact draw from N(0, Q^{-1}) through a dense Cholesky factor.
Eigen::VectorXd denseGmrfDraw(const Eigen::LLT<Eigen::MatrixXd>& llt, Rng& rng) {
  Eigen::VectorXd z(llt.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return llt.matrixU().solve(z);
}

Eigen::LLT<Eigen::MatrixXd> denseFactor(const SparseMatrix& q) {
  Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(q)};
  if (llt.info() != Eigen::Success) throw Error("prior precision is not positive definite");
  return llt;
}

// Stationary AR(1) in time over spatial fields with precision Qs, time-major.
Eigen::VectorXd drawSpaceTime(const Eigen::LLT<Eigen::MatrixXd>& spatial, int t, double rho, Rng& rng) {
  const Eigen::Index k = spatial.rows();
  Eigen::VectorXd out(k * t);
  Eigen::VectorXd prev = denseGmrfDraw(spatial, rng) / std::sqrt(1.0 - rho * rho);
  out.head(k) = prev;
  for (int s = 1; s < t; ++s) {
    prev = rho * prev + denseGmrfDraw(spatial, rng);
    out.segment(s * k, k) = prev;
  }
  return out;
}

// The mesh depends on the domain only, so K does not grow with n.
Mesh meshWithNodes(const Polygon& domain, int target) {
  MeshOptions o;
  o.maxEdge = 1.0;
  Mesh m = buildMesh(std::span<const Point>{}, domain, o);
  while (m.size() < target) {
    o.maxEdge *= 0.9;
    m = buildMesh(std::span<const Point>{}, domain, o);
  }
  return m;
}

}  // namespace

SimulatedData simulateDataset(const SimulationConfig& cfg) {
  if (cfg.n < 1) throw Error("simulation needs at least one observation");
  if (cfg.timePoints < 1) throw Error("simulation needs at least one time point");
  if (cfg.meshNodes < 3) throw Error("simulation mesh needs at least three nodes");
  if (static_cast<long long>(cfg.meshNodes) * cfg.timePoints > 5000)
    throw Error("simulation oracle is limited to K*T <= 5000");
  if (cfg.beta.size() != 5) throw Error("simulation expects 5 fixed-effect coefficients");
  cfg.family.validate();

  Rng base(cfg.seed);
  Rng design = base.child(0), fieldRng = base.child(1), obs = base.child(2);

  SimulatedData out;
  EncodedDataset& d = out.data;
  const auto n = static_cast<std::size_t>(cfg.n);
  std::vector<std::string> seasons(n), zones(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.points.push_back({design.uniform(), design.uniform()});
    d.years.push_back(cfg.firstYear + static_cast<int>(i % static_cast<std::size_t>(cfg.timePoints)));
    const int month = 1 + static_cast<int>(design.uniform() * 12.0);
    seasons[i] = to_string(encodeSeason(std::min(month, 12)));
    zones[i] = design.uniform() < cfg.safeFraction ? "safe" : "active";
    d.regions.push_back("unit");
  }
  CategoricalColumn season{"season", {"Autumn", "Spring", "Summer", "Winter"}, 0, {}};
  CategoricalColumn zone{"zone", {"active", "safe"}, 0, {}};
  for (std::size_t i = 0; i < n; ++i) {
    season.codes.push_back(static_cast<int>(std::find(season.levels.begin(), season.levels.end(), seasons[i]) - season.levels.begin()));
    zone.codes.push_back(zones[i] == "safe" ? 1 : 0);
  }
  d.factors = {season, zone};
  d.design = dummyDesign(d.factors, n, d.columnNames);
  d.offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  d.report.parsed = d.report.kept = n;

  const Polygon square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  SpatialContext& ctx = out.context;
  ctx.mesh = meshWithNodes(square, cfg.meshNodes);
  ctx.fem = assembleFem(ctx.mesh);
  ctx.domain = square;
  for (int t = 0; t < cfg.timePoints; ++t) ctx.years.push_back(cfg.firstYear + t);
  const int k = ctx.mesh.size();
  if (static_cast<long long>(k) * cfg.timePoints > 5000) throw Error("simulation oracle is limited to K*T <= 5000");

  SimulationTruth& truth = out.truth;
  truth.beta = cfg.beta;
  truth.field = cfg.field;
  truth.temporal = cfg.temporal;
  truth.family = cfg.family;
  truth.form = cfg.form;
  truth.seed = cfg.seed;

  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(cfg.beta.data(), 5);
  Eigen::VectorXd eta = d.design * b;
  std::vector<int> tIndex(n);
  for (std::size_t i = 0; i < n; ++i) tIndex[i] = d.years[i] - cfg.firstYear;

  switch (cfg.form) {
    case StructuralForm::Baseline:
      truth.latent.resize(0);
      break;
    case StructuralForm::FormI: {
      const int knots = defaultKnotCount(cfg.timePoints);
      const auto spatial = denseFactor(spdePrecision(ctx.fem, cfg.field).matrix);
      const auto temporal = denseFactor(ar1Precision(knots, cfg.temporal).matrix);
      const Eigen::VectorXd psi = denseGmrfDraw(temporal, fieldRng);
      const Eigen::VectorXd theta = denseGmrfDraw(spatial, fieldRng);
      std::vector<double> t(n);
      for (std::size_t i = 0; i < n; ++i) t[i] = d.years[i];
      const SplineBasis basis(cfg.firstYear, cfg.firstYear + cfg.timePoints - 1, knots);
      eta += basis.basisMatrix(t) * psi + projectPoints(ctx.mesh, d.points).matrix * theta;
      truth.latent.resize(knots + k);
      truth.latent << psi, theta;
      break;
    }
    case StructuralForm::FormII: {
      const auto spatial = denseFactor(spdePrecision(ctx.fem, cfg.field).matrix);
      truth.latent = drawSpaceTime(spatial, cfg.timePoints, cfg.temporal.rho, fieldRng);
      eta += spaceTimeProjector(ctx.mesh, d.points, tIndex, cfg.timePoints) * truth.latent;
      break;
    }
  }
  truth.eta = eta;

  const int safeColumn = 4;
  const Eigen::VectorXd safe = d.design * Eigen::VectorXd::Unit(5, safeColumn);
  d.y.resize(n);
  truth.pi.resize(n);
  truth.structuralZero.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double pi = cfg.zeroInflation ? logistic(cfg.zeros.intercept + cfg.zeros.slope * safe[ii]) : 1.0;
    truth.pi[i] = pi;
    const double u = obs.uniform();
    if (u < pi) {
      d.y[i] = sampleCount(cfg.family, eta[ii], obs);
    } else {
      d.y[i] = 0;
      truth.structuralZero[i] = true;
    }
  }
  return out;
}

void writeTruthJson(std::ostream& out, const SimulationTruth& truth) {
  nlohmann::json j;
  j["schema"] = "stzi.truth";
  j["version"] = 1;
  j["seed"] = truth.seed;
  j["form"] = to_string(truth.form);
  j["family"] = {{"name", to_string(truth.family.family)}, {"dispersion", truth.family.dispersion}};
  j["beta"] = truth.beta;
  j["field"] = {{"range", truth.field.range}, {"sigma", truth.field.sigma}};
  j["temporal"] = {{"rho", truth.temporal.rho}, {"tau", truth.temporal.tau}};
  j["latent"] = std::vector<double>(truth.latent.data(), truth.latent.data() + truth.latent.size());
  j["pi"] = truth.pi;
  std::vector<int> labels(truth.structuralZero.begin(), truth.structuralZero.end());
  j["structural_zero"] = labels;
  out << j.dump(1) << '\n';
}

DenseReference denseReferenceFit(const ModelSpec& spec, const Eigen::VectorXd& hyper) {
  const auto n = static_cast<Eigen::Index>(spec.response.size());
  const Eigen::Index p = spec.design.cols();
  std::vector<const LatentBlockSpec*> blocks;
  for (const auto& b : spec.blocks) blocks.push_back(&b);
  std::stable_sort(blocks.begin(), blocks.end(), [](const LatentBlockSpec* a, const LatentBlockSpec* b) {
    return static_cast<int>(a->precision->label()) < static_cast<int>(b->precision->label());
  });
  Eigen::Index m = p, random = 0;
  for (const auto* b : blocks) random += b->precision->dimension();
  if (random > 400) throw Error("dense reference is limited to 400 non-fixed latent variables");
  m += random;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, m);
  a.leftCols(p) = Eigen::MatrixXd(spec.design);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  q.topLeftCorner(p, p) = spec.fixedEffectPrecision * Eigen::MatrixXd::Identity(p, p);
  double logHyperPrior = 0.0;
  Eigen::Index col = p;
  std::size_t h = 0;
  for (const auto* b : blocks) {
    const Eigen::Index dim = b->precision->dimension();
    const std::size_t nh = b->precision->hyperNames().size();
    const std::span<const double> bh(hyper.data() + h, nh);
    a.middleCols(col, dim) = Eigen::MatrixXd(b->projector);
    q.block(col, col, dim, dim) = Eigen::MatrixXd(b->precision->precision(bh));
    logHyperPrior += b->precision->logPrior(bh);
    col += dim;
    h += nh;
  }
  FamilySpec fam = spec.family;
  if (fam.hasDispersion()) {
    const double x = hyper[static_cast<Eigen::Index>(h)];
    fam.dispersion = std::exp(x);
    const double sh = spec.dispersionPrior.shape, rate = spec.dispersionPrior.rate;
    logHyperPrior += sh * std::log(rate) - std::lgamma(sh) + sh * x - rate * std::exp(x);
    ++h;
  }
  if (static_cast<Eigen::Index>(h) != hyper.size()) throw Error("hyperparameter vector has the wrong length");
  const Eigen::VectorXd off = spec.offset.size() == n ? spec.offset : Eigen::VectorXd::Zero(n);

  auto loglik = [&](const Eigen::VectorXd& eta) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += logPmf(fam, spec.response[static_cast<std::size_t>(i)], eta[i]);
    return s;
  };
  auto curvature = [&](const Eigen::VectorXd& eta, Eigen::VectorXd& g, Eigen::VectorXd& w) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const EtaDerivatives dd = dLogPmf(fam, spec.response[static_cast<std::size_t>(i)], eta[i]);
      g[i] = dd.first;
      w[i] = std::max(-dd.second, 0.0);
    }
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(m), g(n), w(n);
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd eta = a * x + off;
    curvature(eta, g, w);
    const Eigen::VectorXd grad = a.transpose() * g - q * x;
    if (grad.cwiseAbs().maxCoeff() < 1e-10) break;
    const Eigen::MatrixXd hess = q + a.transpose() * w.asDiagonal() * a;
    const Eigen::VectorXd step = hess.llt().solve(grad);
    const double f0 = loglik(eta) - 0.5 * x.dot(q * x);
    double t = 1.0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Eigen::VectorXd xn = x + t * step;
      const double f1 = loglik(a * xn + off) - 0.5 * xn.dot(q * xn);
      if (std::isfinite(f1) && f1 >= f0) break;
    }
    x += t * step;
  }
  const Eigen::VectorXd eta = a * x + off;
  curvature(eta, g, w);
  const Eigen::MatrixXd post = q + a.transpose() * w.asDiagonal() * a;
  const Eigen::LLT<Eigen::MatrixXd> lp(post), lq(q);
  if (lp.info() != Eigen::Success || lq.info() != Eigen::Success)
    throw Error("dense reference precision is not positive definite");

  DenseReference r;
  r.precision = post;
  r.logDetPosterior = 2.0 * Eigen::MatrixXd(lp.matrixL()).diagonal().array().log().sum();
  r.logDetPrior = 2.0 * Eigen::MatrixXd(lq.matrixL()).diagonal().array().log().sum();
  const double ll = loglik(eta);
  r.logMarginal = ll + 0.5 * r.logDetPrior - 0.5 * x.dot(q * x) - 0.5 * r.logDetPosterior + logHyperPrior;
  r.fit.latentMode = x;
  r.fit.latentPrecision = post.sparseView();
  r.fit.logMarginal = r.logMarginal;
  r.fit.family = fam;
  r.fit.form = spec.form;
  r.fit.hyper.internalMode = hyper;
  r.fit.perObservationLogLik.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    r.fit.perObservationLogLik[i] = logPmf(fam, spec.response[static_cast<std::size_t>(i)], eta[i]);
  return r;
}

namespace {

const char* kRegionNames[12] = {"Benishangul-Gumuz", "Amhara", "Tigray", "Afar",     "Gambela",   "Oromia",
                                "Addis Ababa",       "Harari", "SNNPR", "Sidama",   "Dire Dawa", "Somali"};
const double kBasePopulation[12] = {0.55e6, 14.5e6, 3.6e6, 1.2e6, 0.22e6, 21.0e6,
                                    2.4e6,  0.15e6, 10.5e6, 2.3e6, 0.29e6, 3.8e6};

struct TypeInfo {
  const char* name;
  double weight;
  double binary;
  double count;
};

const TypeInfo kTypes[] = {{"Battles", 0.35, 0.9, 0.6},
                           {"Violence against civilians", 0.25, 0.7, 0.3},
                           {"Explosions/Remote violence", 0.10, 0.4, 0.2},
                           {"Riots", 0.12, -1.2, -0.6},
                           {"Protests", 0.13, -3.0, -1.0},
                           {"Strategic developments", 0.05, -1.8, -0.4}};

template <typename W>
std::size_t pick(Rng& rng, const W& weights, std::size_t count) {
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += weights(i);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < count; ++i) {
    u -= weights(i);
    if (u < 0.0) return i;
  }
  return count - 1;
}

}  // namespace

SyntheticSample generateSyntheticSample(const SampleConfig& cfg) {
  if (cfg.events < 1 || cfg.lastYear < cfg.firstYear) throw Error("invalid synthetic sample configuration");
  Rng base(cfg.seed);
  Rng geo = base.child(0), fieldRng = base.child(1), ev = base.child(2);

  // 5 x 4 lattice of jittered vertices; 4 x 3 quadrilateral regions.
  const double lon[5] = {33.0, 36.8, 40.6, 44.4, 48.0};
  const double lat[4] = {3.5, 7.3, 11.1, 15.0};
  Point v[4][5];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) {
      const double jx = (c == 0 || c == 4) ? 0.0 : 1.2 * (geo.uniform() - 0.5);
      const double jy = (r == 0 || r == 3) ? 0.0 : 1.2 * (geo.uniform() - 0.5);
      v[r][c] = {lon[c] + jx, lat[r] + jy};
    }
  // Pull the corners in so the outline is not a rectangle.
  v[0][0] = {34.6, 5.0};
  v[0][4] = {46.2, 4.4};
  v[3][0] = {35.2, 13.6};
  v[3][4] = {43.0, 14.6};

  SyntheticSample out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      Region reg;
      reg.name = kRegionNames[r * 4 + c];
      reg.rings.push_back({v[r][c], v[r][c + 1], v[r + 1][c + 1], v[r + 1][c]});
      const double base0 = kBasePopulation[r * 4 + c];
      for (int y = cfg.firstYear; y <= cfg.lastYear; ++y)
        reg.population[y] = std::round(base0 * std::pow(1.026, y - 1997));
      out.regions.regions.push_back(std::move(reg));
    }
  for (int c = 0; c < 4; ++c) out.boundary.push_back(v[0][c]);
  for (int r = 0; r < 3; ++r) out.boundary.push_back(v[r][4]);
  for (int c = 4; c > 0; --c) out.boundary.push_back(v[3][c]);
  for (int r = 3; r > 0; --r) out.boundary.push_back(v[r][0]);

  // Space-time field driving both components.
  std::vector<Point> seedPts(out.boundary.begin(), out.boundary.end());
  MeshOptions mo;
  mo.maxEdge = 1.6;
  const Mesh mesh = buildMesh(seedPts, out.boundary, mo);
  const FemMatrices fem = assembleFem(mesh);
  const int years = cfg.lastYear - cfg.firstYear + 1;
  const auto spatial = denseFactor(spdePrecision(fem, {3.0, 0.7}).matrix);
  const Eigen::VectorXd phi = drawSpaceTime(spatial, years, 0.75, fieldRng);
  const TriangleLocator locator(mesh);

  const Point hotspots[8] = {{39.3, 13.6}, {37.8, 9.2}, {35.5, 9.0}, {42.3, 6.5},
                             {38.7, 9.0},  {41.8, 9.6}, {36.5, 11.5}, {44.0, 7.5}};
  const double x0 = 33.0, x1 = 48.0, y0 = 3.5, y1 = 15.0;
  const GroupLexicon lex = defaultLexicon();
  const double groupWeight[9] = {0.24, 0.03, 0.04, 0.1, 0.18, 0.02, 0.02, 0.3, 0.07};
  const double groupEffect[9] = {0.2, -0.3, -0.2, 0.1, 0.15, -0.1, -0.2, 0.45, 0.3};
  const char* places[6] = {"the town", "a rural kebele", "the district capital", "a market", "a village", "the border area"};

  out.records.reserve(static_cast<std::size_t>(cfg.events));
  while (static_cast<int>(out.records.size()) < cfg.events) {
    EventRecord r;
    r.year = cfg.firstYear + static_cast<int>(pick(ev, [&](std::size_t i) { return std::exp(0.09 * static_cast<double>(i)); }, static_cast<std::size_t>(years)));
    r.month = 1 + static_cast<int>(std::min(11.0, std::floor(ev.uniform() * 12.0)));
    if (ev.uniform() < 0.7) {
      const Point& h = hotspots[static_cast<std::size_t>(ev.uniform() * 8.0) % 8];
      r.point = {h.lon + 0.9 * ev.normal(), h.lat + 0.7 * ev.normal()};
    } else {
      r.point = {x0 + (x1 - x0) * ev.uniform(), y0 + (y1 - y0) * ev.uniform()};
    }
    if (!pointInRings({out.boundary}, r.point)) continue;
    const std::size_t type = pick(ev, [](std::size_t i) { return kTypes[i].weight; }, 6);
    r.eventType = kTypes[type].name;
    double gEffect = 0.0;
    const std::string place = places[static_cast<std::size_t>(ev.uniform() * 6.0) % 6];
    if (ev.uniform() < 0.55) {
      const std::size_t g = pick(ev, [&](std::size_t i) { return groupWeight[i]; }, 9);
      const auto& aliases = lex[g].aliases;
      const std::string alias = aliases[static_cast<std::size_t>(ev.uniform() * static_cast<double>(aliases.size())) % aliases.size()];
      r.notes = "On a reported date, " + alias + " forces were involved in an incident near " + place + ".";
      gEffect = groupEffect[g];
    } else {
      r.notes = "Unidentified armed men were involved in an incident near " + place + ".";
    }

    const auto loc = locator.locate(r.point);
    double field = 0.0;
    if (loc) {
      const auto& tri = mesh.triangles[static_cast<std::size_t>(loc->first)];
      const int t = r.year - cfg.firstYear;
      for (int k = 0; k < 3; ++k) field += loc->second[static_cast<std::size_t>(k)] * phi[t * mesh.size() + tri[static_cast<std::size_t>(k)]];
    }
    double pop = 1.0;
    for (const Region& reg : out.regions.regions)
      if (pointInRings(reg.rings, r.point)) {
        pop = reg.population.at(r.year);
        break;
      }
    const Season season = encodeSeason(r.month);
    const double seasonEffect = season == Season::Winter ? -0.12 : season == Season::Summer ? 0.1 : season == Season::Spring ? -0.22 : 0.0;
    const double etaB = 0.2 + kTypes[type].binary + 0.8 * field;
    const double etaC = std::log(pop) - 15.3 + kTypes[type].count + seasonEffect + gEffect + field;
    if (ev.uniform() < logistic(etaB))
      r.fatalities = sampleCount({Family::NegBinomial, 1.3}, etaC, ev);
    else
      r.fatalities = 0;
    out.records.push_back(std::move(r));
  }
  return out;
}

void writeRegionsGeoJson(std::ostream& out, const RegionSet& regions) {
  nlohmann::json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = nlohmann::json::array();
  for (const Region& r : regions.regions) {
    nlohmann::json rings = nlohmann::json::array();
    for (const Polygon& ring : r.rings) {
      nlohmann::json coords = nlohmann::json::array();
      for (const Point& p : ring) coords.push_back({p.lon, p.lat});
      if (!ring.empty()) coords.push_back({ring.front().lon, ring.front().lat});
      rings.push_back(coords);
    }
    fc["features"].push_back({{"type", "Feature"},
                              {"properties", {{"name", r.name}}},
                              {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
  }
  out << fc.dump() << '\n';
}

void writePopulationCsv(std::ostream& out, const RegionSet& regions) {
  out << "region,year,population\n";
  for (const Region& r : regions.regions)
    for (const auto& [year, pop] : r.population)
      out << (r.name.find(',') == std::string::npos ? r.name : "\"" + r.name + "\"") << ',' << year << ','
          << std::fixed << std::setprecision(0) << pop << '\n';
}

}  // namespace stzi
