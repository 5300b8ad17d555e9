#include "stzi/artifacts.hpp"

#include "json.hpp"
#include "stzi/error.hpp"

namespace stzi {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd toVec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json points(const std::vector<Point>& pts) {
  json a = json::array();
  for (const Point& p : pts) a.push_back({p.lon, p.lat});
  return a;
}

std::vector<Point> toPoints(const json& j) {
  std::vector<Point> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

json quantile(const QuantileSpec& q) { return {q.threshold, q.probability}; }
QuantileSpec toQuantile(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

LatentLabel labelFromString(const std::string& s) {
  for (LatentLabel l : {LatentLabel::Fixed, LatentLabel::Spline, LatentLabel::Spatial, LatentLabel::SpatioTemporal})
    if (to_string(l) == s) return l;
  throw Error("unknown latent block label '" + s + "'");
}

}  // namespace

int resolvedKnots(const ComponentConfig& cfg, const SpatialContext& ctx) {
  if (cfg.form != StructuralForm::FormI) return 0;
  return cfg.knots > 0 ? cfg.knots : defaultKnotCount(static_cast<int>(ctx.years.size()));
}

void writeComponentFit(std::ostream& out, const ComponentFit& c) {
  const FitResult& f = c.fit;
  json j;
  j["schema"] = "stzi.fit";
  j["version"] = kFitFormatVersion;
  j["component"] = c.component;
  j["seed"] = c.seed;
  j["form"] = to_string(c.config.form);
  j["family"] = {{"name", to_string(f.family.family)}, {"dispersion", f.family.dispersion}, {"power", f.family.powerP}};
  j["use_offset"] = c.config.useOffset;
  j["knots"] = c.knots;
  j["priors"] = {{"range", quantile(c.config.priors.range)},
                 {"sd", quantile(c.config.priors.sd)},
                 {"spline_precision", quantile(c.config.priors.splinePrecision)},
                 {"correlation", quantile(c.config.priors.correlation)}};
  json tris = json::array();
  for (const auto& t : c.context.mesh.triangles) tris.push_back({t[0], t[1], t[2]});
  j["mesh"] = {{"vertices", points(c.context.mesh.vertices)},
               {"triangles", tris},
               {"boundary", points(c.context.mesh.boundary)}};
  j["domain"] = points(c.context.domain);
  j["years"] = c.context.years;
  j["design_names"] = f.designNames;
  json layout = json::array();
  for (const BlockLayout& b : f.layout)
    layout.push_back({{"label", to_string(b.label)}, {"offset", b.offset}, {"dimension", b.dimension}});
  j["layout"] = layout;
  j["latent_mode"] = vec(f.latentMode);
  std::vector<int> rows, cols;
  std::vector<double> vals;
  for (int k = 0; k < f.latentPrecision.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(f.latentPrecision, k); it; ++it)
      if (it.row() <= it.col()) {
        rows.push_back(static_cast<int>(it.row()));
        cols.push_back(static_cast<int>(it.col()));
        vals.push_back(it.value());
      }
  j["precision"] = {{"dimension", f.latentPrecision.rows()}, {"row", rows}, {"col", cols}, {"value", vals}};
  std::vector<std::string> transforms;
  for (Transform t : f.hyper.transforms) transforms.push_back(t == Transform::Log ? "log" : "atanh");
  const Eigen::Index d = f.hyper.internalCovariance.rows();
  std::vector<double> cov(static_cast<std::size_t>(d * d));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index s = 0; s < d; ++s) cov[static_cast<std::size_t>(r * d + s)] = f.hyper.internalCovariance(r, s);
  j["hyper"] = {{"names", f.hyper.names},         {"transforms", transforms},
                {"internal_mode", vec(f.hyper.internalMode)}, {"internal_covariance", cov},
                {"natural_mode", f.hyper.naturalMode},       {"lower95", f.hyper.lower95},
                {"upper95", f.hyper.upper95}};
  j["log_marginal"] = f.logMarginal;
  j["per_observation_loglik"] = vec(f.perObservationLogLik);
  j["evaluations"] = f.evaluations;
  j["hessian_warning"] = f.hessianWarning;
  j["approximate_intervals"] = f.approximateIntervals;
  j["threshold"] = c.threshold ? json(*c.threshold) : json(nullptr);
  j["rows"] = c.rows;
  out << j.dump() << '\n';
}

ComponentFit readComponentFit(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(std::string("fit container is not valid JSON: ") + e.what());
  }
  if (j.value("schema", "") != "stzi.fit") throw Error("not a fit container");
  if (j.value("version", 0) != kFitFormatVersion)
    throw Error("unsupported fit container version " + std::to_string(j.value("version", 0)));
  try {
    ComponentFit c;
    c.component = j.at("component").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config.form = formFromString(j.at("form").get<std::string>());
    FamilySpec fam;
    fam.family = familyFromString(j.at("family").at("name").get<std::string>());
    fam.dispersion = j.at("family").at("dispersion").get<double>();
    fam.powerP = j.at("family").at("power").get<double>();
    c.config.family = fam;
    c.config.useOffset = j.at("use_offset").get<bool>();
    c.knots = j.at("knots").get<int>();
    c.config.knots = c.knots;
    const json& pr = j.at("priors");
    c.config.priors = {toQuantile(pr.at("range")), toQuantile(pr.at("sd")), toQuantile(pr.at("spline_precision")),
                       toQuantile(pr.at("correlation"))};
    c.context.mesh.vertices = toPoints(j.at("mesh").at("vertices"));
    for (const auto& t : j.at("mesh").at("triangles")) c.context.mesh.triangles.push_back({t.at(0), t.at(1), t.at(2)});
    c.context.mesh.boundary = toPoints(j.at("mesh").at("boundary"));
    c.context.fem = assembleFem(c.context.mesh);
    c.context.domain = toPoints(j.at("domain"));
    c.context.years = j.at("years").get<std::vector<int>>();

    FitResult& f = c.fit;
    f.family = fam;
    f.form = c.config.form;
    f.designNames = j.at("design_names").get<std::vector<std::string>>();
    for (const auto& b : j.at("layout"))
      f.layout.push_back({labelFromString(b.at("label").get<std::string>()), b.at("offset").get<int>(),
                          b.at("dimension").get<int>()});
    f.latentMode = toVec(j.at("latent_mode"));
    const json& p = j.at("precision");
    const auto n = p.at("dimension").get<Eigen::Index>();
    const auto rows = p.at("row").get<std::vector<int>>();
    const auto cols = p.at("col").get<std::vector<int>>();
    const auto vals = p.at("value").get<std::vector<double>>();
    if (rows.size() != cols.size() || rows.size() != vals.size() || n != f.latentMode.size())
      throw Error("fit container precision block is inconsistent");
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      trips.emplace_back(rows[k], cols[k], vals[k]);
      if (rows[k] != cols[k]) trips.emplace_back(cols[k], rows[k], vals[k]);
    }
    f.latentPrecision.resize(n, n);
    f.latentPrecision.setFromTriplets(trips.begin(), trips.end());
    const json& h = j.at("hyper");
    f.hyper.names = h.at("names").get<std::vector<std::string>>();
    for (const auto& t : h.at("transforms")) f.hyper.transforms.push_back(t == "log" ? Transform::Log : Transform::Atanh);
    f.hyper.internalMode = toVec(h.at("internal_mode"));
    const Eigen::Index d = f.hyper.internalMode.size();
    const auto cov = h.at("internal_covariance").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(cov.size()) != d * d) throw Error("fit container hyper covariance is inconsistent");
    f.hyper.internalCovariance.resize(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index s = 0; s < d; ++s) f.hyper.internalCovariance(r, s) = cov[static_cast<std::size_t>(r * d + s)];
    f.hyper.naturalMode = h.at("natural_mode").get<std::vector<double>>();
    f.hyper.lower95 = h.at("lower95").get<std::vector<double>>();
    f.hyper.upper95 = h.at("upper95").get<std::vector<double>>();
    f.logMarginal = j.at("log_marginal").get<double>();
    f.perObservationLogLik = toVec(j.at("per_observation_loglik"));
    f.evaluations = j.at("evaluations").get<int>();
    f.hessianWarning = j.at("hessian_warning").get<bool>();
    f.approximateIntervals = j.at("approximate_intervals").get<bool>();
    if (!j.at("threshold").is_null()) c.threshold = j.at("threshold").get<double>();
    c.rows = j.at("rows").get<std::vector<std::size_t>>();
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("fit container is malformed: ") + e.what());
  }
}

}  // namespace stzi
