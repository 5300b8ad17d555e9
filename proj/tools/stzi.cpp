#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stzi/artifacts.hpp"
#include "stzi/data.hpp"
#include "stzi/diagnostics.hpp"
#include "stzi/error.hpp"
#include "stzi/hurdle.hpp"
#include "stzi/parallel.hpp"
#include "stzi/predict.hpp"
#include "stzi/simulate.hpp"

namespace fs = std::filesystem;
using namespace stzi;

namespace {

void log(const std::string& msg) { std::cout << "[stzi] " << msg << std::endl; }

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::ifstream openInput(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + what + " '" + path + "'");
  return in;
}

void writeFile(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw Error("failed while writing '" + path.string() + "'");
  log("wrote " + path.string());
}

std::vector<double> parseDoubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> splitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

QuantileSpec parseQuantile(const std::string& text, const std::string& flag) {
  const auto v = parseDoubles(text);
  if (v.size() != 2) throw Error(flag + " expects 'threshold,probability'");
  return {v[0], v[1]};
}

// Options shared by the subcommands that read the event data.
struct DataOptions {
  std::string events, regions, population;
};

void addDataOptions(CLI::App* app, DataOptions& d) {
  app->add_option("--events", d.events, "Event CSV")->required()->check(CLI::ExistingFile);
  app->add_option("--regions", d.regions, "Regions GeoJSON")->required()->check(CLI::ExistingFile);
  app->add_option("--population", d.population, "Population CSV (region,year,population)")
      ->required()
      ->check(CLI::ExistingFile);
}

struct ModelOptions {
  std::string form = "II";
  std::string family = "negbinomial";
  double maxEdge = 0.0;
  int knots = 0;
  std::string rangePrior, sdPrior;
};

void addModelOptions(CLI::App* app, ModelOptions& m) {
  app->add_option("--form", m.form, "Structural form: baseline, I or II")->capture_default_str();
  app->add_option("--family", m.family, "Count family: poisson, negbinomial or gpoisson")->capture_default_str();
  app->add_option("--max-edge", m.maxEdge, "Largest mesh edge inside the domain; 0 picks a fifth of the domain diameter")
      ->capture_default_str();
  app->add_option("--knots", m.knots, "Spline knots for form I; 0 picks a default");
  app->add_option("--range-prior", m.rangePrior, "PC prior on the range as 'r0,p' meaning P(range < r0) = p");
  app->add_option("--sd-prior", m.sdPrior, "PC prior on the field sd as 's0,p' meaning P(sd > s0) = p");
}

ComponentConfig componentConfig(const ModelOptions& m, const FamilySpec& family, bool offset) {
  ComponentConfig c;
  c.form = formFromString(m.form);
  c.family = family;
  c.knots = m.knots;
  c.useOffset = offset;
  if (!m.rangePrior.empty()) c.priors.range = parseQuantile(m.rangePrior, "--range-prior");
  if (!m.sdPrior.empty()) c.priors.sd = parseQuantile(m.sdPrior, "--sd-prior");
  return c;
}

struct Loaded {
  RegionSet regions;
  EncodedDataset data;
};

Loaded loadData(const DataOptions& d) {
  Loaded out;
  auto rin = openInput(d.regions, "regions");
  out.regions = readRegionsGeoJson(rin);
  auto pin = openInput(d.population, "population");
  readPopulationCsv(pin, out.regions);
  auto ein = openInput(d.events, "events");
  const ParseResult parsed = parseEvents(ein, SchemaConfig{}, defaultLexicon());
  if (!parsed.errors.empty())
    log(std::to_string(parsed.errors.size()) + " malformed rows skipped (first on line " +
        std::to_string(parsed.errors.front().line) + ": " + parsed.errors.front().message + ")");
  out.data = buildDataset(parsed.records, out.regions, EncodingConfig{});
  log("events: " + std::to_string(out.data.report.parsed) + " parsed, " + std::to_string(out.data.report.kept) +
      " kept, " + std::to_string(out.data.report.dropped.size()) + " dropped");
  if (out.data.size() == 0) throw Error("no usable events");
  return out;
}

SpatialContext buildContext(const Loaded& l, double maxEdge) {
  std::vector<Point> vertices;
  for (const Region& r : l.regions.regions)
    for (const Polygon& ring : r.rings) vertices.insert(vertices.end(), ring.begin(), ring.end());
  const Polygon domain = convexHull(vertices);
  MeshOptions opts;
  if (maxEdge > 0.0) {
    opts.maxEdge = maxEdge;
  } else {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const Point& p : domain) {
      x0 = std::min(x0, p.lon), x1 = std::max(x1, p.lon);
      y0 = std::min(y0, p.lat), y1 = std::max(y1, p.lat);
    }
    opts.maxEdge = std::hypot(x1 - x0, y1 - y0) / 5.0;
  }
  SpatialContext ctx = makeSpatialContext({}, domain, opts, l.data.years);
  log("mesh: " + std::to_string(ctx.mesh.size()) + " nodes, " + std::to_string(ctx.years.size()) + " years");
  return ctx;
}

ComponentFit readFit(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing fit artifact '" + path.string() + "'");
  auto in = openInput(path.string(), "fit artifact");
  return readComponentFit(in);
}

void writePiTilde(std::ostream& out, const std::vector<double>& pi) {
  out << "index,pi_tilde\n";
  char buf[48];
  for (std::size_t i = 0; i < pi.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, pi[i]);
    out << buf;
  }
}

std::vector<double> readPiTilde(const fs::path& path, std::size_t n) {
  auto in = openInput(path.string(), "pi_tilde table");
  std::string line;
  std::getline(in, line);
  if (line.rfind("index,pi_tilde", 0) != 0) throw Error("'" + path.string() + "' is not a pi_tilde table");
  std::vector<double> pi;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("malformed pi_tilde row: " + line);
    pi.push_back(std::stod(line.substr(comma + 1)));
  }
  if (pi.size() != n)
    throw Error("pi_tilde has " + std::to_string(pi.size()) + " rows but the data has " + std::to_string(n));
  return pi;
}

// Model of a stored component rebuilt against the data, restricted to the
// rows used in its likelihood.
LatentModel rebuildModel(const ComponentFit& c, const EncodedDataset& data) {
  const bool binary = c.component == "binary";
  const std::vector<std::int64_t> response = binary ? makeBinary(data.y) : data.y;
  ModelSpec spec = buildComponentSpec(data, c.context, c.config, response);
  if (spec.designNames != c.fit.designNames) throw Error("the " + c.component + " fit does not match the data");
  if (!c.rows.empty()) {
    if (c.rows.back() >= data.size()) throw Error("the " + c.component + " fit refers to rows beyond the data");
    spec = subsetRows(spec, c.rows);
  }
  LatentModel model = assemble(spec);
  if (model.latentDimension() != c.fit.latentMode.size())
    throw Error("the " + c.component + " fit does not match the data");
  return model;
}

// Writes adequacy_<component>.{csv,json}.
void writeAdequacy(const fs::path& dir, const ComponentFit& c, const EncodedDataset& data, int samples,
                   std::uint64_t seed) {
  if (c.fit.latentMode.size() == 0) {
    log(c.component + " component is empty; no adequacy report");
    return;
  }
  const LatentModel model = rebuildModel(c, data);
  const AdequacyReport r = assessFit(model, c.fit, samples, seed);
  log(c.component + ": WAIC " + fmt(r.waic.waic, "%.2f") + ", DIC " + fmt(r.dic.dic, "%.2f") + ", pD " +
      fmt(r.dic.pDic, "%.2f") + (r.cpoPit.underflow.empty() ? "" : ", CPO underflow in " +
                                      std::to_string(r.cpoPit.underflow.size()) + " rows"));
  writeFile(dir / ("adequacy_" + c.component + ".csv"),
            [&](std::ostream& o) { writeAdequacyCsv(o, r, model.response(), c.rows); });
  writeFile(dir / ("adequacy_" + c.component + ".json"), [&](std::ostream& o) { writeAdequacyJson(o, r, c.component); });
}

void logHyper(const ComponentFit& c) {
  const HyperSummary& h = c.fit.hyper;
  std::string line = c.component + " hyperparameters:";
  for (std::size_t i = 0; i < h.names.size(); ++i) line += " " + h.names[i] + "=" + fmt(h.naturalMode[i]);
  if (c.fit.hessianWarning) line += " (hyper Hessian not positive definite; intervals unreliable)";
  log(line);
}

constexpr std::uint64_t kStreamAdequacy = 7;
constexpr std::uint64_t kStreamCompare = 8;

// ---- simulate

struct SimulateOptions {
  std::string kind = "sample";
  std::string out;
  std::uint64_t seed = 0;
  int events = 8490;
  int firstYear = 1997, lastYear = 2022;
  int n = 2000, nodes = 30, timePoints = 5;
  std::string form = "II", family = "negbinomial";
  double dispersion = 1.5;
};

void runSimulate(const SimulateOptions& o) {
  const fs::path dir(o.out);
  fs::create_directories(dir);
  if (o.kind == "sample") {
    SampleConfig cfg;
    cfg.events = o.events;
    cfg.firstYear = o.firstYear;
    cfg.lastYear = o.lastYear;
    cfg.seed = o.seed;
    const SyntheticSample s = generateSyntheticSample(cfg);
    writeFile(dir / "events.csv", [&](std::ostream& out) { writeEventsCsv(out, s.records); });
    writeFile(dir / "regions.geojson", [&](std::ostream& out) { writeRegionsGeoJson(out, s.regions); });
    writeFile(dir / "population.csv", [&](std::ostream& out) { writePopulationCsv(out, s.regions); });
  } else if (o.kind == "hurdle") {
    SimulationConfig cfg;
    cfg.n = o.n;
    cfg.meshNodes = o.nodes;
    cfg.timePoints = o.timePoints;
    cfg.form = formFromString(o.form);
    cfg.family = {familyFromString(o.family), o.dispersion};
    cfg.seed = o.seed;
    const SimulatedData sim = simulateDataset(cfg);
    writeFile(dir / "observations.csv", [&](std::ostream& out) {
      out << "index,lon,lat,year,y,structural_zero\n";
      char buf[128];
      for (std::size_t i = 0; i < sim.data.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%d,%lld,%d\n", i, sim.data.points[i].lon,
                      sim.data.points[i].lat, sim.data.years[i], static_cast<long long>(sim.data.y[i]),
                      sim.truth.structuralZero[i] ? 1 : 0);
        out << buf;
      }
    });
    writeFile(dir / "truth.json", [&](std::ostream& out) { writeTruthJson(out, sim.truth); });
  } else {
    throw Error("unknown simulation kind '" + o.kind + "' (expected sample or hurdle)");
  }
}

// ---- fit and select-threshold

struct FitOptions {
  DataOptions data;
  ModelOptions model;
  std::string out;
  std::uint64_t seed = 0;
  bool binaryOnly = false;
  int piSamples = 10000;
  int gridCap = 15;
  std::string grid;
  int waicSamples = 1000;
  int adequacySamples = 1000;
  int threads = defaultThreads();
  std::string binaryFit, piTilde;  // select-threshold inputs
};

void addPipelineOptions(CLI::App* app, FitOptions& f) {
  app->add_option("--grid-cap", f.gridCap, "Largest number of threshold candidates")->capture_default_str();
  app->add_option("--grid", f.grid, "Explicit threshold candidates, comma separated");
  app->add_option("--waic-samples", f.waicSamples, "Posterior samples per WAIC evaluation")->capture_default_str();
  app->add_option("--adequacy-samples", f.adequacySamples, "Posterior samples for the adequacy report")
      ->capture_default_str();
}

PipelineConfig pipelineConfig(const FitOptions& f, const FamilySpec& countFamily) {
  PipelineConfig pc;
  pc.binary = componentConfig(f.model, {Family::Bernoulli, 0.0}, false);
  pc.count = componentConfig(f.model, countFamily, true);
  pc.piSamples = f.piSamples;
  pc.gridCap = f.gridCap;
  if (!f.grid.empty()) pc.grid = parseDoubles(f.grid);
  pc.threshold.waicSamples = f.waicSamples;
  pc.threshold.threads = f.threads;
  pc.seed = f.seed;
  return pc;
}

FamilySpec countFamily(const ModelOptions& m) {
  const Family fam = familyFromString(m.family);
  if (fam == Family::Bernoulli) throw Error("the count component needs a count family");
  return {fam, fam == Family::Poisson ? 0.0 : 1.0};
}

void finishCountStage(const fs::path& dir, SequentialFit& fit, const Loaded& l, const SpatialContext& ctx,
                      const PipelineConfig& pc, const FitOptions& f) {
  Timer t;
  fitCountStage(fit, l.data, ctx, pc);
  const ThresholdSelection& sel = fit.selection;
  log("threshold: c = " + fmt(sel.chosen) + " from " + std::to_string(sel.grid.size()) + " candidates, " +
      std::to_string(sel.outcome.structuralZeros) + " structural and " + std::to_string(sel.outcome.countZeros) +
      " count zeros (" + fmt(t.seconds(), "%.1f") + " s)");
  for (const auto& w : sel.warnings) log("warning: " + w);
  logHyper(fit.count);
  writeFile(dir / "threshold_report.json", [&](std::ostream& o) { writeThresholdReport(o, sel, pc); });
  writeFile(dir / "count_fit.json", [&](std::ostream& o) { writeComponentFit(o, fit.count); });
  Timer a;
  writeAdequacy(dir, fit.count, l.data, f.adequacySamples, mixSeed(f.seed, kStreamAdequacy));
  fit.timings.push_back({"count_adequacy", a.seconds()});
}

void runFit(const FitOptions& f) {
  Timer total;
  const fs::path dir(f.out);
  fs::create_directories(dir);
  const Loaded l = loadData(f.data);
  const SpatialContext ctx = buildContext(l, f.model.maxEdge);
  const PipelineConfig pc = pipelineConfig(f, countFamily(f.model));

  SequentialFit fit = fitBinaryStage(l.data, ctx, pc);
  if (fit.binaryDegenerate)
    log("no zero counts: the binary component is skipped");
  else
    logHyper(fit.binary);
  writeFile(dir / "binary_fit.json", [&](std::ostream& o) { writeComponentFit(o, fit.binary); });
  writeFile(dir / "pi_tilde.csv", [&](std::ostream& o) { writePiTilde(o, fit.piTilde); });
  Timer a;
  writeAdequacy(dir, fit.binary, l.data, f.adequacySamples, mixSeed(f.seed, kStreamAdequacy));
  fit.timings.push_back({"binary_adequacy", a.seconds()});

  if (!f.binaryOnly) finishCountStage(dir, fit, l, ctx, pc, f);
  fit.timings.push_back({"total", total.seconds()});
  writeFile(dir / "timings.json", [&](std::ostream& o) { writeTimings(o, fit.timings); });
}

void runSelectThreshold(const FitOptions& given) {
  Timer total;
  FitOptions f = given;
  const fs::path dir(f.out);
  fs::create_directories(dir);
  const Loaded l = loadData(f.data);
  SequentialFit fit;
  fit.binary = readFit(f.binaryFit);
  if (fit.binary.component != "binary") throw Error("'" + f.binaryFit + "' is not a binary fit");
  if (f.seed == 0) f.seed = fit.binary.seed;
  fit.binaryDegenerate = fit.binary.fit.latentMode.size() == 0;
  fit.piTilde = readPiTilde(f.piTilde.empty() ? fs::path(f.binaryFit).parent_path() / "pi_tilde.csv"
                                              : fs::path(f.piTilde),
                            l.data.size());
  // The count component shares the binary component's mesh and time axis.
  ModelOptions m = f.model;
  PipelineConfig pc = pipelineConfig(f, countFamily(m));
  pc.binary = fit.binary.config;
  finishCountStage(dir, fit, l, fit.binary.context, pc, f);
  fit.timings.push_back({"total", total.seconds()});
  writeFile(dir / "timings.json", [&](std::ostream& o) { writeTimings(o, fit.timings); });
}

// ---- diagnose

struct DiagnoseOptions {
  DataOptions data;
  std::vector<std::string> fits;
  std::string out;
  std::uint64_t seed = 0;
  int samples = 1000;
};

void runDiagnose(const DiagnoseOptions& o) {
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const Loaded l = loadData(o.data);
  for (const std::string& path : o.fits) {
    const ComponentFit c = readFit(path);
    const std::uint64_t seed = o.seed != 0 ? o.seed : c.seed;
    writeAdequacy(dir, c, l.data, o.samples, mixSeed(seed, kStreamAdequacy));
  }
}

// ---- compare-families

struct CompareOptions {
  DataOptions data;
  ModelOptions model;
  std::string families = "poisson,negbinomial,gpoisson";
  std::string forms;
  std::string countFit;
  std::string out;
  std::uint64_t seed = 0;
  int samples = 1000;
};

std::string familyLabel(Family f) {
  switch (f) {
    case Family::Poisson: return "Poisson";
    case Family::NegBinomial: return "Negative Binomial";
    case Family::GPoisson: return "Generalized Poisson";
    case Family::Bernoulli: return "Bernoulli";
  }
  return "unknown";
}

std::string formLabel(StructuralForm f) {
  switch (f) {
    case StructuralForm::Baseline: return "baseline";
    case StructuralForm::FormI: return "form I";
    case StructuralForm::FormII: return "form II";
  }
  return "unknown";
}

void runCompare(const CompareOptions& o) {
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const Loaded l = loadData(o.data);
  SpatialContext ctx;
  std::vector<std::size_t> rows;
  if (!o.countFit.empty()) {
    const ComponentFit c = readFit(o.countFit);
    ctx = c.context;
    rows = c.rows;
  } else {
    ctx = buildContext(l, o.model.maxEdge);
    for (std::size_t i = 0; i < l.data.size(); ++i)
      if (l.data.y[i] > 0) rows.push_back(i);
  }
  if (rows.empty())
    for (std::size_t i = 0; i < l.data.size(); ++i) rows.push_back(i);
  std::vector<bool> positive(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) positive[k] = l.data.y[rows[k]] > 0;

  const auto forms = splitList(o.forms.empty() ? o.model.form : o.forms);
  const auto families = splitList(o.families);
  std::ostringstream csv;
  csv << "Model,DIC,WAIC,EffectiveParams\n";
  std::uint64_t stream = 0;
  for (const std::string& formName : forms)
    for (const std::string& famName : families) {
      ModelOptions m = o.model;
      m.form = formName;
      m.family = famName;
      const ComponentConfig cfg = componentConfig(m, countFamily(m), true);
      Timer t;
      const ModelSpec spec = subsetRows(buildComponentSpec(l.data, ctx, cfg, l.data.y), rows);
      const LatentModel model = assemble(spec);
      const FitResult fit = optimizeHyper(model);
      const AdequacyReport r = assessFit(model, fit, o.samples, mixSeed(mixSeed(o.seed, kStreamCompare), stream++),
                                         positive);
      std::string label = familyLabel(cfg.family.family);
      if (forms.size() > 1) label += " (" + formLabel(cfg.form) + ")";
      log(label + ": DIC " + fmt(r.dic.dic, "%.2f") + ", WAIC " + fmt(r.waic.waic, "%.2f") + " (" +
          fmt(t.seconds(), "%.1f") + " s)");
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%.2f,%.2f,%.2f\n", label.c_str(), r.dic.dic, r.waic.waic, r.dic.pDic);
      csv << buf;
    }
  writeFile(dir / "family_comparison.csv", [&](std::ostream& out) { out << csv.str(); });
}

// ---- predict

struct PredictOptions {
  std::string fitDir, binaryFit, countFit;
  std::string regions, population;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t threshold = 20;
  int nx = 150, ny = 150, samples = 10000;
  std::vector<int> years;
  int threads = defaultThreads();
};

void runPredict(const PredictOptions& o) {
  Timer total;
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const fs::path binaryPath = o.binaryFit.empty() ? fs::path(o.fitDir) / "binary_fit.json" : fs::path(o.binaryFit);
  const fs::path countPath = o.countFit.empty() ? fs::path(o.fitDir) / "count_fit.json" : fs::path(o.countFit);
  if (o.fitDir.empty() && (o.binaryFit.empty() || o.countFit.empty()))
    throw Error("predict needs --fit-dir or both --binary-fit and --count-fit");
  const ComponentFit binary = readFit(binaryPath);
  const ComponentFit count = readFit(countPath);
  if (binary.component != "binary" || count.component != "count")
    throw Error("expected a binary and a count fit artifact");

  auto rin = openInput(o.regions, "regions");
  RegionSet regions = readRegionsGeoJson(rin);
  auto pin = openInput(o.population, "population");
  readPopulationCsv(pin, regions);

  PredictConfig pc;
  pc.nx = o.nx;
  pc.ny = o.ny;
  pc.years = o.years;
  pc.threshold = o.threshold;
  pc.samples = o.samples;
  pc.seed = o.seed;
  pc.threads = o.threads;
  const ExceedanceGrid g = predictExceedance(binary, count, regions, pc);
  const RegionTable table = aggregateRegions(g, regions);
  log("predicted " + std::to_string(g.cells.size()) + " cells (" + std::to_string(g.outsideCells) +
      " per year outside every region) in " + fmt(total.seconds(), "%.1f") + " s");
  for (const auto& name : table.emptyRegions) log("region '" + name + "' has no interior cells; omitted");
  writeFile(dir / "exceedance_grid.csv", [&](std::ostream& out) { writeGridCsv(out, g, regions); });
  writeFile(dir / "region_summary.geojson", [&](std::ostream& out) { writeRegionGeoJson(out, table, regions, g); });
  writeFile(dir / "manifest.json", [&](std::ostream& out) { writePredictManifest(out, g, table, pc); });
}

void printError(const std::string& kind, const std::string& message, const std::string& subcommand, int code) {
  nlohmann::json j;
  j["error"] = {{"type", kind}, {"message", message}, {"subcommand", subcommand}, {"exit_code", code}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-part zero-inflated spatio-temporal models for event counts"};
  app.set_config("--config", "", "TOML or INI file with option values; flags override it");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset");
  simulate->add_option("--kind", sim.kind, "sample (events, regions, population) or hurdle (observations, truth)")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--seed", sim.seed, "Random seed")->required();
  simulate->add_option("--events", sim.events, "Events in the sample")->capture_default_str();
  simulate->add_option("--first-year", sim.firstYear)->capture_default_str();
  simulate->add_option("--last-year", sim.lastYear)->capture_default_str();
  simulate->add_option("--n", sim.n, "Observations (hurdle)")->capture_default_str();
  simulate->add_option("--nodes", sim.nodes, "Mesh nodes (hurdle)")->capture_default_str();
  simulate->add_option("--time-points", sim.timePoints, "Time points (hurdle)")->capture_default_str();
  simulate->add_option("--form", sim.form, "Structural form (hurdle)")->capture_default_str();
  simulate->add_option("--family", sim.family, "Count family (hurdle)")->capture_default_str();
  simulate->add_option("--dispersion", sim.dispersion, "Family dispersion (hurdle)")->capture_default_str();

  FitOptions fitOpts;
  auto* fit = app.add_subcommand("fit", "Fit the binary and count components");
  addDataOptions(fit, fitOpts.data);
  addModelOptions(fit, fitOpts.model);
  addPipelineOptions(fit, fitOpts);
  fit->add_option("--out", fitOpts.out, "Output directory")->required();
  fit->add_option("--seed", fitOpts.seed, "Random seed")->required();
  fit->add_flag("--binary-only", fitOpts.binaryOnly, "Stop after the binary component and pi_tilde");
  fit->add_option("--pi-samples", fitOpts.piSamples, "Posterior samples for pi_tilde")->capture_default_str();
  fit->add_option("--threads", fitOpts.threads, "Worker threads")->capture_default_str();

  FitOptions selOpts;
  auto* select = app.add_subcommand("select-threshold", "Choose c and fit the count component");
  addDataOptions(select, selOpts.data);
  addModelOptions(select, selOpts.model);
  addPipelineOptions(select, selOpts);
  select->add_option("--binary-fit", selOpts.binaryFit, "binary_fit.json from fit --binary-only")->required();
  select->add_option("--pi-tilde", selOpts.piTilde, "pi_tilde.csv; defaults to the one next to the binary fit");
  select->add_option("--out", selOpts.out, "Output directory")->required();
  select->add_option("--seed", selOpts.seed, "Random seed; defaults to the binary fit's seed");
  select->add_option("--threads", selOpts.threads, "Worker threads")->capture_default_str();

  DiagnoseOptions diag;
  auto* diagnose = app.add_subcommand("diagnose", "WAIC, DIC, CPO and PIT for fitted components");
  addDataOptions(diagnose, diag.data);
  diagnose->add_option("--fit", diag.fits, "Fit artifact(s)")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--out", diag.out, "Output directory")->required();
  diagnose->add_option("--samples", diag.samples, "Posterior samples")->capture_default_str();
  diagnose->add_option("--seed", diag.seed, "Random seed; defaults to each fit's seed");

  CompareOptions cmp;
  auto* compare = app.add_subcommand("compare-families", "DIC and WAIC of the count component across families");
  addDataOptions(compare, cmp.data);
  addModelOptions(compare, cmp.model);
  compare->add_option("--families", cmp.families, "Families, comma separated")->capture_default_str();
  compare->add_option("--forms", cmp.forms, "Structural forms, comma separated; defaults to --form");
  compare->add_option("--count-fit", cmp.countFit, "Reuse the rows and mesh of this count fit");
  compare->add_option("--out", cmp.out, "Output directory")->required();
  compare->add_option("--samples", cmp.samples, "Posterior samples")->capture_default_str();
  compare->add_option("--seed", cmp.seed, "Random seed")->capture_default_str();

  PredictOptions pred;
  auto* predict = app.add_subcommand("predict", "Exceedance probabilities on a grid and per region");
  predict->add_option("--fit-dir", pred.fitDir, "Directory with binary_fit.json and count_fit.json");
  predict->add_option("--binary-fit", pred.binaryFit, "Binary fit artifact");
  predict->add_option("--count-fit", pred.countFit, "Count fit artifact");
  predict->add_option("--regions", pred.regions, "Regions GeoJSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--population", pred.population, "Population CSV")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pred.out, "Output directory")->required();
  predict->add_option("--seed", pred.seed, "Random seed")->required();
  predict->add_option("--threshold", pred.threshold, "Exceedance threshold k: P(count > k)")->capture_default_str();
  predict->add_option("--nx", pred.nx, "Grid columns")->capture_default_str();
  predict->add_option("--ny", pred.ny, "Grid rows")->capture_default_str();
  predict->add_option("--samples", pred.samples, "Posterior samples")->capture_default_str();
  predict->add_option("--years", pred.years, "Years to predict; defaults to the last fitted year");
  predict->add_option("--threads", pred.threads, "Worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    printError("usage", e.what(), subs.empty() ? "" : subs.front()->get_name(), 2);
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "simulate") runSimulate(sim);
    else if (name == "fit") runFit(fitOpts);
    else if (name == "select-threshold") runSelectThreshold(selOpts);
    else if (name == "diagnose") runDiagnose(diag);
    else if (name == "compare-families") runCompare(cmp);
    else if (name == "predict") runPredict(pred);
  } catch (const Error& e) {
    printError("model", e.what(), name, 1);
    return 1;
  } catch (const std::exception& e) {
    printError("runtime", e.what(), name, 1);
    return 1;
  }
  return 0;
}
