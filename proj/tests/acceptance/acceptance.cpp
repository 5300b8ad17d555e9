// Acceptance gate: runs the ten criteria and prints one PASS/FAIL line each.
//
//   acceptance --cli <stzi binary> --sample <dir> --work <dir> [--only 1,5,...]
//
// Tolerances are pinned below; each criterion reports the numbers it used.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stzi/diagnostics.hpp"
#include "stzi/error.hpp"
#include "stzi/fields.hpp"
#include "stzi/hurdle.hpp"
#include "stzi/likelihoods.hpp"
#include "stzi/predict.hpp"
#include "stzi/simulate.hpp"

namespace fs = std::filesystem;
using namespace stzi;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome likelihoodCorrectness() {
  constexpr double kMassTol = 1e-8;
  constexpr double kDerivTol = 1e-5;  // relative, floored at 1
  constexpr double kStep = 1e-5;
  constexpr int kSupport = 20000;
  const std::vector<double> etas{-3.0, -1.5, 0.0, 1.5, 3.0};
  const std::map<Family, std::vector<double>> dispersions{
      {Family::Bernoulli, {0, 0, 0, 0, 0}},
      {Family::Poisson, {0, 0, 0, 0, 0}},
      {Family::NegBinomial, {0.3, 0.7, 1.5, 3.0, 10.0}},
      {Family::GPoisson, {0.0, 0.1, 0.3, 0.6, 1.0}}};

  double worstMass = 0.0, worstDeriv = 0.0;
  bool ok = true;
  for (const auto& [family, ds] : dispersions) {
    const int top = family == Family::Bernoulli ? 1 : kSupport;
    for (double d : ds)
      for (double eta : etas) {
        const FamilySpec f{family, d};
        double s = 0.0;
        for (int y = 0; y <= top; ++y) s += std::exp(logPmf(f, y, eta));
        worstMass = std::max(worstMass, std::fabs(1.0 - s));
        ok = ok && s >= 1.0 - kMassTol;
      }
    for (double d : ds)
      for (int e = 0; e <= 24; ++e) {
        const double eta = -3.0 + 0.25 * e;
        const FamilySpec f{family, d};
        for (int y = 0; y <= std::min(top, 50); ++y) {
          const EtaDerivatives a = dLogPmf(f, y, eta);
          const double fd1 = (logPmf(f, y, eta + kStep) - logPmf(f, y, eta - kStep)) / (2 * kStep);
          const double fd2 = (dLogPmf(f, y, eta + kStep).first - dLogPmf(f, y, eta - kStep).first) / (2 * kStep);
          const double r1 = std::fabs(a.first - fd1) / std::max(1.0, std::fabs(fd1));
          const double r2 = std::fabs(a.second - fd2) / std::max(1.0, std::fabs(fd2));
          worstDeriv = std::max({worstDeriv, r1, r2});
        }
      }
  }
  ok = ok && worstDeriv <= kDerivTol;
  return {ok, "max |1 - sum pmf| = " + fmt("%.2e", worstMass) + " (tol " + fmt("%.0e", kMassTol) +
                  "), max relative derivative error = " + fmt("%.2e", worstDeriv) + " (tol " +
                  fmt("%.0e", kDerivTol) + ")"};
}

// ---------------------------------------------------------------- 2

Outcome spdeFidelity() {
  constexpr double kTol = 0.05;
  constexpr double kRangeCorr = 0.14;
  constexpr int kSamples = 10000;
  constexpr int kPairs = 200;
  const SpdeParams params{0.2, 1.0};
  const std::vector<Point> corners{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  MeshOptions o;
  o.maxEdge = 0.05;
  const Mesh mesh = buildMesh(corners, corners, o);
  const FemMatrices fem = assembleFem(mesh);
  const GmrfSampler sampler(spdePrecision(fem, params).matrix);

  const std::vector<double> fractions{0.25, 0.5, 1.0};
  Rng placement(11);
  std::vector<Point> points;
  for (double f : fractions)
    for (int p = 0; p < kPairs; ++p) {
      const Point a{0.3 + 0.4 * placement.uniform(), 0.3 + 0.4 * placement.uniform()};
      const double angle = 2.0 * std::numbers::pi * placement.uniform();
      const double d = f * params.range;
      points.push_back(a);
      points.push_back({a.lon + d * std::cos(angle), a.lat + d * std::sin(angle)});
    }
  const Projector pr = projectPoints(mesh, points);
  const auto np = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(np), sumSq = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(np / 2);
  Rng rng(12);
  for (int s = 0; s < kSamples; ++s) {
    const Eigen::VectorXd v = pr.matrix * sampler.draw(rng);
    sum += v;
    sumSq += v.cwiseProduct(v);
    for (Eigen::Index k = 0; k < np / 2; ++k) cross[k] += v[2 * k] * v[2 * k + 1];
  }
  bool ok = true;
  std::string detail;
  double atRange = 0.0;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    double corr = 0.0;
    for (int p = 0; p < kPairs; ++p) {
      const Eigen::Index k = static_cast<Eigen::Index>(fi) * kPairs + p;
      const double ma = sum[2 * k] / kSamples, mb = sum[2 * k + 1] / kSamples;
      const double va = sumSq[2 * k] / kSamples - ma * ma, vb = sumSq[2 * k + 1] / kSamples - mb * mb;
      corr += (cross[k] / kSamples - ma * mb) / std::sqrt(va * vb);
    }
    corr /= kPairs;
    const double d = fractions[fi] * params.range;
    const double expected = maternCovariance(d, params) / (params.sigma * params.sigma);
    ok = ok && std::fabs(corr - expected) <= kTol;
    if (fractions[fi] == 1.0) atRange = corr;
    detail += "d=" + fmt("%.2f", fractions[fi]) + "r: " + fmt("%.3f", corr) + " vs " + fmt("%.3f", expected) + "; ";
  }
  ok = ok && std::fabs(atRange - kRangeCorr) <= kTol;
  return {ok, detail + "K=" + std::to_string(mesh.size()) + ", tol " + fmt("%.2f", kTol)};
}

// ---------------------------------------------------------------- 3

// Structured triangulation of an nx x ny vertex lattice on the unit square.
Mesh latticeMesh(int nx, int ny) {
  Mesh m;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) m.vertices.push_back({i / double(nx - 1), j / double(ny - 1)});
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i, b = a + 1, c = a + nx, d = c + 1;
      m.triangles.push_back({a, b, d});
      m.triangles.push_back({a, d, c});
    }
  m.boundary = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  return m;
}

Eigen::MatrixXd denseInverse(const SparseMatrix& q) {
  const Eigen::MatrixXd d(q);
  return d.llt().solve(Eigen::MatrixXd::Identity(d.rows(), d.cols()));
}

Outcome kroneckerExactness() {
  constexpr double kTol = 1e-8;
  double worst = 0.0;
  int cases = 0;
  for (const auto& [nx, ny] : std::vector<std::pair<int, int>>{{2, 2}, {3, 3}, {2, 5}})
    for (int t = 1; t <= 6; ++t)
      for (double rho : {-0.4, 0.0, 0.5, 0.9}) {
        const Mesh mesh = latticeMesh(nx, ny);
        const FemMatrices fem = assembleFem(mesh);
        const int k = mesh.size();
        const SpdeParams sp{0.8, 1.0};
        const SpatioTemporalBuilder builder(fem, t, HyperPriorConfig{}, sp.range, sp.sigma, rho);
        const std::vector<double> internal{std::log(sp.range), std::log(sp.sigma), std::atanh(rho)};
        const Eigen::MatrixXd cov = denseInverse(builder.precision(internal));
        const Eigen::MatrixXd covS = denseInverse(spdePrecision(fem, sp).matrix);
        for (int a = 0; a < t; ++a)
          for (int b = 0; b < t; ++b) {
            const double f = std::pow(rho, std::abs(a - b)) / (1.0 - rho * rho);
            worst = std::max(worst, (cov.block(a * k, b * k, k, k) - f * covS).cwiseAbs().maxCoeff());
          }
        // AR(1) alone with a non-unit precision.
        const double tau = 2.5;
        const Eigen::MatrixXd ar = denseInverse(ar1Precision(t, {rho, tau}).matrix);
        for (int a = 0; a < t; ++a)
          for (int b = 0; b < t; ++b)
            worst = std::max(worst, std::fabs(ar(a, b) - std::pow(rho, std::abs(a - b)) / (tau * (1 - rho * rho))));
        ++cases;
      }
  return {worst <= kTol, std::to_string(cases) + " cases with K<=10, T<=6; max |error| = " + fmt("%.2e", worst) +
                             " (tol " + fmt("%.0e", kTol) + ")"};
}

// ---------------------------------------------------------------- 4

Outcome engineOracle() {
  constexpr double kModeTol = 1e-5, kLogDetTol = 1e-6, kMarginalTol = 1e-4;
  const std::vector<Family> families{Family::Poisson, Family::NegBinomial, Family::GPoisson, Family::Bernoulli};
  const std::vector<StructuralForm> forms{StructuralForm::FormII, StructuralForm::FormI, StructuralForm::Baseline};
  double worstMode = 0.0, worstDet = 0.0, worstMarg = 0.0;
  int maxLatent = 0;
  for (int p = 0; p < 10; ++p) {
    SimulationConfig cfg;
    cfg.n = 300;
    cfg.meshNodes = 20 + 5 * (p % 3);
    cfg.timePoints = 2 + p % 4;
    cfg.seed = 400 + static_cast<std::uint64_t>(p);
    cfg.form = forms[static_cast<std::size_t>(p) % forms.size()];
    const Family fam = families[static_cast<std::size_t>(p) % families.size()];
    const double dispersion = fam == Family::NegBinomial ? 1.5 : (fam == Family::GPoisson ? 0.2 : 0.0);
    cfg.family = {fam == Family::Bernoulli ? Family::Poisson : fam, dispersion};
    cfg.zeroInflation = false;
    const SimulatedData sim = simulateDataset(cfg);
    ComponentConfig cc;
    cc.form = cfg.form;
    cc.family = {fam, dispersion};
    const std::vector<std::int64_t> y = fam == Family::Bernoulli ? makeBinary(sim.data.y) : sim.data.y;
    const ModelSpec spec = buildComponentSpec(sim.data, sim.context, cc, y);
    const LatentModel model = assemble(spec);
    maxLatent = std::max(maxLatent, model.latentDimension() - model.fixedDimension());
    Eigen::VectorXd hyper = model.initialHyper();
    Rng jitter(900 + static_cast<std::uint64_t>(p));
    for (Eigen::Index i = 0; i < hyper.size(); ++i) hyper[i] += 0.3 * (jitter.uniform() - 0.5);
    const DenseReference ref = denseReferenceFit(spec, hyper);
    LaplaceWorkspace ws;
    const LaplaceEvaluation ev = evaluateLaplace(model, asSpan(hyper), ws);
    worstMode = std::max(worstMode, (ev.inner.mode - ref.fit.latentMode).cwiseAbs().maxCoeff());
    worstDet = std::max(worstDet, std::fabs(ev.inner.logDetPosterior - ref.logDetPosterior));
    worstMarg = std::max(worstMarg, std::fabs(ev.logMarginal - ref.logMarginal));
  }
  const bool ok = worstMode <= kModeTol && worstDet <= kLogDetTol && worstMarg <= kMarginalTol;
  return {ok, "10 problems, largest K*T = " + std::to_string(maxLatent) + "; mode " + fmt("%.1e", worstMode) +
                  ", log det " + fmt("%.1e", worstDet) + ", log marginal " + fmt("%.1e", worstMarg) + " (tol " +
                  fmt("%.0e", kModeTol) + "/" + fmt("%.0e", kLogDetTol) + "/" + fmt("%.0e", kMarginalTol) + ")"};
}

// ---------------------------------------------------------------- 5 and 7

struct Replicate {
  int covered = 0, coefficients = 0;
  double xi = 0, range = 0, sigma = 0;
  double chosenC = 0;
  double accuracy = 0;
  bool boundaries = false;
};

Eigen::VectorXd marginalSd(const FitResult& fit, int count) {
  Eigen::SimplicialLLT<SparseMatrix> llt(fit.latentPrecision);
  Eigen::VectorXd sd(count);
  for (int j = 0; j < count; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(fit.latentMode.size());
    e[j] = 1.0;
    sd[j] = std::sqrt(llt.solve(e)[j]);
  }
  return sd;
}

double hyperValue(const FitResult& fit, const std::string& name) {
  const auto& names = fit.hyper.names;
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw stzi::Error("fit has no hyperparameter " + name);
  return fit.hyper.naturalMode[static_cast<std::size_t>(it - names.begin())];
}

std::vector<Replicate> recoveryReplicates(int count) {
  std::vector<Replicate> out;
  for (int r = 0; r < count; ++r) {
    SimulationConfig cfg;
    cfg.n = 2000;
    cfg.meshNodes = 30;
    cfg.timePoints = 5;
    cfg.form = StructuralForm::FormII;
    cfg.family = {Family::NegBinomial, 1.5};
    cfg.seed = 1000 + static_cast<std::uint64_t>(r);
    const SimulatedData sim = simulateDataset(cfg);

    PipelineConfig pc;
    pc.binary.form = pc.count.form = StructuralForm::FormII;
    pc.count.useOffset = false;
    pc.piSamples = 10000;
    pc.gridCap = 21;
    pc.threshold.waicSamples = 1000;
    pc.seed = 50 + static_cast<std::uint64_t>(r);
    const SequentialFit fit = fitSequential(sim.data, sim.context, pc);

    Replicate rep;
    const FitResult& cf = fit.count.fit;
    const Eigen::VectorXd sd = marginalSd(cf, 5);
    for (int j = 0; j < 5; ++j) {
      ++rep.coefficients;
      rep.covered += std::fabs(cf.latentMode[j] - sim.truth.beta[static_cast<std::size_t>(j)]) <= 3.0 * sd[j];
    }
    rep.xi = hyperValue(cf, "xi");
    rep.range = hyperValue(cf, "range_phi");
    rep.sigma = hyperValue(cf, "sigma_phi");
    rep.chosenC = fit.selection.chosen;

    const CountOutcome& o = fit.selection.outcome;
    std::size_t zeros = 0, right = 0;
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      if (sim.data.y[i] != 0) continue;
      ++zeros;
      right += (o.z1[i] == kStructuralZero) == static_cast<bool>(sim.truth.structuralZero[i]);
    }
    rep.accuracy = zeros > 0 ? static_cast<double>(right) / zeros : 1.0;

    // c = 0 keeps every zero; c = 1 drops exactly the zeros with piTilde < 1.
    const CountOutcome none = classifyZeros(sim.data.y, fit.piTilde, 0.0);
    const CountOutcome all = classifyZeros(sim.data.y, fit.piTilde, 1.0);
    bool b = none.structuralZeros == 0 && none.countZeros == zeros && none.rows.size() == sim.data.size();
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      const bool na = sim.data.y[i] == 0 && fit.piTilde[i] < 1.0;
      b = b && ((all.z1[i] == kStructuralZero) == na) && (none.z1[i] == sim.data.y[i]);
    }
    rep.boundaries = b;
    out.push_back(rep);
    std::cout << "  replicate " << r << ": c=" << fmt("%.4f", rep.chosenC) << " xi=" << fmt("%.3f", rep.xi)
              << " range=" << fmt("%.3f", rep.range) << " sigma=" << fmt("%.3f", rep.sigma) << " covered "
              << rep.covered << "/5 accuracy " << fmt("%.3f", rep.accuracy) << std::endl;
  }
  return out;
}

Outcome parameterRecovery(const std::vector<Replicate>& reps, double elapsed) {
  constexpr double kCoverage = 0.9, kShare = 0.9, kLogXiTol = 0.15, kFactor = 2.0, kBudget = 1800.0;
  const double xiTrue = 1.5, rangeTrue = 0.5, sigmaTrue = 0.8;
  int covered = 0, total = 0, xiOk = 0, rangeOk = 0, sigmaOk = 0;
  double worstLogXi = 0.0;
  for (const Replicate& r : reps) {
    covered += r.covered;
    total += r.coefficients;
    const double dx = std::fabs(std::log(r.xi / xiTrue));
    worstLogXi = std::max(worstLogXi, dx);
    xiOk += dx <= kLogXiTol;
    rangeOk += r.range >= rangeTrue / kFactor && r.range <= rangeTrue * kFactor;
    sigmaOk += r.sigma >= sigmaTrue / kFactor && r.sigma <= sigmaTrue * kFactor;
  }
  const double n = static_cast<double>(reps.size());
  const double coverage = static_cast<double>(covered) / total;
  const bool ok = coverage >= kCoverage && xiOk / n >= kShare && rangeOk / n >= kShare && sigmaOk / n >= kShare &&
                  elapsed < kBudget;
  return {ok, "coverage " + fmt("%.2f", coverage) + " (>= 0.90); xi within 0.15 log in " + std::to_string(xiOk) + "/" +
                  std::to_string(reps.size()) + " (worst " + fmt("%.3f", worstLogXi) + "); range within x2 in " +
                  std::to_string(rangeOk) + ", sigma in " + std::to_string(sigmaOk) + " (need >= 90% each); " +
                  fmt("%.0f", elapsed) + " s (< 1800)"};
}

Outcome thresholdMechanism(const std::vector<Replicate>& reps) {
  constexpr double kAccuracy = 0.9;
  double mean = 0.0, worst = 1.0;
  bool boundaries = true;
  for (const Replicate& r : reps) {
    mean += r.accuracy / static_cast<double>(reps.size());
    worst = std::min(worst, r.accuracy);
    boundaries = boundaries && r.boundaries;
  }
  return {mean >= kAccuracy && boundaries, "mean structural-zero accuracy " + fmt("%.3f", mean) + " (>= 0.90, worst " +
                                               fmt("%.3f", worst) + "); c=0/c=1 semantics " +
                                               (boundaries ? "exact" : "VIOLATED")};
}

// ---------------------------------------------------------------- 6

Outcome modelSelection() {
  constexpr int kReps = 20;
  constexpr double kFamilyShare = 0.95, kFormShare = 0.9;
  int familyWins = 0, formWins = 0;
  for (int r = 0; r < kReps; ++r) {
    SimulationConfig cfg;
    cfg.n = 2000;
    cfg.meshNodes = 30;
    cfg.timePoints = 5;
    cfg.form = StructuralForm::FormII;
    cfg.family = {Family::NegBinomial, 1.5};
    cfg.zeroInflation = false;
    cfg.seed = 2000 + static_cast<std::uint64_t>(r);
    const SimulatedData sim = simulateDataset(cfg);
    auto waicOf = [&](StructuralForm form, Family fam, std::uint64_t stream) {
      ComponentConfig cc;
      cc.form = form;
      cc.family = {fam, fam == Family::Poisson ? 0.0 : 1.0};
      const ModelSpec spec = buildComponentSpec(sim.data, sim.context, cc, sim.data.y);
      const LatentModel model = assemble(spec);
      const FitResult fit = optimizeHyper(model);
      return assessFit(model, fit, 1000, mixSeed(cfg.seed, stream)).waic.waic;
    };
    const double nb = waicOf(StructuralForm::FormII, Family::NegBinomial, 1);
    const double pois = waicOf(StructuralForm::FormII, Family::Poisson, 2);
    const double gp = waicOf(StructuralForm::FormII, Family::GPoisson, 3);
    const double formI = waicOf(StructuralForm::FormI, Family::NegBinomial, 4);
    const double base = waicOf(StructuralForm::Baseline, Family::NegBinomial, 5);
    familyWins += nb < pois && nb < gp;
    formWins += nb < formI && nb < base;
    std::cout << "  replicate " << r << ": WAIC NB " << fmt("%.1f", nb) << ", Poisson " << fmt("%.1f", pois)
              << ", GPoisson " << fmt("%.1f", gp) << ", form I " << fmt("%.1f", formI) << ", baseline "
              << fmt("%.1f", base) << std::endl;
  }
  const bool ok = familyWins >= kFamilyShare * kReps && formWins >= kFormShare * kReps;
  return {ok, "NB lowest WAIC in " + std::to_string(familyWins) + "/20 (need >= 19); form II lowest in " +
                  std::to_string(formWins) + "/20 (need >= 18)"};
}

// ---------------------------------------------------------------- 8

Outcome exceedanceCalibration() {
  constexpr double kTol = 0.005;
  constexpr int kSamples = 10000;
  const FamilySpec pois{Family::Poisson, 0.0};
  double worst = 0.0;
  bool monotone = true;
  for (double eta : {-1.0, 0.0, 1.0, 2.0, 3.0}) {
    const std::vector<double> samples(kSamples, eta);
    double previous = 1.0;
    for (int k : {0, 1, 2, 3, 5, 10, 20, 30}) {
      Rng rng(77);  // common random numbers across k
      const double p = exceedanceProbability(samples, pois, EventSet::CountAbove, k, rng);
      const double exact = 1.0 - familyCdf(pois, k, eta);
      worst = std::max(worst, std::fabs(p - exact));
      monotone = monotone && p <= previous;
      previous = p;
    }
  }
  return {worst <= kTol && monotone, "max |MC - analytic tail| = " + fmt("%.4f", worst) + " at 1e4 samples (tol 0.005); " +
                                         (monotone ? "monotone in k" : "NOT monotone in k")};
}

// ---------------------------------------------------------------- CLI helpers

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

struct Cli {
  fs::path binary;
  fs::path log;

  bool run(const std::string& args) const {
    const std::string cmd = quote(binary) + " " + args + " >> " + quote(log) + " 2>&1";
    std::ofstream(log, std::ios::app) << "$ stzi " << args << "\n";
    return std::system(cmd.c_str()) == 0;
  }
};

std::uint64_t fnv1a(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// Hashes of every artifact under dir except run timings.
std::map<std::string, std::uint64_t> artifactHashes(const fs::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "timings.json")
      out[fs::relative(e.path(), dir).string()] = fnv1a(e.path());
  return out;
}

// ---------------------------------------------------------------- 9

Outcome determinism(const Cli& cli, const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  bool ran = true;
  std::string failed;
  auto step = [&](const std::string& args) {
    if (!cli.run(args)) {
      ran = false;
      if (failed.empty()) failed = args.substr(0, args.find(' '));
    }
  };
  const std::string small = " --pi-samples 2000 --waic-samples 200 --adequacy-samples 200 --grid-cap 5";
  for (const std::string run : {"a", "b"}) {
    const fs::path d = root / run;
    const std::string threads = run == "a" ? " --threads 1" : " --threads 3";
    step("simulate --kind sample --events 1500 --first-year 2018 --last-year 2022 --seed 5 --out " + quote(d / "data"));
    step("simulate --kind hurdle --n 400 --nodes 15 --time-points 3 --seed 5 --out " + quote(d / "hurdle"));
    const std::string data = " --events " + quote(d / "data/events.csv") + " --regions " +
                             quote(d / "data/regions.geojson") + " --population " + quote(d / "data/population.csv");
    step("fit" + data + small + threads + " --seed 9 --out " + quote(d / "fit"));
    step("fit" + data + small + threads + " --binary-only --seed 9 --out " + quote(d / "stage1"));
    step("select-threshold" + data + " --waic-samples 200 --adequacy-samples 200 --grid-cap 5" + threads +
         " --binary-fit " + quote(d / "stage1/binary_fit.json") + " --out " + quote(d / "stage1"));
    step("diagnose" + data + " --samples 200 --fit " + quote(d / "fit/binary_fit.json") + " " +
         quote(d / "fit/count_fit.json") + " --out " + quote(d / "diag"));
    step("compare-families" + data + " --samples 200 --seed 4 --count-fit " + quote(d / "fit/count_fit.json") +
         " --out " + quote(d / "compare"));
    step("predict --fit-dir " + quote(d / "fit") + " --regions " + quote(d / "data/regions.geojson") +
         " --population " + quote(d / "data/population.csv") + " --nx 30 --ny 30 --samples 1000 --seed 8" + threads +
         " --out " + quote(d / "pred"));
  }
  if (!ran) return {false, "a subcommand failed (" + failed + "); see " + cli.log.string()};
  const auto a = artifactHashes(root / "a"), b = artifactHashes(root / "b");
  std::vector<std::string> differ;
  for (const auto& [name, h] : a)
    if (!b.count(name) || b.at(name) != h) differ.push_back(name);
  if (a.size() != b.size()) differ.push_back("(file sets differ)");
  std::string detail = std::to_string(a.size()) + " artifacts from simulate, fit, select-threshold, diagnose, "
                       "compare-families, predict; threads 1 vs 3";
  if (!differ.empty()) detail += "; differing: " + differ.front() + (differ.size() > 1 ? " and more" : "");
  return {differ.empty() && !a.empty(), detail};
}

// ---------------------------------------------------------------- 10

std::string firstLine(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t dataRows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

json readJson(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// Returns an empty string when every artifact has the expected shape.
std::string validateArtifacts(const fs::path& fit, const fs::path& diag, const fs::path& pred) {
  for (const char* name : {"binary_fit.json", "count_fit.json"}) {
    const json j = readJson(fit / name);
    if (j.value("schema", "") != "stzi.fit" || !j.contains("latent_mode") || !j.contains("hyper"))
      return std::string(name) + " lacks the fit schema";
  }
  const json report = readJson(fit / "threshold_report.json");
  if (report.value("schema", "") != "stzi.threshold-report" || !report.contains("chosen_c") ||
      !report["table"].is_array() || report["table"].empty())
    return "threshold_report.json is malformed";
  if (firstLine(fit / "pi_tilde.csv") != "index,pi_tilde") return "pi_tilde.csv header";
  for (const char* comp : {"binary", "count"}) {
    const json a = readJson(diag / (std::string("adequacy_") + comp + ".json"));
    if (a.value("schema", "") != "stzi.adequacy" || !a.contains("waic") || !a.contains("dic") ||
        a["pit_histogram"].size() != 10)
      return std::string("adequacy_") + comp + ".json is malformed";
    if (firstLine(diag / (std::string("adequacy_") + comp + ".csv")) != "index,y,cpo,log_cpo,pit")
      return std::string("adequacy_") + comp + ".csv header";
  }

  const json manifest = readJson(pred / "manifest.json");
  if (manifest.value("schema", "") != "stzi.prediction") return "manifest.json schema";
  const fs::path grid = pred / "exceedance_grid.csv";
  if (firstLine(grid).rfind("lon,lat,year,p_occur,p_exceed", 0) != 0) return "exceedance_grid.csv header";
  const std::size_t expected = manifest["cells_per_year"].get<std::size_t>() * manifest["years"].size();
  if (dataRows(grid) != expected || manifest["rows"].get<std::size_t>() != expected)
    return "exceedance_grid.csv has " + std::to_string(dataRows(grid)) + " rows, expected " + std::to_string(expected);
  std::ifstream in(grid);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> f;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 5) return "short grid row";
    const double po = std::stod(f[3]), pe = std::stod(f[4]);
    if (!(po >= 0 && po <= 1 && pe >= 0 && pe <= 1)) return "grid probabilities out of range: " + line;
  }
  const json geo = readJson(pred / "region_summary.geojson");
  if (geo.value("type", "") != "FeatureCollection" || geo["features"].empty()) return "region GeoJSON type";
  for (const auto& f : geo["features"]) {
    if (f.value("type", "") != "Feature" || !f.contains("geometry") || !f["properties"].contains("name") ||
        !f["properties"].contains("p_exceed"))
      return "region GeoJSON feature";
    const std::string gt = f["geometry"].value("type", "");
    if (gt != "Polygon" && gt != "MultiPolygon") return "region geometry type " + gt;
  }
  return "";
}

Outcome endToEnd(const Cli& cli, const fs::path& sample, const fs::path& work) {
  constexpr double kBudget = 600.0;
  const fs::path root = work / "end_to_end";
  fs::remove_all(root);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string data = " --events " + quote(sample / "events.csv") + " --regions " +
                           quote(sample / "regions.geojson") + " --population " + quote(sample / "population.csv");
  std::vector<std::pair<std::string, std::string>> steps{
      {"simulate", "simulate --kind sample --seed 2022 --out " + quote(root / "sample")},
      {"fit", "fit" + data + " --binary-only --seed 2022 --out " + quote(root / "fit")},
      {"select-threshold",
       "select-threshold" + data + " --binary-fit " + quote(root / "fit/binary_fit.json") + " --out " + quote(root / "fit")},
      {"diagnose", "diagnose" + data + " --fit " + quote(root / "fit/binary_fit.json") + " " +
                       quote(root / "fit/count_fit.json") + " --out " + quote(root / "diag")},
      {"predict", "predict --fit-dir " + quote(root / "fit") + " --regions " + quote(sample / "regions.geojson") +
                      " --population " + quote(sample / "population.csv") + " --seed 2022 --out " + quote(root / "pred")}};
  std::string timing;
  for (const auto& [name, args] : steps) {
    const auto ts = std::chrono::steady_clock::now();
    if (!cli.run(args)) return {false, name + " failed; see " + cli.log.string()};
    timing += name + " " + fmt("%.0f", seconds(ts)) + " s, ";
  }
  const double elapsed = seconds(t0);
  // The regenerated sample must be the shipped one.
  for (const char* f : {"events.csv", "regions.geojson", "population.csv"})
    if (fnv1a(root / "sample" / f) != fnv1a(sample / f))
      return {false, std::string("regenerated ") + f + " differs from the shipped sample"};
  const std::string problem = validateArtifacts(root / "fit", root / "diag", root / "pred");
  const bool ok = problem.empty() && elapsed < kBudget;
  return {ok, timing + "total " + fmt("%.0f", elapsed) + " s (< 600); artifacts " +
                  (problem.empty() ? "schema-valid" : "INVALID: " + problem)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cliPath, samplePath, workPath = "acceptance_work", only;
  app.add_option("--cli", cliPath, "Path to the stzi binary")->required();
  app.add_option("--sample", samplePath, "Shipped synthetic sample directory")->required();
  app.add_option("--work", workPath, "Scratch directory");
  app.add_option("--only", only, "Comma-separated criterion numbers");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) selected.insert(std::stoi(item));
  }
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  const fs::path work = fs::absolute(workPath);
  fs::create_directories(work);
  const Cli cli{fs::absolute(cliPath), work / "cli.log"};
  fs::remove(cli.log);

  int failures = 0;
  std::vector<std::string> lines;
  auto record = [&](int id, const std::string& name, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " (" + name +
                             "): " + o.detail + " [" + fmt("%.1f", seconds(t0)) + " s]";
    std::cout << line << std::endl;
    lines.push_back(line);
    failures += !o.pass;
  };

  record(1, "likelihood correctness", likelihoodCorrectness);
  record(2, "SPDE fidelity", spdeFidelity);
  record(3, "AR(1)/Kronecker exactness", kroneckerExactness);
  record(4, "engine-oracle equivalence", engineOracle);
  std::vector<Replicate> reps;
  double recoverySeconds = 0.0;
  if (wanted(5) || wanted(7)) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      reps = recoveryReplicates(20);
    } catch (const std::exception& e) {
      std::cout << "  recovery replicates failed: " << e.what() << std::endl;
    }
    recoverySeconds = seconds(t0);
  }
  record(5, "parameter recovery", [&] {
    if (reps.size() != 20) return Outcome{false, "replicates did not complete"};
    return parameterRecovery(reps, recoverySeconds);
  });
  record(6, "model selection", modelSelection);
  record(7, "threshold mechanism", [&] {
    if (reps.size() != 20) return Outcome{false, "replicates did not complete"};
    return thresholdMechanism(reps);
  });
  record(8, "exceedance calibration", exceedanceCalibration);
  record(9, "determinism", [&] { return determinism(cli, work); });
  record(10, "end-to-end", [&] { return endToEnd(cli, fs::absolute(samplePath), work); });

  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << "  " << l.substr(0, l.find(':')) << '\n';
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
