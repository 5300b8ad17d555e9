#include <cmath>
#include <sstream>

#include "doctest.h"
#include "stzi/error.hpp"
#include "stzi/hurdle.hpp"
#include "stzi/simulate.hpp"

using namespace stzi;

namespace {

// Intercept-only Bernoulli model over n observations with a fixed Gaussian
// posterior N(mean, sd^2) on the intercept.
struct InterceptFit {
  LatentModel model;
  FitResult fit;
};

InterceptFit interceptFit(int n, double mean, double sd) {
  ModelSpec spec;
  spec.design = SparseRowMatrix(Eigen::MatrixXd::Ones(n, 1).sparseView());
  spec.designNames = {"intercept"};
  spec.offset = Eigen::VectorXd::Zero(n);
  spec.response.assign(static_cast<std::size_t>(n), 0);
  spec.family = {Family::Bernoulli, 0.0};
  InterceptFit r{assemble(spec), {}};
  r.fit.latentMode = Eigen::VectorXd::Constant(1, mean);
  r.fit.latentPrecision.resize(1, 1);
  r.fit.latentPrecision.insert(0, 0) = 1.0 / (sd * sd);
  return r;
}

// E[logistic(Z)], Z ~ N(mean, sd^2), by the trapezoid rule on +-10 sd.
double logisticNormalMean(double mean, double sd) {
  const int m = 20000;
  double acc = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double z = -10.0 + 20.0 * k / m;
    const double w = (k == 0 || k == m) ? 0.5 : 1.0;
    acc += w * std::exp(-0.5 * z * z) / (1.0 + std::exp(-(mean + sd * z)));
  }
  return acc * (20.0 / m) / std::sqrt(2.0 * M_PI);
}

}  // namespace

TEST_CASE("makeBinary") {
  CHECK(makeBinary({0, 3, 0, 1}) == std::vector<std::int64_t>{0, 1, 0, 1});
  CHECK(makeBinary({0, 0, 0}) == std::vector<std::int64_t>{0, 0, 0});
  const auto z = makeBinary({0, 1172, 2});
  CHECK(z[1] == 1);
  CHECK_THROWS_AS(makeBinary({1, -1}), Error);
}

TEST_CASE("classifyZeros follows the threshold rule") {
  const std::vector<std::int64_t> y{0, 0, 7, 0, 0};
  const std::vector<double> pi{0.995, 0.5, 0.01, 1.0, 0.0};
  const CountOutcome a = classifyZeros(y, pi, 0.99055);
  CHECK(a.z1 == std::vector<std::int64_t>{0, kStructuralZero, 7, 0, kStructuralZero});
  CHECK(a.rows == std::vector<std::size_t>{0, 2, 3});
  CHECK(a.structuralZeros + a.countZeros == 4);

  const CountOutcome none = classifyZeros(y, pi, 0.0);
  CHECK(none.structuralZeros == 0);
  CHECK(none.countZeros == 4);
  const CountOutcome all = classifyZeros(y, pi, 1.0);
  CHECK(all.z1 == std::vector<std::int64_t>{kStructuralZero, kStructuralZero, 7, 0, kStructuralZero});
  CHECK(all.countZeros == 1);

  CHECK_THROWS_AS(classifyZeros(y, pi, 1.5), Error);
  CHECK_THROWS_AS(classifyZeros(y, {0.5}, 0.5), Error);
}

TEST_CASE("predictPiTilde") {
  const InterceptFit flat = interceptFit(3, 0.0, 1e-6);
  for (double p : predictPiTilde(flat.model, flat.fit, 10000, 1)) CHECK(std::abs(p - 0.5) < 0.01);

  const InterceptFit a = interceptFit(2, 0.5, 1.0), b = interceptFit(2, 0.9, 1.0);
  const auto pa = predictPiTilde(a.model, a.fit, 10000, 7);
  const auto pb = predictPiTilde(b.model, b.fit, 10000, 7);
  CHECK(pb[0] > pa[0]);
  CHECK(pb[1] > pa[1]);
  // Monte Carlo error well inside the binomial bound 1/(2 sqrt(S)) = 0.005.
  CHECK(std::abs(pa[0] - logisticNormalMean(0.5, 1.0)) < 0.005);
  CHECK(predictPiTilde(a.model, a.fit, 10000, 7) == pa);
}

TEST_CASE("default threshold grid") {
  const std::vector<std::int64_t> y{0, 0, 3, 0, 0};
  const std::vector<double> pi{0.3, 0.7, 0.2, 0.3, 1.0};
  CHECK(defaultThresholdGrid(y, pi) == std::vector<double>{0.0, 0.3, 0.7, 1.0});

  std::vector<std::int64_t> many(1000, 0);
  std::vector<double> pis(1000);
  for (int i = 0; i < 1000; ++i) pis[static_cast<std::size_t>(i)] = (i + 0.5) / 1000.0;
  const auto g = defaultThresholdGrid(many, pis, 201);
  CHECK(g.size() == 201);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 1.0);
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(g[1] == pis.front());
  CHECK(g[199] == pis.back());
}

TEST_CASE("threshold selection on data without zeros") {
  SimulationConfig cfg;
  cfg.n = 300;
  cfg.meshNodes = 12;
  cfg.timePoints = 2;
  cfg.zeroInflation = false;
  cfg.family = {Family::Poisson, 0.0};
  cfg.beta = {2.0, 0.0, 0.0, 0.0, 0.0};
  SimulatedData sim = simulateDataset(cfg);
  for (auto& v : sim.data.y) v = std::max<std::int64_t>(v, 1);
  ComponentConfig cc;
  cc.family = cfg.family;
  cc.form = StructuralForm::Baseline;
  const ModelSpec spec = buildComponentSpec(sim.data, sim.context, cc, sim.data.y);
  ThresholdOptions opts;
  opts.waicSamples = 200;
  opts.seed = 4;
  const std::vector<double> pi(sim.data.size(), 0.5);
  const ThresholdSelection sel = selectThreshold(sim.data.y, pi, spec, {1.0, 0.0}, opts);
  REQUIRE(sel.table.size() == 2);
  CHECK(sel.table[0].waic.waic == sel.table[1].waic.waic);
  CHECK(sel.chosen == 0.0);
  CHECK(sel.table[1].reused);
}

TEST_CASE("sequential fit on simulated hurdle data") {
  SimulationConfig cfg;
  cfg.n = 500;
  cfg.meshNodes = 15;
  cfg.timePoints = 3;
  cfg.seed = 11;
  const SimulatedData sim = simulateDataset(cfg);
  PipelineConfig pc;
  pc.seed = 5;
  pc.piSamples = 2000;
  pc.gridCap = 8;
  pc.threshold.waicSamples = 200;
  pc.count.useOffset = false;
  const SequentialFit fit = fitSequential(sim.data, sim.context, pc);
  const auto& sel = fit.selection;
  CHECK(sel.grid.size() <= 8);
  CHECK(std::find(sel.grid.begin(), sel.grid.end(), sel.chosen) != sel.grid.end());
  for (const auto& c : sel.table) {
    REQUIRE(c.ok);
    CHECK(sel.table[sel.chosenIndex].waic.waic <= c.waic.waic);
  }
  // Candidates with equal classifications share a WAIC.
  for (std::size_t a = 0; a < sel.table.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (sel.table[a].structuralZeros == sel.table[b].structuralZeros)
        CHECK(sel.table[a].waic.waic == sel.table[b].waic.waic);
  CHECK(fit.count.threshold.value() == sel.chosen);
  CHECK(fit.count.rows.size() == sim.data.size() - sel.outcome.structuralZeros);
  for (std::size_t r : fit.count.rows) CHECK(sel.outcome.z1[r] != kStructuralZero);

  const SequentialFit again = fitSequential(sim.data, sim.context, pc);
  CHECK(again.selection.chosen == sel.chosen);
  CHECK((again.count.fit.latentMode - fit.count.fit.latentMode).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(again.piTilde == fit.piTilde);
  std::ostringstream r1, r2;
  writeThresholdReport(r1, sel, pc);
  writeThresholdReport(r2, again.selection, pc);
  CHECK(r1.str() == r2.str());

  pc.threshold.threads = 3;
  const SequentialFit threaded = fitSequential(sim.data, sim.context, pc);
  std::ostringstream r3;
  writeThresholdReport(r3, threaded.selection, pc);
  CHECK(r3.str() == r1.str());
}

TEST_CASE("sequential fit without zeros skips the binary part") {
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.meshNodes = 12;
  cfg.timePoints = 2;
  SimulatedData sim = simulateDataset(cfg);
  for (auto& v : sim.data.y) v = 5;
  PipelineConfig pc;
  pc.threshold.waicSamples = 100;
  pc.count.useOffset = false;
  const SequentialFit fit = fitSequential(sim.data, sim.context, pc);
  CHECK(fit.binaryDegenerate);
  CHECK(fit.count.rows.size() == 200);
  CHECK(fit.selection.outcome.structuralZeros == 0);
}
