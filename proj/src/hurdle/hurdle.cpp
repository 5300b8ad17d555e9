#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <set>

#include "json.hpp"
#include "stzi/error.hpp"
#include "stzi/hurdle.hpp"
#include "stzi/kernels.hpp"
#include "stzi/parallel.hpp"

namespace stzi {

namespace {

constexpr int kBatch = 250;

// Seed streams derived from the pipeline seed.
constexpr std::uint64_t kStreamPiTilde = 1;
constexpr std::uint64_t kStreamWaic = 2;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

std::vector<std::int64_t> makeBinary(const std::vector<std::int64_t>& y) {
  std::vector<std::int64_t> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) throw Error("counts must be non-negative (index " + std::to_string(i) + ")");
    z[i] = y[i] > 0 ? 1 : 0;
  }
  return z;
}

CountOutcome classifyZeros(const std::vector<std::int64_t>& y, const std::vector<double>& piTilde, double c) {
  if (piTilde.size() != y.size()) throw Error("piTilde length does not match the counts");
  if (!(c >= 0.0 && c <= 1.0)) throw Error("threshold c must lie in [0, 1]");
  CountOutcome out;
  out.z1.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 0) {
      out.z1[i] = y[i];
    } else if (piTilde[i] >= c) {
      out.z1[i] = 0;
      ++out.countZeros;
    } else {
      out.z1[i] = kStructuralZero;
      ++out.structuralZeros;
      continue;
    }
    out.rows.push_back(i);
  }
  return out;
}

std::vector<double> predictPiTilde(const LatentModel& binary, const FitResult& fit, int samples, std::uint64_t seed) {
  if (samples < 1) throw Error("piTilde needs at least one posterior sample");
  const auto n = static_cast<Eigen::Index>(binary.observations());
  const SparseMatrix jt = binary.jointTransposed();
  PosteriorSampler sampler(fit, seed);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  for (int done = 0; done < samples; done += kBatch) {
    const int b = std::min(kBatch, samples - done);
    const Eigen::MatrixXd x = sampler.next(b);
    // b x n: column i holds the samples of eta_i contiguously.
    Eigen::MatrixXd eta = (x.transpose() * jt).eval();
    eta.rowwise() += binary.offset().transpose();
    for (Eigen::Index i = 0; i < n; ++i)
      total[i] += static_cast<double>(b) * kernels::logisticMean({eta.data() + i * b, static_cast<std::size_t>(b)});
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::clamp(total[i] / samples, 0.0, 1.0);
  return out;
}

std::vector<double> defaultThresholdGrid(const std::vector<std::int64_t>& y, const std::vector<double>& piTilde,
                                         int cap) {
  if (piTilde.size() != y.size()) throw Error("piTilde length does not match the counts");
  if (cap < 2) throw Error("threshold grid cap must be at least 2");
  std::set<double> inner;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == 0 && piTilde[i] > 0.0 && piTilde[i] < 1.0) inner.insert(piTilde[i]);
  std::vector<double> values(inner.begin(), inner.end());
  std::vector<double> grid{0.0};
  const auto room = static_cast<std::size_t>(cap - 2);
  if (values.size() <= room) {
    grid.insert(grid.end(), values.begin(), values.end());
  } else if (room > 0) {
    std::set<std::size_t> picks;
    for (std::size_t j = 0; j < room; ++j) {
      const double q = room == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(room - 1);
      picks.insert(static_cast<std::size_t>(std::llround(q * static_cast<double>(values.size() - 1))));
    }
    for (std::size_t k : picks) grid.push_back(values[k]);
  }
  grid.push_back(1.0);
  return grid;
}

ThresholdSelection selectThreshold(const std::vector<std::int64_t>& y, const std::vector<double>& piTilde,
                                   const ModelSpec& countSpec, const std::vector<double>& gridIn,
                                   const ThresholdOptions& options) {
  if (gridIn.empty()) throw Error("threshold grid is empty");
  for (double c : gridIn)
    if (!(c >= 0.0 && c <= 1.0)) throw Error("threshold grid values must lie in [0, 1]");
  if (countSpec.response.size() != y.size()) throw Error("count specification does not match the counts");
  if (std::none_of(y.begin(), y.end(), [](std::int64_t v) { return v > 0; }))
    throw Error("no positive counts: the count component cannot be scored");

  ThresholdSelection sel;
  sel.grid = gridIn;
  std::sort(sel.grid.begin(), sel.grid.end());
  sel.grid.erase(std::unique(sel.grid.begin(), sel.grid.end()), sel.grid.end());
  const std::size_t g = sel.grid.size();
  sel.table.resize(g);

  std::vector<CountOutcome> outcomes(g);
  std::map<std::size_t, std::size_t> firstWithCount;  // structural zero count -> first candidate
  std::vector<std::size_t> source(g);
  for (std::size_t k = 0; k < g; ++k) {
    outcomes[k] = classifyZeros(y, piTilde, sel.grid[k]);
    sel.table[k].c = sel.grid[k];
    sel.table[k].structuralZeros = outcomes[k].structuralZeros;
    sel.table[k].countZeros = outcomes[k].countZeros;
    // NA sets are nested in c, so equal counts mean equal classifications.
    const auto [it, inserted] = firstWithCount.emplace(outcomes[k].structuralZeros, k);
    source[k] = it->second;
    sel.table[k].reused = !inserted;
  }

  const std::uint64_t waicSeed = options.seed;
  std::mutex bestMutex;
  bool haveBest = false;
  double bestWaic = 0.0;
  std::size_t bestIndex = 0;
  FitResult bestFit;

  auto fitOne = [&](std::size_t k, const Eigen::VectorXd* hyperInit, const Eigen::VectorXd* latentInit, double step,
                    FitResult* keep) {
    ThresholdCandidate& cand = sel.table[k];
    try {
      const ModelSpec sub = subsetRows(countSpec, outcomes[k].rows);
      const LatentModel model = assemble(sub);
      OptimizerOptions opts = options.optimizer;
      opts.initialStep = step;
      const Eigen::VectorXd init = hyperInit ? *hyperInit : model.initialHyper();
      FitResult fit = optimizeHyper(model, init, opts, latentInit);
      const Eigen::MatrixXd draws = samplePosterior(fit, options.waicSamples, waicSeed);
      const Eigen::MatrixXd ll = logLikelihoodSamples(model, fit, draws);
      std::vector<bool> positive(outcomes[k].rows.size());
      for (std::size_t r = 0; r < positive.size(); ++r) positive[r] = y[outcomes[k].rows[r]] > 0;
      cand.waic = computeWaic(ll, positive);
      cand.logMarginal = fit.logMarginal;
      cand.evaluations = fit.evaluations;
      cand.ok = true;
      {
        std::lock_guard<std::mutex> lock(bestMutex);
        if (!haveBest || cand.waic.waic < bestWaic || (cand.waic.waic == bestWaic && k < bestIndex)) {
          haveBest = true;
          bestWaic = cand.waic.waic;
          bestIndex = k;
          bestFit = fit;
        }
      }
      if (keep) *keep = std::move(fit);
    } catch (const Error& e) {
      cand.ok = false;
      cand.warning = e.what();
    }
  };

  // The first candidate that fits becomes the warm start for all the others,
  // which keeps results independent of the thread count.
  std::vector<std::size_t> distinct;
  for (std::size_t k = 0; k < g; ++k)
    if (source[k] == k) distinct.push_back(k);
  FitResult anchor;
  std::size_t next = 0;
  for (; next < distinct.size(); ++next) {
    fitOne(distinct[next], nullptr, nullptr, options.optimizer.initialStep, &anchor);
    if (sel.table[distinct[next]].ok) break;
  }
  if (next < distinct.size()) {
    const Eigen::VectorXd hyper0 = anchor.hyper.internalMode;
    const Eigen::VectorXd latent0 = anchor.latentMode;
    const std::vector<std::size_t> rest(distinct.begin() + static_cast<std::ptrdiff_t>(next) + 1, distinct.end());
    parallelFor(rest.size(), options.threads,
                [&](std::size_t r) { fitOne(rest[r], &hyper0, &latent0, options.warmStep, nullptr); });
  }

  for (std::size_t k = 0; k < g; ++k) {
    if (source[k] != k) {
      const ThresholdCandidate& from = sel.table[source[k]];
      ThresholdCandidate& cand = sel.table[k];
      cand.ok = from.ok;
      cand.waic = from.waic;
      cand.logMarginal = from.logMarginal;
      cand.evaluations = 0;
      cand.warning = from.warning;
    }
    if (!sel.table[k].ok)
      sel.warnings.push_back("c = " + std::to_string(sel.grid[k]) + " skipped: " + sel.table[k].warning);
  }
  if (!haveBest) throw Error("the count model failed for every threshold candidate");

  // Ties go to the smallest c.
  std::size_t chosen = g;
  for (std::size_t k = 0; k < g; ++k)
    if (sel.table[k].ok && (chosen == g || sel.table[k].waic.waic < sel.table[chosen].waic.waic)) chosen = k;
  sel.chosenIndex = chosen;
  sel.chosen = sel.grid[chosen];
  sel.outcome = outcomes[chosen];
  sel.countFit = std::move(bestFit);
  if (source[chosen] != bestIndex) throw Error("internal error: retained count fit does not match the chosen c");
  return sel;
}

PipelineConfig::PipelineConfig() {
  binary.family = {Family::Bernoulli, 0.0};
  binary.useOffset = false;
  count.family = {Family::NegBinomial, 1.0};
  count.useOffset = true;
}

namespace {

ComponentFit emptyComponent(const std::string& name, const ComponentConfig& cfg, const SpatialContext& ctx,
                            std::uint64_t seed) {
  ComponentFit c;
  c.component = name;
  c.config = cfg;
  c.context = ctx;
  c.knots = resolvedKnots(cfg, ctx);
  c.seed = seed;
  return c;
}

}  // namespace

SequentialFit fitBinaryStage(const EncodedDataset& data, const SpatialContext& ctx, const PipelineConfig& cfg) {
  SequentialFit out;
  const std::vector<std::int64_t> z0 = makeBinary(data.y);
  out.binary = emptyComponent("binary", cfg.binary, ctx, cfg.seed);
  if (std::all_of(z0.begin(), z0.end(), [](std::int64_t v) { return v == 1; })) {
    out.binaryDegenerate = true;
    out.piTilde.assign(z0.size(), 1.0);
    return out;
  }
  try {
    Stopwatch sw;
    const ModelSpec spec = buildComponentSpec(data, ctx, cfg.binary, z0);
    const LatentModel model = assemble(spec);
    out.binary.fit = optimizeHyper(model, model.initialHyper(), cfg.threshold.optimizer);
    out.timings.push_back({"binary_fit", sw.seconds()});
    Stopwatch sp;
    out.piTilde = predictPiTilde(model, out.binary.fit, cfg.piSamples, mixSeed(cfg.seed, kStreamPiTilde));
    out.timings.push_back({"pi_tilde", sp.seconds()});
  } catch (const Error& e) {
    throw Error(std::string("binary stage: ") + e.what());
  }
  return out;
}

void fitCountStage(SequentialFit& fit, const EncodedDataset& data, const SpatialContext& ctx, const PipelineConfig& cfg) {
  try {
    Stopwatch sw;
    if (fit.piTilde.size() != data.size()) throw Error("piTilde does not match the dataset");
    const ModelSpec spec = buildComponentSpec(data, ctx, cfg.count, data.y);
    std::vector<double> grid;
    if (fit.binaryDegenerate)
      grid = {0.0};
    else
      grid = cfg.grid ? *cfg.grid : defaultThresholdGrid(data.y, fit.piTilde, cfg.gridCap);
    ThresholdOptions opts = cfg.threshold;
    opts.seed = mixSeed(cfg.seed, kStreamWaic);
    fit.selection = selectThreshold(data.y, fit.piTilde, spec, grid, opts);
    fit.timings.push_back({"threshold_selection", sw.seconds()});
    fit.count = emptyComponent("count", cfg.count, ctx, cfg.seed);
    fit.count.fit = fit.selection.countFit;
    fit.count.threshold = fit.selection.chosen;
    fit.count.rows = fit.selection.outcome.rows;
  } catch (const Error& e) {
    throw Error(std::string("count stage: ") + e.what());
  }
}

SequentialFit fitSequential(const EncodedDataset& data, const SpatialContext& ctx, const PipelineConfig& cfg) {
  SequentialFit fit = fitBinaryStage(data, ctx, cfg);
  fitCountStage(fit, data, ctx, cfg);
  return fit;
}

void writeThresholdReport(std::ostream& out, const ThresholdSelection& sel, const PipelineConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "stzi.threshold-report";
  j["version"] = 1;
  j["chosen_c"] = sel.chosen;
  j["chosen_index"] = sel.chosenIndex;
  j["structural_zeros"] = sel.outcome.structuralZeros;
  j["count_zeros"] = sel.outcome.countZeros;
  j["seeds"] = {{"pipeline", cfg.seed},
                {"pi_tilde", mixSeed(cfg.seed, kStreamPiTilde)},
                {"waic", mixSeed(cfg.seed, kStreamWaic)}};
  j["pi_samples"] = cfg.piSamples;
  j["waic_samples"] = cfg.threshold.waicSamples;
  j["grid_cap"] = cfg.gridCap;
  nlohmann::json table = nlohmann::json::array();
  for (const ThresholdCandidate& c : sel.table) {
    nlohmann::json row = {{"c", c.c},
                          {"ok", c.ok},
                          {"structural_zeros", c.structuralZeros},
                          {"count_zeros", c.countZeros},
                          {"reused", c.reused}};
    if (c.ok) {
      row["waic"] = c.waic.waic;
      row["p_waic"] = c.waic.pWaic;
      row["lppd"] = c.waic.lppd;
      row["log_marginal"] = c.logMarginal;
      row["evaluations"] = c.evaluations;
    } else {
      row["warning"] = c.warning;
    }
    table.push_back(row);
  }
  j["table"] = table;
  j["warnings"] = sel.warnings;
  out << j.dump(1) << '\n';
}

void writeTimings(std::ostream& out, const std::vector<StageTiming>& timings) {
  nlohmann::json j;
  j["schema"] = "stzi.timings";
  j["version"] = 1;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& t : timings) stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  j["stages"] = stages;
  out << j.dump(1) << '\n';
}

}  // namespace stzi
