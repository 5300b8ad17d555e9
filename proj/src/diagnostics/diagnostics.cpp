#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "stzi/diagnostics.hpp"
#include "stzi/error.hpp"
#include "stzi/kernels.hpp"

namespace stzi {

namespace {

constexpr Eigen::Index kMinSamples = 100;

void checkShape(const Eigen::MatrixXd& logLik, const std::vector<bool>& mask) {
  if (logLik.rows() < kMinSamples)
    throw Error("information criteria need at least 100 posterior samples, got " + std::to_string(logLik.rows()));
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != logLik.cols())
    throw Error("observation mask length does not match the log-likelihood matrix");
}

bool selected(const std::vector<bool>& mask, Eigen::Index i) {
  return mask.empty() || mask[static_cast<std::size_t>(i)];
}

std::span<const double> column(const Eigen::MatrixXd& m, Eigen::Index i) {
  return {m.data() + i * m.rows(), static_cast<std::size_t>(m.rows())};
}

}  // namespace

WaicResult computeWaic(const Eigen::MatrixXd& logLik, const std::vector<bool>& mask) {
  checkShape(logLik, mask);
  WaicResult r;
  for (Eigen::Index i = 0; i < logLik.cols(); ++i) {
    if (!selected(mask, i)) continue;
    const auto col = column(logLik, i);
    r.lppd += kernels::logMeanExp(col);
    r.pWaic += kernels::meanVar(col).variance;
    ++r.observations;
  }
  r.waic = -2.0 * (r.lppd - r.pWaic);
  return r;
}

DicResult computeDic(const Eigen::VectorXd& logLikAtMean, const Eigen::MatrixXd& logLik, const std::vector<bool>& mask) {
  checkShape(logLik, mask);
  if (logLikAtMean.size() != logLik.cols()) throw Error("log-likelihood at the mean has the wrong length");
  const auto s = static_cast<std::size_t>(logLik.rows());
  Eigen::VectorXd perSample = Eigen::VectorXd::Zero(logLik.rows());
  double atMean = 0.0;
  for (Eigen::Index i = 0; i < logLik.cols(); ++i) {
    if (!selected(mask, i)) continue;
    perSample += logLik.col(i);
    atMean += logLikAtMean[i];
  }
  DicResult r;
  r.meanDeviance = -2.0 * kernels::sum({perSample.data(), s}) / static_cast<double>(s);
  r.devianceAtMean = -2.0 * atMean;
  r.pDic = r.meanDeviance - r.devianceAtMean;
  r.dic = r.devianceAtMean + 2.0 * r.pDic;
  return r;
}

CpoPitResult computeCpoPit(const Eigen::MatrixXd& logLik, const std::vector<std::int64_t>& y, const FamilySpec& family,
                           const Eigen::MatrixXd& etaSamples) {
  checkShape(logLik, {});
  const Eigen::Index n = logLik.cols(), s = logLik.rows();
  if (static_cast<Eigen::Index>(y.size()) != n || etaSamples.rows() != n || etaSamples.cols() != s)
    throw Error("CPO/PIT inputs have inconsistent dimensions");
  CpoPitResult r;
  r.cpo.resize(n);
  r.logCpo.resize(n);
  r.pit.resize(n);
  Eigen::VectorXd neg(s);
  for (Eigen::Index i = 0; i < n; ++i) {
    neg = -logLik.col(i);
    // Harmonic mean of the likelihoods: 1 / mean(1 / p).
    r.logCpo[i] = -kernels::logMeanExp({neg.data(), static_cast<std::size_t>(s)});
    r.cpo[i] = std::exp(r.logCpo[i]);
    if (!(r.logCpo[i] >= std::log(DBL_MIN))) r.underflow.push_back(static_cast<std::size_t>(i));
    const std::int64_t yi = y[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (Eigen::Index k = 0; k < s; ++k) {
      const double eta = etaSamples(i, k);
      acc += familyCdf(family, yi, eta) - 0.5 * std::exp(logPmf(family, yi, eta));
    }
    r.pit[i] = std::clamp(acc / static_cast<double>(s), 0.0, 1.0);
  }
  return r;
}

void writeAdequacyCsv(std::ostream& out, const AdequacyReport& report, const std::vector<std::int64_t>& y,
                      const std::vector<std::size_t>& rows) {
  const auto& c = report.cpoPit;
  out << "index,y,cpo,log_cpo,pit\n";
  char buf[160];
  for (Eigen::Index i = 0; i < c.cpo.size(); ++i) {
    const std::size_t row = rows.empty() ? static_cast<std::size_t>(i) : rows[static_cast<std::size_t>(i)];
    std::snprintf(buf, sizeof buf, "%zu,%lld,%.10g,%.10g,%.10g\n", row,
                  static_cast<long long>(y[static_cast<std::size_t>(i)]), c.cpo[i], c.logCpo[i], c.pit[i]);
    out << buf;
  }
}

AdequacyReport assessFit(const LatentModel& model, const FitResult& fit, int samples, std::uint64_t seed,
                         const std::vector<bool>& mask) {
  const Eigen::MatrixXd draws = samplePosterior(fit, samples, seed);
  const Eigen::MatrixXd eta = (model.joint() * draws).colwise() + model.offset();
  const Eigen::MatrixXd ll = logLikelihoodSamples(model, fit, draws);
  const Eigen::VectorXd etaMode = model.linearPredictor(fit.latentMode);
  const auto& y = model.response();
  Eigen::VectorXd atMean(etaMode.size());
  for (Eigen::Index i = 0; i < etaMode.size(); ++i) atMean[i] = logPmf(fit.family, y[static_cast<std::size_t>(i)], etaMode[i]);
  AdequacyReport r;
  r.samples = samples;
  r.waic = computeWaic(ll, mask);
  r.dic = computeDic(atMean, ll, mask);
  r.cpoPit = computeCpoPit(ll, y, fit.family, eta);
  return r;
}

void writeAdequacyJson(std::ostream& out, const AdequacyReport& report, const std::string& component) {
  nlohmann::json j;
  j["schema"] = "stzi.adequacy";
  j["version"] = 1;
  j["component"] = component;
  j["samples"] = report.samples;
  j["observations"] = report.waic.observations;
  j["waic"] = {{"waic", report.waic.waic}, {"p_waic", report.waic.pWaic}, {"lppd", report.waic.lppd}};
  j["dic"] = {{"dic", report.dic.dic},
              {"p_dic", report.dic.pDic},
              {"mean_deviance", report.dic.meanDeviance},
              {"deviance_at_mean", report.dic.devianceAtMean}};
  const auto& c = report.cpoPit;
  j["cpo"] = {{"sum_log_cpo", c.logCpo.sum()}, {"approximate", true}, {"underflow", c.underflow}};
  std::vector<int> hist(10, 0);
  for (Eigen::Index i = 0; i < c.pit.size(); ++i)
    ++hist[static_cast<std::size_t>(std::clamp(std::floor(c.pit[i] * 10.0), 0.0, 9.0))];
  j["pit_histogram"] = hist;
  out << j.dump(1) << '\n';
}

}  // namespace stzi
