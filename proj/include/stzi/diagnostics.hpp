#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stzi/lgm.hpp"
#include "stzi/likelihoods.hpp"

namespace stzi {

// Per-observation criteria take an S x n matrix of log-likelihoods: row s is
// posterior sample s, column i is observation i. An empty mask selects every
// observation.

struct WaicResult {
  double waic = 0.0;
  double pWaic = 0.0;
  double lppd = 0.0;
  std::size_t observations = 0;
};

WaicResult computeWaic(const Eigen::MatrixXd& logLik, const std::vector<bool>& mask = {});

struct DicResult {
  double dic = 0.0;
  double pDic = 0.0;  // may be negative; never clamped
  double meanDeviance = 0.0;
  double devianceAtMean = 0.0;
};

DicResult computeDic(const Eigen::VectorXd& logLikAtMean, const Eigen::MatrixXd& logLik,
                     const std::vector<bool>& mask = {});

struct CpoPitResult {
  Eigen::VectorXd cpo;
  Eigen::VectorXd logCpo;
  Eigen::VectorXd pit;
  std::vector<std::size_t> underflow;  // observations whose CPO is below the smallest normal double
};

// etaSamples is n x S (column s is the linear predictor of sample s).
CpoPitResult computeCpoPit(const Eigen::MatrixXd& logLik, const std::vector<std::int64_t>& y, const FamilySpec& family,
                           const Eigen::MatrixXd& etaSamples);

struct AdequacyReport {
  WaicResult waic;
  DicResult dic;
  CpoPitResult cpoPit;
  int samples = 0;
};

// Scores a fitted model from `samples` posterior draws. DIC plugs in the
// latent mode; the mask restricts WAIC and DIC, CPO and PIT cover every row.
AdequacyReport assessFit(const LatentModel& model, const FitResult& fit, int samples, std::uint64_t seed,
                         const std::vector<bool>& mask = {});

// index,y,cpo,log_cpo,pit
void writeAdequacyCsv(std::ostream& out, const AdequacyReport& report, const std::vector<std::int64_t>& y,
                      const std::vector<std::size_t>& rows);
void writeAdequacyJson(std::ostream& out, const AdequacyReport& report, const std::string& component);

}  // namespace stzi
