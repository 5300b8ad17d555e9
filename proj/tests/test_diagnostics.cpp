#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "stzi/diagnostics.hpp"
#include "stzi/error.hpp"

using namespace stzi;

namespace {

// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
double ksUniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    d = std::max({d, std::abs((i + 1) / n - u[i]), std::abs(u[i] - i / n)});
  return d;
}

}  // namespace

TEST_CASE("WAIC on constant and two-valued log-likelihoods") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(200, 1, -1.7);
  WaicResult w = computeWaic(c);
  CHECK(w.waic == doctest::Approx(3.4).epsilon(1e-14));
  CHECK(w.pWaic < 1e-25);

  // Half the samples at log 0.5, half at log 0.25.
  Eigen::MatrixXd t(100, 1);
  for (int s = 0; s < 100; ++s) t(s, 0) = s % 2 ? std::log(0.25) : std::log(0.5);
  w = computeWaic(t);
  const double mean = 0.5 * (std::log(0.5) + std::log(0.25));
  double var = 0.0;
  for (int s = 0; s < 100; ++s) var += (t(s, 0) - mean) * (t(s, 0) - mean);
  var /= 99.0;
  CHECK(w.lppd == doctest::Approx(std::log(0.375)).epsilon(1e-13));
  CHECK(w.pWaic == doctest::Approx(var).epsilon(1e-13));
  CHECK(w.waic == doctest::Approx(-2.0 * (std::log(0.375) - var)).epsilon(1e-13));

  CHECK_THROWS_AS(computeWaic(Eigen::MatrixXd::Zero(99, 3)), Error);
  CHECK_THROWS_AS(computeWaic(Eigen::MatrixXd::Zero(100, 3), {true, false}), Error);
}

TEST_CASE("WAIC masking and reordering") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z(-2.0, 0.7);
  Eigen::MatrixXd ll(300, 40);
  for (Eigen::Index i = 0; i < ll.size(); ++i) ll.data()[i] = z(gen);
  const WaicResult all = computeWaic(ll);
  const WaicResult full = computeWaic(ll, std::vector<bool>(40, true));
  CHECK(full.waic == all.waic);
  CHECK(full.pWaic == all.pWaic);

  std::vector<bool> mask(40, false);
  Eigen::MatrixXd sub(300, 20);
  for (int i = 0; i < 20; ++i) {
    mask[static_cast<std::size_t>(2 * i)] = true;
    sub.col(i) = ll.col(2 * i);
  }
  const WaicResult masked = computeWaic(ll, mask);
  CHECK(masked.waic == computeWaic(sub).waic);
  CHECK(masked.observations == 20);

  std::vector<int> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  Eigen::MatrixXd shuffled(300, 40);
  for (int s = 0; s < 300; ++s) shuffled.row(s) = ll.row(perm[static_cast<std::size_t>(s)]);
  Eigen::MatrixXd reversed = ll.rowwise().reverse();
  CHECK(computeWaic(shuffled).waic == doctest::Approx(all.waic).epsilon(1e-12));
  CHECK(computeWaic(reversed).waic == doctest::Approx(all.waic).epsilon(1e-12));
  CHECK(computeWaic(ll).waic == all.waic);
}

TEST_CASE("DIC") {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(150, 3, -0.5);
  DicResult d = computeDic(Eigen::VectorXd::Constant(3, -0.5), c);
  CHECK(d.pDic == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(d.dic == doctest::Approx(3.0).epsilon(1e-14));

  // Hand-rolled oracle on five observations.
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3.0, -0.1);
  Eigen::MatrixXd ll(120, 5);
  for (Eigen::Index i = 0; i < ll.size(); ++i) ll.data()[i] = u(gen);
  Eigen::VectorXd atMean(5);
  for (int i = 0; i < 5; ++i) atMean[i] = u(gen);
  double dbar = 0.0;
  for (int s = 0; s < 120; ++s) {
    double tot = 0.0;
    for (int i = 0; i < 5; ++i) tot += ll(s, i);
    dbar += -2.0 * tot;
  }
  dbar /= 120.0;
  const double dhat = -2.0 * atMean.sum();
  d = computeDic(atMean, ll);
  CHECK(std::abs(d.pDic - (dbar - dhat)) < 1e-10);
  CHECK(std::abs(d.dic - (dhat + 2.0 * (dbar - dhat))) < 1e-10);

  // Plug-in better than every sample: pDic is negative and reported as such.
  d = computeDic(Eigen::VectorXd::Constant(5, -10.0), ll);
  CHECK(d.pDic < 0.0);
}

TEST_CASE("CPO and PIT") {
  // pmf identically 1 on the observed values.
  const FamilySpec pois{Family::Poisson, 0.0};
  const std::vector<std::int64_t> y(4, 0);
  const Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(4, 100, -60.0);
  Eigen::MatrixXd ll(100, 4);
  for (int s = 0; s < 100; ++s)
    for (int i = 0; i < 4; ++i) ll(s, i) = logPmf(pois, 0, eta(i, s));
  const CpoPitResult r = computeCpoPit(ll, y, pois, eta);
  for (int i = 0; i < 4; ++i) {
    CHECK(r.cpo[i] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.pit[i] == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(r.underflow.empty());

  Eigen::MatrixXd tiny = Eigen::MatrixXd::Constant(100, 1, -800.0);
  const CpoPitResult t = computeCpoPit(tiny, {0}, pois, Eigen::MatrixXd::Zero(1, 100));
  REQUIRE(t.underflow.size() == 1);
  CHECK(t.logCpo[0] == doctest::Approx(-800.0));
}

TEST_CASE("PIT calibration separates correct from misspecified families") {
  const int n = 2000, s = 100;
  int wins = 0;
  double correctWorst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Rng rng(100 + static_cast<std::uint64_t>(rep));
    const FamilySpec nb{Family::NegBinomial, 1.5};
    const FamilySpec pois{Family::Poisson, 0.0};
    std::vector<std::int64_t> y(n);
    Eigen::VectorXd etaNb(n), etaPois(n);
    for (int i = 0; i < n; ++i) {
      const double eta = 0.5 + 1.5 * rng.uniform();
      y[static_cast<std::size_t>(i)] = sampleCount(nb, eta, rng);
      etaNb[i] = eta;
      etaPois[i] = std::log(familyMean(nb, eta));  // matching mean
    }
    auto pitFor = [&](const FamilySpec& f, const Eigen::VectorXd& e) {
      Eigen::MatrixXd ll(s, n), es(n, s);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < s; ++k) {
          es(i, k) = e[i];
          ll(k, i) = logPmf(f, y[static_cast<std::size_t>(i)], e[i]);
        }
      const CpoPitResult r = computeCpoPit(ll, y, f, es);
      return ksUniform(std::vector<double>(r.pit.data(), r.pit.data() + n));
    };
    const double good = pitFor(nb, etaNb), bad = pitFor(pois, etaPois);
    correctWorst = std::max(correctWorst, good);
    wins += bad > good;
  }
  CHECK(wins >= 9);
  CHECK(correctWorst < 0.05);
  MESSAGE("largest KS distance of the correct model: " << correctWorst);
}
