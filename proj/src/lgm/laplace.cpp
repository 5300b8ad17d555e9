#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "stzi/error.hpp"
#include "stzi/lgm.hpp"

namespace stzi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double totalLogLik(const LatentModel& model, const FamilySpec& fam, const Eigen::VectorXd& eta) {
  const auto& y = model.response();
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += logPmf(fam, y[static_cast<std::size_t>(i)], eta[i]);
  return s;
}

// Factorizes h with the workspace's symbolic analysis, redoing the analysis
// whenever the sparsity pattern grows.
bool factorize(LaplaceWorkspace& ws, SparseMatrix& h) {
  if (!ws.analyzed || ws.pattern.rows() != h.rows()) {
    ws.pattern = 0.0 * h;
    ws.llt.analyzePattern(h);
    ws.analyzed = true;
  } else {
    h = h + ws.pattern;
    if (h.nonZeros() != ws.pattern.nonZeros()) {
      ws.pattern = 0.0 * h;
      ws.llt.analyzePattern(h);
    }
  }
  ws.llt.factorize(h);
  return ws.llt.info() == Eigen::Success;
}

double factorLogDet(const Eigen::SimplicialLLT<SparseMatrix>& llt) {
  const SparseMatrix& l = llt.matrixL().nestedExpression();
  double s = 0.0;
  for (Eigen::Index j = 0; j < l.outerSize(); ++j) {
    SparseMatrix::InnerIterator it(l, j);
    s += std::log(it.value());
  }
  return 2.0 * s;
}

}  // namespace

InnerResult innerMode(const LatentModel& model, std::span<const double> hyper, LaplaceWorkspace& ws,
                      const Eigen::VectorXd* init, const NewtonOptions& options) {
  const int m = model.latentDimension();
  const int n = model.observations();
  const SparseMatrix q = model.priorPrecision(hyper);
  const FamilySpec fam = model.familyAt(hyper);
  const auto& y = model.response();
  const SparseRowMatrix& a = model.joint();
  const SparseMatrix& at = model.jointTransposed();

  Eigen::VectorXd x = (init != nullptr && init->size() == m) ? *init : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd eta = model.linearPredictor(x);
  double logLik = totalLogLik(model, fam, eta);
  double objective = logLik - 0.5 * x.dot(q * x);
  if (!std::isfinite(objective)) {
    x.setZero();
    eta = model.linearPredictor(x);
    logLik = totalLogLik(model, fam, eta);
    objective = logLik;
  }

  Eigen::VectorXd g(n), w(n), grad(m);
  auto hessian = [&]() {
    SparseMatrix aw = at * w.asDiagonal();
    SparseMatrix h = aw * a;
    h += q;
    return h;
  };
  auto derivatives = [&]() {
    for (int i = 0; i < n; ++i) {
      const EtaDerivatives d = dLogPmf(fam, y[static_cast<std::size_t>(i)], eta[i]);
      g[i] = d.first;
      w[i] = std::max(-d.second, 0.0);
    }
    grad = at * g - q * x;
  };

  InnerResult out;
  derivatives();
  double gnorm = grad.cwiseAbs().maxCoeff();
  int it = 0;
  for (; it < options.maxIterations && gnorm >= options.gradientTolerance; ++it) {
    SparseMatrix h = hessian();
    if (!factorize(ws, h)) throw ConvergenceError("Newton Hessian is not positive definite", gnorm);
    const Eigen::VectorXd step = ws.llt.solve(grad);
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k <= options.maxHalvings; ++k, t *= 0.5) {
      const Eigen::VectorXd xn = x + t * step;
      const Eigen::VectorXd en = model.linearPredictor(xn);
      const double lln = totalLogLik(model, fam, en);
      const double objn = lln - 0.5 * xn.dot(q * xn);
      if (std::isfinite(objn) && objn >= objective - 1e-12 * std::fabs(objective)) {
        x = xn;
        eta = en;
        logLik = lln;
        objective = objn;
        accepted = true;
        break;
      }
    }
    derivatives();
    gnorm = grad.cwiseAbs().maxCoeff();
    if (!accepted) break;
  }
  // A stalled line search close to the optimum is accepted; round-off keeps
  // large problems from reaching the nominal tolerance exactly.
  if (gnorm >= options.gradientTolerance && gnorm >= 1e-4)
    throw ConvergenceError("Newton iteration did not converge (max |gradient| = " + std::to_string(gnorm) + ")", gnorm);

  SparseMatrix h = hessian();
  if (!factorize(ws, h)) throw ConvergenceError("posterior precision is not positive definite", gnorm);
  out.mode = x;
  out.precision = h;
  out.eta = eta;
  out.logLik = logLik;
  out.quadraticForm = x.dot(q * x);
  out.logDetPosterior = factorLogDet(ws.llt);
  out.gradientNorm = gnorm;
  out.iterations = it;
  return out;
}

InnerResult innerMode(const LatentModel& model, std::span<const double> hyper) {
  LaplaceWorkspace ws;
  return innerMode(model, hyper, ws);
}

LaplaceEvaluation evaluateLaplace(const LatentModel& model, std::span<const double> hyper, LaplaceWorkspace& ws,
                                  const Eigen::VectorXd* init) {
  LaplaceEvaluation ev;
  ev.inner = innerMode(model, hyper, ws, init);
  ev.priorLogDet = model.priorLogDet(hyper);
  ev.hyperLogPrior = model.hyperLogPrior(hyper);
  ev.logMarginal = ev.inner.logLik + 0.5 * ev.priorLogDet - 0.5 * ev.inner.quadraticForm -
                   0.5 * ev.inner.logDetPosterior + ev.hyperLogPrior;
  return ev;
}

double logMarginalHyper(const LatentModel& model, std::span<const double> hyper) {
  LaplaceWorkspace ws;
  return evaluateLaplace(model, hyper, ws).logMarginal;
}

NelderMeadResult nelderMead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& start,
                            double step, double relativeTolerance, int maxEvaluations) {
  const Eigen::Index d = start.size();
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };
  if (d == 0) return {start, eval(start), evals, true};

  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(d + 1), start);
  std::vector<double> values(static_cast<std::size_t>(d + 1));
  values[0] = eval(start);
  for (Eigen::Index i = 0; i < d; ++i) {
    simplex[static_cast<std::size_t>(i + 1)][i] += step;
    values[static_cast<std::size_t>(i + 1)] = eval(simplex[static_cast<std::size_t>(i + 1)]);
  }
  std::vector<std::size_t> idx(simplex.size());
  bool converged = false;
  while (true) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    const double fl = values[best], fh = values[worst];
    if (std::isfinite(fh) && 2.0 * std::fabs(fh - fl) <= relativeTolerance * (std::fabs(fh) + std::fabs(fl)) + 1e-300) {
      converged = true;
      break;
    }
    if (evals >= maxEvaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k : idx)
      if (k != worst) centroid += simplex[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr < fl) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < fh;
    const Eigen::VectorXd xc =
        outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid)) : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fh)) {
      simplex[worst] = xc;
      values[worst] = fc;
      continue;
    }
    for (std::size_t k : idx) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      values[k] = eval(simplex[k]);
    }
  }
  const auto bestIt = std::min_element(values.begin(), values.end());
  const auto b = static_cast<std::size_t>(bestIt - values.begin());
  return {simplex[b], values[b], evals, converged};
}

namespace {

FitResult buildFit(const LatentModel& model, const Eigen::VectorXd& hyper, const LaplaceEvaluation& ev) {
  FitResult fit;
  fit.latentMode = ev.inner.mode;
  fit.latentPrecision = ev.inner.precision;
  fit.logMarginal = ev.logMarginal;
  fit.family = model.familyAt(asSpan(hyper));
  fit.form = model.form();
  fit.layout = model.layout();
  fit.designNames = model.designNames();
  fit.perObservationLogLik.resize(model.observations());
  for (int i = 0; i < model.observations(); ++i)
    fit.perObservationLogLik[i] = logPmf(fit.family, model.response()[static_cast<std::size_t>(i)], ev.inner.eta[i]);
  fit.hyper.names = model.hyperNames();
  fit.hyper.transforms = model.hyperTransforms();
  fit.hyper.internalMode = hyper;
  fit.hyper.internalCovariance = Eigen::MatrixXd::Zero(hyper.size(), hyper.size());
  for (Eigen::Index i = 0; i < hyper.size(); ++i) {
    const double v = toNatural(fit.hyper.transforms[static_cast<std::size_t>(i)], hyper[i]);
    fit.hyper.naturalMode.push_back(v);
    fit.hyper.lower95.push_back(v);
    fit.hyper.upper95.push_back(v);
  }
  return fit;
}

}  // namespace

FitResult fitAtHyper(const LatentModel& model, const Eigen::VectorXd& hyper) {
  LaplaceWorkspace ws;
  const LaplaceEvaluation ev = evaluateLaplace(model, asSpan(hyper), ws);
  FitResult fit = buildFit(model, hyper, ev);
  fit.evaluations = 1;
  return fit;
}

FitResult optimizeHyper(const LatentModel& model, const Eigen::VectorXd& init, const OptimizerOptions& options,
                        const Eigen::VectorXd* latentInit) {
  if (init.size() != model.hyperDimension()) throw Error("initial hyperparameter vector has the wrong length");
  LaplaceWorkspace ws;
  Eigen::VectorXd warm =
      (latentInit != nullptr && latentInit->size() == model.latentDimension()) ? *latentInit
                                                                                : Eigen::VectorXd::Zero(model.latentDimension());
  double bestValue = kInf;
  double lastGradient = kInf;
  std::string lastFailure;
  auto objective = [&](const Eigen::VectorXd& h) {
    try {
      const LaplaceEvaluation ev = evaluateLaplace(model, asSpan(h), ws, &warm);
      const double v = -ev.logMarginal;
      if (std::isfinite(v) && v < bestValue) {
        bestValue = v;
        warm = ev.inner.mode;
      }
      return v;
    } catch (const ConvergenceError& e) {
      lastGradient = e.gradientNorm();
      lastFailure = e.what();
      return kInf;
    } catch (const Error& e) {
      lastFailure = e.what();
      return kInf;
    }
  };

  const NelderMeadResult nm =
      nelderMead(objective, init, options.initialStep, options.relativeTolerance, options.maxEvaluations);
  if (!std::isfinite(nm.value)) {
    if (std::isfinite(lastGradient)) throw ConvergenceError("no hyperparameter value gave a converged inner mode: " + lastFailure, lastGradient);
    throw Error("no hyperparameter value gave a finite marginal likelihood: " + lastFailure);
  }

  const Eigen::VectorXd best = nm.argmin;
  const LaplaceEvaluation ev = evaluateLaplace(model, asSpan(best), ws, &warm);
  FitResult fit = buildFit(model, best, ev);
  fit.evaluations = nm.evaluations + 1;

  const Eigen::Index d = best.size();
  if (d == 0) return fit;
  const Eigen::VectorXd anchor = ev.inner.mode;
  const double f0 = -ev.logMarginal;
  const double h = options.hessianStep;
  auto fAt = [&](const Eigen::VectorXd& p) {
    ++fit.evaluations;
    try {
      return -evaluateLaplace(model, asSpan(p), ws, &anchor).logMarginal;
    } catch (const Error&) {
      return kInf;
    }
  };
  Eigen::MatrixXd hess(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd p = best, mn = best;
    p[i] += h;
    mn[i] -= h;
    hess(i, i) = (fAt(p) - 2.0 * f0 + fAt(mn)) / (h * h);
    for (Eigen::Index j = 0; j < i; ++j) {
      Eigen::VectorXd pp = best, pm = best, mp = best, mm = best;
      pp[i] += h, pp[j] += h;
      pm[i] += h, pm[j] -= h;
      mp[i] -= h, mp[j] += h;
      mm[i] -= h, mm[j] -= h;
      hess(i, j) = hess(j, i) = (fAt(pp) - fAt(pm) - fAt(mp) + fAt(mm)) / (4.0 * h * h);
    }
  }
  if (!hess.allFinite()) {
    fit.hessianWarning = true;
    hess = hess.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double top = std::max(lambda.cwiseAbs().maxCoeff(), 1.0);
  const double floor = 1e-6 * top;
  if (lambda.minCoeff() <= 0.0) fit.hessianWarning = true;
  for (Eigen::Index i = 0; i < d; ++i) lambda[i] = std::max(lambda[i], floor);
  fit.hyper.internalCovariance = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double sd = std::sqrt(fit.hyper.internalCovariance(i, i));
    const Transform t = fit.hyper.transforms[static_cast<std::size_t>(i)];
    fit.hyper.lower95[static_cast<std::size_t>(i)] = toNatural(t, best[i] - 1.959963984540054 * sd);
    fit.hyper.upper95[static_cast<std::size_t>(i)] = toNatural(t, best[i] + 1.959963984540054 * sd);
  }
  return fit;
}

FitResult optimizeHyper(const LatentModel& model) { return optimizeHyper(model, model.initialHyper()); }

PosteriorSampler::PosteriorSampler(const FitResult& fit, std::uint64_t seed)
    : mode_(fit.latentMode), sampler_(fit.latentPrecision), rng_(seed) {}

Eigen::MatrixXd PosteriorSampler::next(int count) {
  if (count < 1) throw Error("number of posterior samples must be positive");
  Eigen::MatrixXd out(mode_.size(), count);
  for (int s = 0; s < count; ++s) out.col(s) = mode_ + sampler_.draw(rng_);
  return out;
}

Eigen::MatrixXd samplePosterior(const FitResult& fit, int samples, std::uint64_t seed) {
  if (samples < 1) throw Error("number of posterior samples must be positive");
  return PosteriorSampler(fit, seed).next(samples);
}

Eigen::MatrixXd logLikelihoodSamples(const LatentModel& model, const FitResult& fit, const Eigen::MatrixXd& samples) {
  if (samples.rows() != model.latentDimension()) throw Error("latent samples have the wrong dimension");
  const Eigen::MatrixXd eta = (model.joint() * samples).colwise() + model.offset();
  const auto& y = model.response();
  Eigen::MatrixXd out(samples.cols(), model.observations());
  for (Eigen::Index i = 0; i < eta.rows(); ++i)
    for (Eigen::Index s = 0; s < eta.cols(); ++s) out(s, i) = logPmf(fit.family, y[static_cast<std::size_t>(i)], eta(i, s));
  return out;
}

}  // namespace stzi
