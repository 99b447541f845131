#include "formnet/gp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include <Eigen/Cholesky>

#include "formnet/errors.hpp"

namespace formnet {

namespace {

constexpr double kJitterLadder[] = {1e-10, 1e-8, 1e-6, 1e-4};
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)

Eigen::MatrixXd covariance_noise_free(const Eigen::MatrixXd& sqdist,
                                      const GpHyperparams& hp) {
  const double s2 = hp.sigma_f * hp.sigma_f;
  return (s2 * (-0.5 * hp.lambda * hp.lambda * sqdist.array()).exp()).matrix();
}

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;  // multiple of the identity added to make LLT succeed
};

// Cholesky of K, climbing the jitter ladder (relative to sigma_f^2) until the
// factorization succeeds.
Factorization factorize_covariance(const Eigen::MatrixXd& K, double sigma_f) {
  Factorization f;
  f.llt.compute(K);
  if (f.llt.info() == Eigen::Success) return f;
  const double scale = sigma_f * sigma_f;
  for (double rung : kJitterLadder) {
    const double jitter = rung * scale;
    Eigen::MatrixXd shifted = K;
    shifted.diagonal().array() += jitter;
    f.llt.compute(shifted);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = jitter;
      return f;
    }
  }
  throw FactorizationError(
      "training covariance is not positive definite even at the largest "
      "jitter");
}

double log_det_half(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return llt.matrixLLT().diagonal().array().log().sum();
}

// Shared core of nlml / nlml_multi: Y holds one target per column.
NlmlResult nlml_impl(const Eigen::MatrixXd& sqdist, const Eigen::MatrixXd& Y,
                     const GpHyperparams& hp, bool want_gradient) {
  hp.validate();
  const Eigen::Index n = sqdist.rows();
  if (sqdist.cols() != n)
    throw DimensionError("squared-distance table must be square");
  if (Y.rows() != n)
    throw DimensionError("target rows must match the distance table");
  if (n == 0 || Y.cols() == 0)
    throw DimensionError("need at least one sample and one target");

  const Eigen::MatrixXd Kf = covariance_noise_free(sqdist, hp);
  Eigen::MatrixXd K = Kf;
  K.diagonal().array() += hp.sigma_w * hp.sigma_w;
  const Factorization fac = factorize_covariance(K, hp.sigma_f);

  const Eigen::MatrixXd A = fac.llt.solve(Y);
  const double q = static_cast<double>(Y.cols());
  NlmlResult result;
  result.value = 0.5 * (Y.array() * A.array()).sum() +
                 q * (log_det_half(fac.llt) + 0.5 * n * kLogTwoPi);
  if (!want_gradient) return result;

  // d nlml = 1/2 tr(W dK) summed over targets, with W = K^-1 - alpha alpha^T.
  // W is accumulated as q*K^-1 - A A^T. The jitter rides on sigma_f^2, so its
  // sigma_f dependence is included to keep the gradient exact for the
  // objective actually evaluated.
  Eigen::MatrixXd W =
      fac.llt.solve(Eigen::MatrixXd::Identity(n, n)) * q;
  W.noalias() -= A * A.transpose();
  const double trace_w = W.trace();
  result.log_gradient[0] = -0.5 * hp.lambda * hp.lambda *
                           (W.array() * Kf.array() * sqdist.array()).sum();
  result.log_gradient[1] =
      (W.array() * Kf.array()).sum() + fac.jitter * trace_w;
  result.log_gradient[2] = hp.sigma_w * hp.sigma_w * trace_w;
  return result;
}

// Minimizes fn over a box with BFGS; fn returns the value (or +inf where it
// cannot be evaluated) and fills *grad when non-null. Line-search probes are
// value-only; the gradient is computed once per accepted point.
struct BfgsOutcome {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool evaluable = false;  // false when even the start point failed
};

BfgsOutcome bfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fn,
    Eigen::VectorXd x, double lo, double hi, int max_iterations,
    double gradient_tolerance) {
  const auto clamp = [&](Eigen::VectorXd v) {
    return v.cwiseMax(lo).cwiseMin(hi).eval();
  };
  const Eigen::Index d = x.size();
  x = clamp(std::move(x));

  BfgsOutcome out;
  Eigen::VectorXd grad(d);
  double f = fn(x, &grad);
  if (!std::isfinite(f)) {
    out.x = x;
    return out;
  }
  out.evaluable = true;

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
  bool h_is_fresh = true;  // identity placeholder, rescaled on first update
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= gradient_tolerance) break;

    Eigen::VectorXd direction = -(H * grad);
    if (direction.dot(grad) >= 0.0 || !direction.allFinite()) {
      H.setIdentity();
      h_is_fresh = true;
      direction = -grad;
    }

    // Backtracking line search on the projected step. The first trial is
    // capped at a couple of e-folds of parameter change: an unscaled
    // steepest-descent direction can be enormous in log space.
    const double dir_norm = direction.lpNorm<Eigen::Infinity>();
    double step = std::min(1.0, 2.0 / std::max(dir_norm, 1e-300));
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      x_new = clamp(x + step * direction);
      const Eigen::VectorXd s = x_new - x;
      if (s.lpNorm<Eigen::Infinity>() < 1e-15) break;
      f_new = fn(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * grad.dot(s)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // box corner or flat valley: best point so far

    Eigen::VectorXd grad_new(d);
    fn(x_new, &grad_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yk = grad_new - grad;
    const bool converged_f = std::abs(f - f_new) <= 1e-14 * (1.0 + std::abs(f));
    x = x_new;
    f = f_new;
    grad = grad_new;
    if (converged_f) {
      ++iter;
      break;
    }
    const double sy = s.dot(yk);
    if (sy > 1e-12 * s.norm() * yk.norm()) {
      if (h_is_fresh) {
        // Scale the placeholder to the local curvature before the first
        // update; raw identity makes early steps orders of magnitude off.
        H *= sy / yk.squaredNorm();
        h_is_fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
      H = (I - rho * s * yk.transpose()) * H * (I - rho * yk * s.transpose()) +
          rho * s * s.transpose();
    } else {
      H.setIdentity();
      h_is_fresh = true;
    }
  }

  out.x = x;
  out.value = f;
  out.iterations = iter;
  return out;
}

// Multi-start schedule shared by the per-target and tied fits. `objective`
// evaluates (value, gradient) in log space for the active parameters.
FitResult fit_multistart(
    const FitOptions& options, double lambda_center, double sigma_f_start,
    const std::function<NlmlResult(const GpHyperparams&, bool)>& objective) {
  if (options.n_starts < 1)
    throw InvalidInputError("need at least one fit start");
  if (options.param_min <= 0.0 || options.param_max < options.param_min)
    throw InvalidInputError("parameter box is empty or non-positive");
  if (options.fixed_sigma_w <= 0.0)
    throw InvalidInputError("fixed noise level must be positive");

  const double lo = std::log(options.param_min);
  const double hi = std::log(options.param_max);
  const int dim = options.optimize_noise ? 3 : 2;

  const auto unpack = [&](const Eigen::VectorXd& p) {
    GpHyperparams hp;
    hp.lambda = std::exp(p[0]);
    hp.sigma_f = std::exp(p[1]);
    hp.sigma_w = options.optimize_noise ? std::exp(p[2]) : options.fixed_sigma_w;
    return hp;
  };
  const auto fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
    try {
      const NlmlResult r = objective(unpack(p), grad != nullptr);
      if (grad) *grad = r.log_gradient.head(grad->size());
      return r.value;
    } catch (const FactorizationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const double log_center =
      std::clamp(std::log(lambda_center), lo, hi);
  const double log_sigma_f =
      std::clamp(std::log(sigma_f_start), lo, hi);

  FitResult best;
  best.nlml = std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (int i = 0; i < options.n_starts; ++i) {
    // Offsets 0, +1, -1, +2, -2, ... in natural log around the center.
    const double offset = ((i + 1) / 2) * (i % 2 == 1 ? 1.0 : -1.0);
    Eigen::VectorXd p0(dim);
    p0[0] = std::clamp(log_center + offset, lo, hi);
    p0[1] = log_sigma_f;
    if (dim == 3)
      p0[2] = std::clamp(std::log(1e-2 * sigma_f_start), lo, hi);

    const BfgsOutcome run = bfgs_minimize(fn, p0, lo, hi,
                                          options.max_iterations,
                                          options.gradient_tolerance);
    ++best.starts_tried;
    if (!run.evaluable) {
      ++best.starts_failed;
      continue;
    }
    if (!have_best || run.value < best.nlml) {
      have_best = true;
      best.nlml = run.value;
      best.iterations = run.iterations;
      best.hyperparams = unpack(run.x);
    }
  }
  if (!have_best)
    throw FactorizationError(
        "hyperparameter fit failed: no start point could be evaluated");
  return best;
}

double population_std(const Eigen::VectorXd& y) {
  const double mean = y.mean();
  return std::sqrt((y.array() - mean).square().sum() /
                   static_cast<double>(y.size()));
}

}  // namespace

void GpHyperparams::validate() const {
  const auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!ok(lambda) || !ok(sigma_f) || !ok(sigma_w))
    throw InvalidInputError(
        "hyperparameters must be positive and finite");
}

double kernel(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
              const GpHyperparams& hp) {
  hp.validate();
  if (x1.size() != x2.size())
    throw DimensionError("kernel inputs must have equal dimension");
  const double sq = (x1 - x2).squaredNorm();
  return hp.sigma_f * hp.sigma_f *
         std::exp(-0.5 * hp.lambda * hp.lambda * sq);
}

Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& X) {
  const Eigen::VectorXd norms = X.rowwise().squaredNorm();
  Eigen::MatrixXd D = norms.replicate(1, X.rows()) +
                      norms.transpose().replicate(X.rows(), 1);
  D.noalias() -= 2.0 * X * X.transpose();
  D = D.cwiseMax(0.0);
  D.diagonal().setZero();
  return D;
}

Eigen::MatrixXd cross_sqdist(const Eigen::MatrixXd& A,
                             const Eigen::MatrixXd& B) {
  if (A.cols() != B.cols())
    throw DimensionError("point sets must share the input dimension");
  Eigen::MatrixXd D = A.rowwise().squaredNorm().replicate(1, B.rows()) +
                      B.rowwise().squaredNorm().transpose().replicate(A.rows(), 1);
  D.noalias() -= 2.0 * A * B.transpose();
  return D.cwiseMax(0.0);
}

double median_pairwise_distance(const Eigen::MatrixXd& sqdist) {
  const Eigen::Index n = sqdist.rows();
  std::vector<double> upper;
  upper.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) upper.push_back(sqdist(i, j));
  if (upper.empty()) return 0.0;
  const size_t mid = upper.size() / 2;
  std::nth_element(upper.begin(), upper.begin() + mid, upper.end());
  return std::sqrt(upper[mid]);
}

NlmlResult nlml(const Eigen::MatrixXd& sqdist, const Eigen::VectorXd& y,
                const GpHyperparams& hp, bool want_gradient) {
  return nlml_impl(sqdist, y, hp, want_gradient);
}

NlmlResult nlml_multi(const Eigen::MatrixXd& sqdist, const Eigen::MatrixXd& Y,
                      const GpHyperparams& hp, bool want_gradient) {
  return nlml_impl(sqdist, Y, hp, want_gradient);
}

FitResult fit_hyperparams(const Eigen::MatrixXd& sqdist,
                          const Eigen::VectorXd& y,
                          const FitOptions& options) {
  if (y.size() != sqdist.rows())
    throw DimensionError("target count must match the distance table");
  const double median = median_pairwise_distance(sqdist);
  const double lambda_center = median > 0.0 ? 1.0 / median : 1.0;
  const double spread = population_std(y);
  if (!(spread > 0.0)) {
    // A constant target carries no information about the length scale.
    FitResult degenerate;
    degenerate.hyperparams.lambda = lambda_center;
    degenerate.hyperparams.sigma_f = options.param_min;
    degenerate.hyperparams.sigma_w = options.fixed_sigma_w;
    degenerate.nlml =
        nlml(sqdist, y, degenerate.hyperparams, false).value;
    return degenerate;
  }
  return fit_multistart(options, lambda_center, spread,
                        [&](const GpHyperparams& hp, bool grad) {
                          return nlml(sqdist, y, hp, grad);
                        });
}

FitResult fit_hyperparams_tied(const Eigen::MatrixXd& sqdist,
                               const Eigen::MatrixXd& Y,
                               const FitOptions& options) {
  if (Y.rows() != sqdist.rows())
    throw DimensionError("target rows must match the distance table");
  const double median = median_pairwise_distance(sqdist);
  const double lambda_center = median > 0.0 ? 1.0 / median : 1.0;
  const double mean = Y.mean();
  const double spread =
      std::sqrt((Y.array() - mean).square().sum() /
                static_cast<double>(Y.size()));
  if (!(spread > 0.0)) {
    FitResult degenerate;
    degenerate.hyperparams.lambda = lambda_center;
    degenerate.hyperparams.sigma_f = options.param_min;
    degenerate.hyperparams.sigma_w = options.fixed_sigma_w;
    degenerate.nlml =
        nlml_multi(sqdist, Y, degenerate.hyperparams, false).value;
    return degenerate;
  }
  return fit_multistart(options, lambda_center, spread,
                        [&](const GpHyperparams& hp, bool grad) {
                          return nlml_multi(sqdist, Y, hp, grad);
                        });
}

GpModel GpModel::train(std::shared_ptr<const Eigen::MatrixXd> X,
                       std::shared_ptr<const Eigen::MatrixXd> sqdist,
                       Eigen::VectorXd y, const GpHyperparams& hp,
                       bool keep_factor) {
  hp.validate();
  if (!X) throw InvalidInputError("training inputs must not be null");
  if (y.size() != X->rows())
    throw DimensionError("target count must match the input rows");
  if (X->rows() == 0) throw DimensionError("need at least one sample");
  if (!sqdist)
    sqdist = std::make_shared<const Eigen::MatrixXd>(pairwise_sqdist(*X));
  if (sqdist->rows() != X->rows() || sqdist->cols() != X->rows())
    throw DimensionError("distance table does not match the inputs");

  GpModel model;
  model.X_ = std::move(X);
  model.sqdist_ = std::move(sqdist);
  model.hp_ = hp;

  Eigen::MatrixXd K = covariance_noise_free(*model.sqdist_, hp);
  K.diagonal().array() += hp.sigma_w * hp.sigma_w;
  const Factorization fac = factorize_covariance(K, hp.sigma_f);
  model.alpha_ = fac.llt.solve(y);
  model.nlml_ = 0.5 * y.dot(model.alpha_) + log_det_half(fac.llt) +
                0.5 * static_cast<double>(y.size()) * kLogTwoPi;
  model.y_ = std::move(y);
  if (keep_factor)
    model.factor_ = Eigen::MatrixXd(fac.llt.matrixL());
  return model;
}

GpModel GpModel::restore(std::shared_ptr<const Eigen::MatrixXd> X,
                         std::shared_ptr<const Eigen::MatrixXd> sqdist,
                         Eigen::VectorXd y, const GpHyperparams& hp,
                         Eigen::VectorXd alpha, double train_nlml) {
  hp.validate();
  if (!X) throw InvalidInputError("training inputs must not be null");
  if (y.size() != X->rows() || alpha.size() != X->rows())
    throw DimensionError("targets and weights must match the input rows");
  if (!sqdist)
    sqdist = std::make_shared<const Eigen::MatrixXd>(pairwise_sqdist(*X));
  if (sqdist->rows() != X->rows() || sqdist->cols() != X->rows())
    throw DimensionError("distance table does not match the inputs");

  GpModel model;
  model.X_ = std::move(X);
  model.sqdist_ = std::move(sqdist);
  model.y_ = std::move(y);
  model.hp_ = hp;
  model.alpha_ = std::move(alpha);
  model.nlml_ = train_nlml;
  return model;
}

GpModel::Posterior GpModel::predict(const Eigen::VectorXd& x) const {
  if (!X_) throw InvalidInputError("model has not been trained");
  if (x.size() != X_->cols())
    throw DimensionError("query dimension does not match the inputs");

  const double s2 = hp_.sigma_f * hp_.sigma_f;
  const Eigen::VectorXd k_star =
      (s2 * (-0.5 * hp_.lambda * hp_.lambda *
             ((*X_).rowwise() - x.transpose()).rowwise().squaredNorm().array())
                .exp())
          .matrix();

  Posterior post;
  post.mean = k_star.dot(alpha_);

  Eigen::VectorXd v = k_star;
  if (factor_) {
    factor_->triangularView<Eigen::Lower>().solveInPlace(v);
  } else {
    // The factor was released; rebuild it transiently for this query.
    Eigen::MatrixXd K = covariance_noise_free(*sqdist_, hp_);
    K.diagonal().array() += hp_.sigma_w * hp_.sigma_w;
    const Factorization fac = factorize_covariance(K, hp_.sigma_f);
    v = fac.llt.matrixL().solve(k_star);
  }
  post.variance = std::max(s2 - v.squaredNorm(), 0.0);
  return post;
}

Eigen::VectorXd GpModel::predict_mean(const Eigen::MatrixXd& Xq) const {
  if (!X_) throw InvalidInputError("model has not been trained");
  if (Xq.cols() != X_->cols())
    throw DimensionError("query dimension does not match the inputs");
  const double s2 = hp_.sigma_f * hp_.sigma_f;
  // Row by row through the same expression as predict(): the distances are
  // computed in the cancellation-free difference form, and a batch query is
  // bit-identical to the equivalent sequence of single-point queries.
  Eigen::VectorXd means(Xq.rows());
  for (Eigen::Index i = 0; i < Xq.rows(); ++i) {
    const Eigen::VectorXd k_star =
        (s2 * (-0.5 * hp_.lambda * hp_.lambda *
               ((*X_).rowwise() - Xq.row(i)).rowwise().squaredNorm().array())
                  .exp())
            .matrix();
    means[i] = k_star.dot(alpha_);
  }
  return means;
}

void GpModel::release_factor() { factor_.reset(); }

}  // namespace formnet
