#pragma once

// Gaussian-process regression with an isotropic squared-exponential kernel.
//
// A model maps a high-dimensional input (a displacement field flattened to a
// row vector) to one scalar output. Many models can share the same training
// inputs: they hold the input matrix and its pairwise squared-distance table
// through shared_ptr, so a family of per-output models costs one copy of the
// large matrices plus a vector of targets each.
//
// Hyperparameters are fitted by minimizing the negative log marginal
// likelihood with BFGS in log-parameter space, multi-started on a grid of
// inverse length scales around the median-distance heuristic.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace formnet {

// Kernel and noise parameters. `lambda` is an inverse length scale: the
// covariance between two inputs is
//   k(x1, x2) = sigma_f^2 * exp(-lambda^2 / 2 * ||x1 - x2||^2),
// so larger lambda means faster decay. `sigma_w` is the standard deviation
// of the observation noise added on the diagonal of the training covariance.
struct GpHyperparams {
  double lambda = 1.0;
  double sigma_f = 1.0;
  double sigma_w = 1e-8;

  // Throws InvalidInputError unless all three entries are positive and finite.
  void validate() const;
};

// Covariance between two input rows under `hp` (noise-free kernel value).
double kernel(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
              const GpHyperparams& hp);

// Symmetric matrix of squared Euclidean distances between the rows of X,
// with an exactly zero diagonal. Entries are clamped at zero so rounding
// can never produce a negative squared distance.
Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& X);

// Squared distances between the rows of A (result rows) and of B (columns).
Eigen::MatrixXd cross_sqdist(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Median of the off-diagonal pairwise distances given the squared-distance
// table; used to seed the inverse length scale at 1 / median. Returns 0 when
// there are fewer than two points or all points coincide.
double median_pairwise_distance(const Eigen::MatrixXd& sqdist);

// Negative log marginal likelihood of targets y under `hp`, together with
// its gradient with respect to (log lambda, log sigma_f, log sigma_w).
// `sqdist` is the pairwise squared-distance table of the training inputs.
//
// The training covariance is factorized by Cholesky; if that fails the
// diagonal is inflated by an escalating jitter ladder of
// {1e-10, 1e-8, 1e-6, 1e-4} * sigma_f^2, and FactorizationError is thrown
// once the ladder is exhausted.
struct NlmlResult {
  double value = 0.0;
  Eigen::Vector3d log_gradient = Eigen::Vector3d::Zero();
};
NlmlResult nlml(const Eigen::MatrixXd& sqdist, const Eigen::VectorXd& y,
                const GpHyperparams& hp, bool want_gradient = true);

// Sum of the negative log marginal likelihoods of every column of Y under a
// single shared hyperparameter vector, evaluated with one factorization.
// This is the objective for tying hyperparameters across outputs.
NlmlResult nlml_multi(const Eigen::MatrixXd& sqdist, const Eigen::MatrixXd& Y,
                      const GpHyperparams& hp, bool want_gradient = true);

struct FitOptions {
  int max_iterations = 200;      // BFGS iteration cap per start
  double gradient_tolerance = 1e-8;  // stop on ||grad||_inf in log space
  int n_starts = 5;              // multi-start count on the lambda grid
  bool optimize_noise = false;   // when false, sigma_w stays at fixed_sigma_w
  double fixed_sigma_w = 1e-8;
  double param_min = 1e-6;       // box constraint applied to all parameters
  double param_max = 1e6;
};

struct FitResult {
  GpHyperparams hyperparams;
  double nlml = 0.0;        // objective value at the returned parameters
  int iterations = 0;       // BFGS iterations of the winning start
  int starts_tried = 0;
  int starts_failed = 0;    // starts abandoned because factorization failed
};

// Fits hyperparameters for one target vector. Targets with (numerically)
// zero variance short-circuit to the start point, since the likelihood then
// carries no length-scale information.
FitResult fit_hyperparams(const Eigen::MatrixXd& sqdist,
                          const Eigen::VectorXd& y, const FitOptions& options);

// As above but ties one hyperparameter vector across every column of Y.
FitResult fit_hyperparams_tied(const Eigen::MatrixXd& sqdist,
                               const Eigen::MatrixXd& Y,
                               const FitOptions& options);

// A trained regressor: training inputs, targets, hyperparameters, and the
// precomputed Cholesky pieces needed for prediction. The factor (an n x n
// lower triangle) can be released to save memory once only mean predictions
// are needed; predictions that require the variance then rebuild it
// transiently from the shared squared-distance table.
class GpModel {
 public:
  struct Posterior {
    double mean = 0.0;
    double variance = 0.0;  // of the latent function value, clamped at >= 0
  };

  GpModel() = default;

  // Trains on rows of *X with targets y. `sqdist` may be shared across many
  // models with the same inputs; pass nullptr to have it computed privately.
  static GpModel train(std::shared_ptr<const Eigen::MatrixXd> X,
                       std::shared_ptr<const Eigen::MatrixXd> sqdist,
                       Eigen::VectorXd y, const GpHyperparams& hp,
                       bool keep_factor = true);

  // Reassembles a persisted model from its stored pieces without repeating
  // the factorization. The restored model carries no factor; variance
  // predictions rebuild one transiently.
  static GpModel restore(std::shared_ptr<const Eigen::MatrixXd> X,
                         std::shared_ptr<const Eigen::MatrixXd> sqdist,
                         Eigen::VectorXd y, const GpHyperparams& hp,
                         Eigen::VectorXd alpha, double train_nlml);

  Posterior predict(const Eigen::VectorXd& x) const;

  // Mean-only batch prediction for query rows; never needs the factor.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& Xq) const;

  // Drops the stored Cholesky factor (keeps the weight vector alpha).
  void release_factor();
  bool has_factor() const { return factor_.has_value(); }

  const GpHyperparams& hyperparams() const { return hp_; }
  const Eigen::VectorXd& targets() const { return y_; }
  const Eigen::VectorXd& weights() const { return alpha_; }
  const Eigen::MatrixXd& inputs() const { return *X_; }
  std::shared_ptr<const Eigen::MatrixXd> inputs_ptr() const { return X_; }
  double train_nlml() const { return nlml_; }
  int sample_count() const { return static_cast<int>(y_.size()); }

 private:
  std::shared_ptr<const Eigen::MatrixXd> X_;
  std::shared_ptr<const Eigen::MatrixXd> sqdist_;
  Eigen::VectorXd y_;
  GpHyperparams hp_;
  Eigen::VectorXd alpha_;
  std::optional<Eigen::MatrixXd> factor_;  // lower-triangular L with K = L L^T
  double nlml_ = 0.0;
};

}  // namespace formnet
