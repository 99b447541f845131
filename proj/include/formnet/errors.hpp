#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace formnet {

/// Invalid or inconsistent user input (bad topology, bad config values).
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Mismatched vector/matrix dimensions between arguments.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Coincident tensioned nodes or otherwise collapsing geometry.
struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File / serialization problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Pipeline artifacts whose recorded input hashes do not match.
struct ProvenanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Equilibrium solver did not converge; carries the last iterate so the
/// caller can inspect or warm-start from it.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& message, Eigen::VectorXd last_iterate,
              double residual_inf_norm, int iterations)
      : std::runtime_error(message),
        last_iterate_(std::move(last_iterate)),
        residual_inf_norm_(residual_inf_norm),
        iterations_(iterations) {}

  const Eigen::VectorXd& last_iterate() const { return last_iterate_; }
  double residual_inf_norm() const { return residual_inf_norm_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::VectorXd last_iterate_;
  double residual_inf_norm_ = 0.0;
  int iterations_ = 0;
};

/// Gram matrix factorization failed even after the jitter ladder.
struct FactorizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Too many per-sample solver failures during dataset generation.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Hyperparameter fitting failed for one or more outputs.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace formnet
