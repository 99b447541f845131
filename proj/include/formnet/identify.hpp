#pragma once

// Parameter identification from a single form measurement.
//
// Training builds one GP regressor per interior edge, all sharing the same
// inputs (the form deviations of the training samples) and the same
// precomputed distance table. Identification evaluates every regressor's
// posterior at one measured form deviation, returning the per-edge length
// deviations with their posterior standard deviations. The evaluation suite
// computes cross-validation error statistics and the geometric form errors
// of the nominal and the identified parameter sets.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "formnet/dataset.hpp"
#include "formnet/gp.hpp"

namespace formnet {

struct TrainOptions {
  FitOptions fit;

  // One shared hyperparameter vector fitted on the summed likelihood of all
  // edges (one Cholesky per objective evaluation instead of one per edge).
  // Cheaper, slightly less faithful per edge; off by default.
  bool tie_hyperparams = false;

  // Skip fitting entirely and use these hyperparameters for every edge.
  std::optional<GpHyperparams> fixed_hyperparams;

  // Keep each model's Cholesky factor in memory. Disable at large scale
  // (factors are n^2 each); predictions needing the variance then rebuild
  // the factor transiently.
  bool keep_factors = true;

  int n_threads = 0;  // 0 means the module-wide default
};

class Identifier {
 public:
  struct Identification {
    Eigen::VectorXd delta_l0_hat;  // posterior means, one per interior edge
    Eigen::VectorXd sigma;         // posterior standard deviations
    // True when every edge's posterior deviation stayed at essentially the
    // prior level: the measurement lies far outside the training data.
    bool extrapolation = false;
  };

  Identifier() = default;

  // Fits hyperparameters edge by edge (unless tied or fixed) and trains the
  // per-edge models. Throws TrainingError listing the failing edges if any
  // fit cannot be completed.
  static Identifier train(const std::vector<SamplePair>& train_set,
                          const TrainOptions& options = {});

  Identification identify(const Eigen::VectorXd& delta_r_meas) const;

  // Posterior means of every model at the query rows (rows of Xq are form
  // deviations); result is n_query x edge_count.
  Eigen::MatrixXd predict_means(const Eigen::MatrixXd& Xq) const;

  int edge_count() const { return static_cast<int>(models_.size()); }
  Eigen::Index input_dim() const {
    return models_.empty() ? 0 : models_.front().inputs().cols();
  }
  int sample_count() const {
    return models_.empty() ? 0 : models_.front().sample_count();
  }
  const GpModel& model(int edge) const { return models_.at(edge); }
  const std::vector<FitResult>& fit_results() const { return fits_; }

  void release_factors();

 private:
  friend struct IdentifierCodec;
  std::vector<GpModel> models_;
  std::vector<FitResult> fits_;
  int n_threads_ = 0;
};

// Four summary statistics used for every error vector.
struct ErrorStats {
  double max_abs = 0.0;
  double min_abs = 0.0;
  double mean = 0.0;
  double rmse = 0.0;
};
ErrorStats error_stats(const Eigen::VectorXd& errors);

// Distances between equilibrium forms, one entry per interior node:
// `nominal` compares the true form against the nominal one (the error if no
// identification is done), `identified` against the form solved from the
// identified parameters.
struct FormErrors {
  Eigen::VectorXd nominal;
  Eigen::VectorXd identified;
  ErrorStats nominal_stats;
  ErrorStats identified_stats;
};

// Cross-validation report. Error convention: e_i(kappa) = true minus
// predicted length deviation of edge i on validation sample kappa.
struct EvalReport {
  Eigen::MatrixXd truths;       // edge_count x n_validation
  Eigen::MatrixXd predictions;  // same shape, posterior means
  Eigen::MatrixXd errors;       // truths - predictions
  Eigen::VectorXd mean_error;   // per edge
  Eigen::VectorXd std_error;    // per edge, population normalization (1/n)
  double mse = 0.0;   // mean of e^2 over all edges and samples
  double mrse = 0.0;  // mean over edges of sum e^2 / sum true^2
  std::vector<int> mrse_excluded_edges;  // zero-denominator guard
  std::optional<FormErrors> form_errors;
};

EvalReport evaluate_cv(const Identifier& identifier,
                       const std::vector<SamplePair>& validation);

// Solves the equilibria for the true and the identified interior length
// deviations (the nominal one is stored in the scenario) and returns the
// per-node form distances with their statistics.
FormErrors evaluate_form_errors(const Scenario& scenario,
                                const Eigen::VectorXd& delta_l0_true,
                                const Eigen::VectorXd& delta_l0_identified);

// --- serialization ------------------------------------------------------

// Input hashes recorded in model and report files so downstream stages can
// refuse artifacts from a different pipeline run. The split block records
// how the training set was carved out of the dataset, letting evaluation
// reconstruct the exact held-out samples.
struct Provenance {
  std::string scenario_hash;
  std::string dataset_hash;
  std::string model_hash;  // set on reports only
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  int n_train = 0;
  int n_validation = 0;
  std::string split_mode;  // "shuffled" or "sequential"
};

void save_identifier(const Identifier& identifier,
                     const Provenance& provenance, const std::string& path);

struct LoadedModel {
  Identifier identifier;
  Provenance provenance;
};
LoadedModel load_identifier(const std::string& path);

std::string eval_report_to_json(const EvalReport& report,
                                const Provenance& provenance);
void save_eval_report(const EvalReport& report, const Provenance& provenance,
                      const std::string& path);

// One CSV row per (edge, validation sample): true deviation, predicted
// deviation, and their difference.
std::string eval_errors_csv(const EvalReport& report);

}  // namespace formnet
