#include "formnet/identify.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "formnet/equilibrium.hpp"
#include "formnet/errors.hpp"
#include "formnet/parallel.hpp"
#include "json_io.hpp"

namespace formnet {

using nlohmann::json;

namespace {

// A posterior deviation at or above this fraction of the prior deviation
// counts as "the data said nothing"; when every edge is at that level the
// query is flagged as extrapolation.
constexpr double kPriorReversionRatio = 0.9;

}  // namespace

Identifier Identifier::train(const std::vector<SamplePair>& train_set,
                             const TrainOptions& options) {
  auto X = std::make_shared<const Eigen::MatrixXd>(inputs_matrix(train_set));
  const Eigen::MatrixXd Y = targets_matrix(train_set);
  if (X->rows() < 2)
    throw InvalidInputError("training needs at least two samples");
  if (X->cols() < 1 || Y.cols() < 1)
    throw InvalidInputError("training samples carry no data");
  auto sqdist =
      std::make_shared<const Eigen::MatrixXd>(pairwise_sqdist(*X));

  const int m = static_cast<int>(Y.cols());
  Identifier identifier;
  identifier.n_threads_ = options.n_threads;
  identifier.models_.resize(m);
  identifier.fits_.resize(m);
  std::vector<std::string> failures(m);

  if (options.fixed_hyperparams) options.fixed_hyperparams->validate();
  FitResult tied;
  if (options.tie_hyperparams && !options.fixed_hyperparams)
    tied = fit_hyperparams_tied(*sqdist, Y, options.fit);

  parallel_for(
      m,
      [&](int edge) {
        try {
          FitResult fit;
          if (options.fixed_hyperparams) {
            fit.hyperparams = *options.fixed_hyperparams;
          } else if (options.tie_hyperparams) {
            fit = tied;
          } else {
            fit = fit_hyperparams(*sqdist, Y.col(edge), options.fit);
          }
          identifier.models_[edge] =
              GpModel::train(X, sqdist, Y.col(edge), fit.hyperparams,
                             options.keep_factors);
          if (options.fixed_hyperparams)
            fit.nlml = identifier.models_[edge].train_nlml();
          identifier.fits_[edge] = std::move(fit);
        } catch (const std::exception& err) {
          failures[edge] = err.what();
        }
      },
      options.n_threads);

  std::ostringstream failed;
  int n_failed = 0;
  for (int edge = 0; edge < m; ++edge) {
    if (failures[edge].empty()) continue;
    failed << (n_failed++ ? ", " : "") << edge << " (" << failures[edge]
           << ")";
  }
  if (n_failed > 0)
    throw TrainingError("hyperparameter fit failed for " +
                        std::to_string(n_failed) + " edge(s): " +
                        failed.str());
  return identifier;
}

Identifier::Identification Identifier::identify(
    const Eigen::VectorXd& delta_r_meas) const {
  if (models_.empty())
    throw InvalidInputError("identifier has not been trained");
  if (delta_r_meas.size() != input_dim())
    throw DimensionError("measured form deviation has wrong dimension");

  const int m = edge_count();
  Identification result;
  result.delta_l0_hat.resize(m);
  result.sigma.resize(m);
  parallel_for(
      m,
      [&](int edge) {
        const GpModel::Posterior post = models_[edge].predict(delta_r_meas);
        result.delta_l0_hat[edge] = post.mean;
        result.sigma[edge] = std::sqrt(post.variance);
      },
      n_threads_);

  result.extrapolation = true;
  for (int edge = 0; edge < m; ++edge) {
    if (result.sigma[edge] <
        kPriorReversionRatio * models_[edge].hyperparams().sigma_f) {
      result.extrapolation = false;
      break;
    }
  }
  return result;
}

Eigen::MatrixXd Identifier::predict_means(const Eigen::MatrixXd& Xq) const {
  if (models_.empty())
    throw InvalidInputError("identifier has not been trained");
  if (Xq.cols() != input_dim())
    throw DimensionError("query rows have wrong dimension");
  Eigen::MatrixXd P(Xq.rows(), edge_count());
  parallel_for(
      edge_count(),
      [&](int edge) { P.col(edge) = models_[edge].predict_mean(Xq); },
      n_threads_);
  return P;
}

void Identifier::release_factors() {
  for (GpModel& model : models_) model.release_factor();
}

ErrorStats error_stats(const Eigen::VectorXd& errors) {
  if (errors.size() == 0)
    throw DimensionError("cannot summarize an empty error vector");
  ErrorStats stats;
  stats.max_abs = errors.cwiseAbs().maxCoeff();
  stats.min_abs = errors.cwiseAbs().minCoeff();
  stats.mean = errors.mean();
  stats.rmse =
      std::sqrt(errors.squaredNorm() / static_cast<double>(errors.size()));
  return stats;
}

EvalReport evaluate_cv(const Identifier& identifier,
                       const std::vector<SamplePair>& validation) {
  if (validation.empty())
    throw InvalidInputError("validation set is empty");

  const Eigen::MatrixXd Xq = inputs_matrix(validation);
  EvalReport report;
  report.truths = targets_matrix(validation).transpose();
  report.predictions = identifier.predict_means(Xq).transpose();
  report.errors = report.truths - report.predictions;

  const int m = static_cast<int>(report.errors.rows());
  const double n_v = static_cast<double>(report.errors.cols());
  report.mean_error = report.errors.rowwise().mean();
  report.std_error.resize(m);
  for (int edge = 0; edge < m; ++edge) {
    const double mean = report.mean_error[edge];
    report.std_error[edge] = std::sqrt(
        (report.errors.row(edge).array() - mean).square().sum() / n_v);
  }
  report.mse = report.errors.array().square().mean();

  double ratio_sum = 0.0;
  int included = 0;
  for (int edge = 0; edge < m; ++edge) {
    const double denom = report.truths.row(edge).squaredNorm();
    if (denom == 0.0) {
      report.mrse_excluded_edges.push_back(edge);
      continue;
    }
    ratio_sum += report.errors.row(edge).squaredNorm() / denom;
    ++included;
  }
  report.mrse = included > 0 ? ratio_sum / included : 0.0;
  return report;
}

FormErrors evaluate_form_errors(const Scenario& scenario,
                                const Eigen::VectorXd& delta_l0_true,
                                const Eigen::VectorXd& delta_l0_identified) {
  scenario.validate();
  const int m = scenario.topology.m_interior;
  if (delta_l0_true.size() != m || delta_l0_identified.size() != m)
    throw DimensionError("length deviations must have one entry per interior edge");

  const auto solve_for = [&](const Eigen::VectorXd& delta) {
    EdgeParams params = scenario.nominal_params;
    params.unstressed_length.head(m) += delta;
    SolveOptions options;
    options.tolerance = scenario.solver_tolerance;
    options.initial_interior = scenario.nominal_interior;
    return solve_equilibrium(scenario.topology, params, scenario.boundary,
                             options)
        .interior;
  };
  const Eigen::VectorXd r_true = solve_for(delta_l0_true);
  const Eigen::VectorXd r_ident = solve_for(delta_l0_identified);

  const int n = scenario.topology.n_interior;
  FormErrors form;
  form.nominal.resize(n);
  form.identified.resize(n);
  for (int i = 0; i < n; ++i) {
    form.nominal[i] =
        (r_true.segment<3>(3 * i) - scenario.nominal_interior.segment<3>(3 * i))
            .norm();
    form.identified[i] =
        (r_true.segment<3>(3 * i) - r_ident.segment<3>(3 * i)).norm();
  }
  form.nominal_stats = error_stats(form.nominal);
  form.identified_stats = error_stats(form.identified);
  return form;
}

// --- serialization ------------------------------------------------------

namespace {

json provenance_to_json(const Provenance& p) {
  json doc;
  doc["scenario_hash"] = p.scenario_hash;
  doc["dataset_hash"] = p.dataset_hash;
  if (!p.model_hash.empty()) doc["model_hash"] = p.model_hash;
  doc["seed"] = p.seed;
  doc["split_seed"] = p.split_seed;
  doc["n_train"] = p.n_train;
  doc["n_validation"] = p.n_validation;
  doc["split_mode"] = p.split_mode;
  return doc;
}

Provenance provenance_from_json(const json& doc) {
  Provenance p;
  p.scenario_hash = doc.value("scenario_hash", "");
  p.dataset_hash = doc.value("dataset_hash", "");
  p.model_hash = doc.value("model_hash", "");
  p.seed = doc.value("seed", std::uint64_t{0});
  p.split_seed = doc.value("split_seed", std::uint64_t{0});
  p.n_train = doc.value("n_train", 0);
  p.n_validation = doc.value("n_validation", 0);
  p.split_mode = doc.value("split_mode", "");
  return p;
}

json matrix_rows_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    rows.push_back(json_io::vector_to_json(M.row(r)));
  return rows;
}

json stats_to_json(const ErrorStats& stats) {
  json doc;
  doc["max_abs"] = stats.max_abs;
  doc["min_abs"] = stats.min_abs;
  doc["mean"] = stats.mean;
  doc["rmse"] = stats.rmse;
  return doc;
}

// Full-precision decimal rendering (shortest round-trip form).
std::string fmt(double v) { return json(v).dump(); }

}  // namespace

struct IdentifierCodec {
  static json encode(const Identifier& identifier, const Provenance& prov) {
    json doc;
    doc["kind"] = "model";
    doc["format_version"] = 1;
    doc["provenance"] = provenance_to_json(prov);
    doc["inputs"] = matrix_rows_to_json(identifier.models_.empty()
                                            ? Eigen::MatrixXd(0, 0)
                                            : identifier.models_[0].inputs());
    json edges = json::array();
    for (std::size_t i = 0; i < identifier.models_.size(); ++i) {
      const GpModel& model = identifier.models_[i];
      const FitResult& fit = identifier.fits_[i];
      json entry;
      entry["lambda"] = model.hyperparams().lambda;
      entry["sigma_f"] = model.hyperparams().sigma_f;
      entry["sigma_w"] = model.hyperparams().sigma_w;
      entry["nlml"] = model.train_nlml();
      entry["fit_iterations"] = fit.iterations;
      entry["starts_tried"] = fit.starts_tried;
      entry["starts_failed"] = fit.starts_failed;
      entry["y"] = json_io::vector_to_json(model.targets());
      entry["alpha"] = json_io::vector_to_json(model.weights());
      edges.push_back(std::move(entry));
    }
    doc["edges"] = edges;
    return doc;
  }

  static LoadedModel decode(const json& doc) {
    if (doc.value("kind", "") != std::string("model"))
      throw IoError("not a model file");
    if (doc.value("format_version", 0) != 1)
      throw IoError("unsupported model format version");
    try {
      return decode_checked(doc);
    } catch (const json::exception& err) {
      // Missing or ill-typed keys surface as file-format errors.
      throw IoError(std::string("malformed model file: ") + err.what());
    }
  }

  static LoadedModel decode_checked(const json& doc) {
    const json& inputs = doc.at("inputs");
    const Eigen::Index n = inputs.size();
    const Eigen::Index d = n > 0 ? inputs[0].size() : 0;
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index r = 0; r < n; ++r)
      X.row(r) = json_io::vector_from_json(inputs[r], "inputs");
    auto X_ptr = std::make_shared<const Eigen::MatrixXd>(std::move(X));
    auto sqdist =
        std::make_shared<const Eigen::MatrixXd>(pairwise_sqdist(*X_ptr));

    LoadedModel loaded;
    loaded.provenance = provenance_from_json(doc.at("provenance"));
    for (const json& entry : doc.at("edges")) {
      GpHyperparams hp;
      hp.lambda = entry.at("lambda").get<double>();
      hp.sigma_f = entry.at("sigma_f").get<double>();
      hp.sigma_w = entry.at("sigma_w").get<double>();
      FitResult fit;
      fit.hyperparams = hp;
      fit.nlml = entry.at("nlml").get<double>();
      fit.iterations = entry.at("fit_iterations").get<int>();
      fit.starts_tried = entry.at("starts_tried").get<int>();
      fit.starts_failed = entry.at("starts_failed").get<int>();
      loaded.identifier.models_.push_back(GpModel::restore(
          X_ptr, sqdist, json_io::vector_from_json(entry.at("y"), "y"), hp,
          json_io::vector_from_json(entry.at("alpha"), "alpha"), fit.nlml));
      loaded.identifier.fits_.push_back(std::move(fit));
    }
    return loaded;
  }
};

void save_identifier(const Identifier& identifier, const Provenance& provenance,
                     const std::string& path) {
  json_io::write_text_file(
      path, IdentifierCodec::encode(identifier, provenance).dump() + "\n");
}

LoadedModel load_identifier(const std::string& path) {
  return IdentifierCodec::decode(
      json_io::parse_json(json_io::read_text_file(path), "model"));
}

std::string eval_report_to_json(const EvalReport& report,
                                const Provenance& provenance) {
  json doc;
  doc["kind"] = "eval_report";
  doc["format_version"] = 1;
  doc["provenance"] = provenance_to_json(provenance);
  doc["m_interior"] = report.errors.rows();
  doc["n_validation"] = report.errors.cols();
  doc["mse"] = report.mse;
  doc["mrse"] = report.mrse;
  doc["mrse_excluded_edges"] = report.mrse_excluded_edges;
  doc["per_edge_mean"] = json_io::vector_to_json(report.mean_error);
  doc["per_edge_std"] = json_io::vector_to_json(report.std_error);
  doc["errors"] = matrix_rows_to_json(report.errors);
  doc["truths"] = matrix_rows_to_json(report.truths);
  doc["predictions"] = matrix_rows_to_json(report.predictions);
  if (report.form_errors) {
    json form;
    form["nominal"] = stats_to_json(report.form_errors->nominal_stats);
    form["nominal"]["values"] =
        json_io::vector_to_json(report.form_errors->nominal);
    form["identified"] = stats_to_json(report.form_errors->identified_stats);
    form["identified"]["values"] =
        json_io::vector_to_json(report.form_errors->identified);
    doc["form_errors"] = form;
  }
  return doc.dump(2);
}

void save_eval_report(const EvalReport& report, const Provenance& provenance,
                      const std::string& path) {
  json_io::write_text_file(path,
                           eval_report_to_json(report, provenance) + "\n");
}

std::string eval_errors_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "edge,sample,delta_l0_true,delta_l0_hat,error\n";
  for (Eigen::Index edge = 0; edge < report.errors.rows(); ++edge)
    for (Eigen::Index k = 0; k < report.errors.cols(); ++k)
      out << edge << "," << k << "," << fmt(report.truths(edge, k)) << ","
          << fmt(report.predictions(edge, k)) << ","
          << fmt(report.errors(edge, k)) << "\n";
  return out.str();
}

}  // namespace formnet
