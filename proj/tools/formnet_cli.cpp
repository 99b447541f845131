// Command-line front end for the cable-net identification pipeline.
//
// Subcommands mirror the pipeline stages:
//   net       generate a synthetic quad-grid net file
//   gen       freeze a scenario from a net and generate a sample dataset
//   train     fit per-edge GP models on a training split
//   identify  estimate length deviations from one measured form
//   eval      cross-validate a model and compute form errors
//   plot      emit CSV + SVG renderings from an evaluation report
//
// Every primary output is byte-deterministic for fixed inputs and seed;
// timestamps live only in the ".meta.json" sidecar written next to each
// output. Artifacts record content hashes of their inputs, and downstream
// commands refuse inputs whose hashes do not match.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "formnet/dataset.hpp"
#include "formnet/equilibrium.hpp"
#include "formnet/errors.hpp"
#include "formnet/hash.hpp"
#include "formnet/identify.hpp"
#include "formnet/net_model.hpp"
#include "json_io.hpp"

namespace {

using formnet::InvalidInputError;
using formnet::IoError;
using formnet::ProvenanceError;
using nlohmann::json;

// ---------------------------------------------------------------- config

// One bag of settings shared by all subcommands; a JSON config file assigns
// defaults, explicit flags override. Field names match the JSON keys.
struct RunConfig {
  std::string out_dir = ".";
  std::uint64_t seed = 0;

  // net
  std::string grid = "5x5";
  std::string frame = "4x3";
  double sag = 0.6;
  double ea = 1000.0;
  double pretension = 0.98;

  // gen
  std::string net;
  int n_samples = 450;
  double bounds_mm = 5.0;
  double bound_lo_mm = 0.0;  // asymmetric override; 0 means "use bounds_mm"
  double bound_hi_mm = 0.0;
  double tolerance = 1e-8;

  // train
  std::string scenario;
  std::string data;
  std::string split = "400/50";
  std::uint64_t split_seed = 0;
  bool split_seed_set = false;
  bool sequential_split = false;
  int n_starts = 5;
  bool optimize_noise = false;
  double sigma_w = 1e-8;
  bool tie_hypers = false;
  bool release_factors = false;
  int threads = 0;

  // identify / eval / plot
  std::string model;
  std::string measurement;
  int sample = -1;
  int form_sample = 0;
  std::string eval;
  std::string fig = "errors";
};

void apply_config_file(const std::string& path, RunConfig& cfg) {
  const json doc =
      formnet::json_io::parse_json(formnet::json_io::read_text_file(path),
                                   "config");
  if (!doc.is_object()) throw IoError("config file must hold a JSON object");
  const auto get = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("out_dir", cfg.out_dir);
  get("seed", cfg.seed);
  get("grid", cfg.grid);
  get("frame", cfg.frame);
  get("sag", cfg.sag);
  get("ea", cfg.ea);
  get("pretension", cfg.pretension);
  get("net", cfg.net);
  get("n_samples", cfg.n_samples);
  get("bounds_mm", cfg.bounds_mm);
  get("bound_lo_mm", cfg.bound_lo_mm);
  get("bound_hi_mm", cfg.bound_hi_mm);
  get("tolerance", cfg.tolerance);
  get("scenario", cfg.scenario);
  get("data", cfg.data);
  get("split", cfg.split);
  if (doc.contains("split_seed")) {
    cfg.split_seed = doc.at("split_seed").get<std::uint64_t>();
    cfg.split_seed_set = true;
  }
  get("sequential_split", cfg.sequential_split);
  get("n_starts", cfg.n_starts);
  get("optimize_noise", cfg.optimize_noise);
  get("sigma_w", cfg.sigma_w);
  get("tie_hypers", cfg.tie_hypers);
  get("release_factors", cfg.release_factors);
  get("threads", cfg.threads);
  get("model", cfg.model);
  get("measurement", cfg.measurement);
  get("sample", cfg.sample);
  get("form_sample", cfg.form_sample);
  get("eval", cfg.eval);
  get("fig", cfg.fig);
}

// ---------------------------------------------------------------- helpers

std::pair<int, int> parse_grid(const std::string& text) {
  int nx = 0, ny = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> nx >> x >> ny) || x != 'x' || !in.eof())
    throw InvalidInputError("grid must look like \"5x5\": " + text);
  return {nx, ny};
}

std::pair<double, double> parse_frame(const std::string& text) {
  double w = 0, h = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> w >> x >> h) || x != 'x' || !in.eof())
    throw InvalidInputError("frame must look like \"4x3\": " + text);
  return {w, h};
}

std::pair<int, int> parse_split(const std::string& text) {
  int a = 0, b = 0;
  char slash = 0;
  std::istringstream in(text);
  if (!(in >> a >> slash >> b) || slash != '/' || !in.eof())
    throw InvalidInputError("split must look like \"400/50\": " + text);
  return {a, b};
}

std::string default_path(const RunConfig& cfg, const char* name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

std::string utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string g_command_line;  // set once in main for sidecar records

// Sidecar metadata next to a primary output: the only place timestamps go.
void write_sidecar(const std::string& primary_path, const json& inputs) {
  json meta;
  meta["created_utc"] = utc_now();
  meta["command"] = g_command_line;
  meta["inputs"] = inputs;
  meta["output_hash"] = formnet::file_hash(primary_path);
  formnet::json_io::write_text_file(primary_path + ".meta.json",
                                    meta.dump(2) + "\n");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty())
    throw InvalidInputError(std::string("missing required path: ") + what);
  if (!std::filesystem::exists(path))
    throw IoError(std::string(what) + " not found: " + path);
}

std::pair<double, double> bounds_from(const RunConfig& cfg) {
  if (cfg.bound_lo_mm != 0.0 || cfg.bound_hi_mm != 0.0)
    return {cfg.bound_lo_mm * 1e-3, cfg.bound_hi_mm * 1e-3};
  if (!(cfg.bounds_mm > 0.0))
    throw InvalidInputError("--bounds-mm must be positive");
  return {-cfg.bounds_mm * 1e-3, cfg.bounds_mm * 1e-3};
}

formnet::SplitMode split_mode(const RunConfig& cfg) {
  return cfg.sequential_split ? formnet::SplitMode::Sequential
                              : formnet::SplitMode::Shuffled;
}

const char* split_mode_name(const RunConfig& cfg) {
  return cfg.sequential_split ? "sequential" : "shuffled";
}

// ------------------------------------------------------------- svg output

struct PlotSeries {
  std::string name;
  std::string color;
  bool cross = false;  // cross markers instead of circles
  std::vector<std::pair<double, double>> points;
};

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Minimal self-contained scatter/line rendering: axes, ticks, legend.
std::string render_svg(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel,
                       const std::vector<PlotSeries>& series) {
  const double width = 640, height = 420;
  const double ml = 64, mr = 20, mt = 34, mb = 48;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const PlotSeries& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax - xmin <= 0) {
    xmin -= 1;
    xmax += 1;
  }
  if (ymax - ymin <= 0) {
    ymin -= 1;
    ymax += 1;
  }
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  const auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width
      << " " << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" "
      << "font-size=\"13\">" << title << "</text>\n";

  // frame and ticks
  out << "<rect x=\"" << fmt2(ml) << "\" y=\"" << fmt2(mt) << "\" width=\""
      << fmt2(width - ml - mr) << "\" height=\"" << fmt2(height - mt - mb)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  const int n_ticks = 5;
  for (int i = 0; i <= n_ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / n_ticks;
    const double fy = ymin + (ymax - ymin) * i / n_ticks;
    out << "<line x1=\"" << fmt2(px(fx)) << "\" y1=\"" << fmt2(height - mb)
        << "\" x2=\"" << fmt2(px(fx)) << "\" y2=\"" << fmt2(height - mb + 4)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt2(px(fx)) << "\" y=\"" << fmt2(height - mb + 16)
        << "\" text-anchor=\"middle\">" << fmt_tick(fx) << "</text>\n";
    out << "<line x1=\"" << fmt2(ml - 4) << "\" y1=\"" << fmt2(py(fy))
        << "\" x2=\"" << fmt2(ml) << "\" y2=\"" << fmt2(py(fy))
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt2(ml - 7) << "\" y=\"" << fmt2(py(fy) + 4)
        << "\" text-anchor=\"end\">" << fmt_tick(fy) << "</text>\n";
  }
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  out << "<text x=\"16\" y=\"" << height / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << height / 2
      << ")\">" << ylabel << "</text>\n";

  // series markers
  for (const PlotSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      const std::string cx = fmt2(px(x)), cy = fmt2(py(y));
      if (s.cross) {
        out << "<path d=\"M " << cx << " " << cy
            << " m -3 -3 l 6 6 m 0 -6 l -6 6\" stroke=\"" << s.color
            << "\" fill=\"none\"/>\n";
      } else {
        out << "<circle cx=\"" << cx << "\" cy=\"" << cy
            << "\" r=\"3\" fill=\"none\" stroke=\"" << s.color << "\"/>\n";
      }
    }
  }

  // legend, top-right inside the frame
  double ly = mt + 14;
  for (const PlotSeries& s : series) {
    const double lx = width - mr - 150;
    if (s.cross)
      out << "<path d=\"M " << fmt2(lx) << " " << fmt2(ly)
          << " m -3 -3 l 6 6 m 0 -6 l -6 6\" stroke=\"" << s.color
          << "\" fill=\"none\"/>\n";
    else
      out << "<circle cx=\"" << fmt2(lx) << "\" cy=\"" << fmt2(ly)
          << "\" r=\"3\" fill=\"none\" stroke=\"" << s.color << "\"/>\n";
    out << "<text x=\"" << fmt2(lx + 8) << "\" y=\"" << fmt2(ly + 4) << "\">"
        << s.name << "</text>\n";
    ly += 15;
  }
  out << "</svg>\n";
  return out.str();
}

// ------------------------------------------------------------ subcommands

int cmd_net(const RunConfig& cfg, const std::string& out) {
  const auto [nx, ny] = parse_grid(cfg.grid);
  if (nx < 3 || ny < 3)
    throw InvalidInputError("grid must be at least 3x3 to have free nodes");
  const auto [fw, fh] = parse_frame(cfg.frame);
  const formnet::Net net =
      formnet::synth_net(nx, ny, {fw, fh}, {cfg.sag}, cfg.seed, cfg.ea,
                         cfg.pretension);
  formnet::save_net(net, out);
  write_sidecar(out, json::object());
  std::cout << "wrote " << out << " (" << net.topology.n_interior
            << " interior nodes, " << net.topology.m_interior
            << " interior edges)\n";
  return 0;
}

int cmd_gen(const RunConfig& cfg, const std::string& out,
            const std::string& out_scenario) {
  require_file(cfg.net, "--net");
  const auto [lo, hi] = bounds_from(cfg);
  const formnet::Net net = formnet::load_net(cfg.net);
  const formnet::Scenario scenario =
      formnet::make_scenario(net, lo, hi, cfg.seed, cfg.tolerance);
  const formnet::GenerateResult result =
      formnet::generate(scenario, cfg.n_samples);

  formnet::save_scenario(scenario, out_scenario);
  formnet::save_dataset(scenario, result, out);
  const json inputs = {{"net", formnet::file_hash(cfg.net)}};
  write_sidecar(out_scenario, inputs);
  write_sidecar(out, inputs);
  std::cout << "wrote " << out_scenario << " and " << out << " ("
            << result.samples.size() << " samples, "
            << result.failed_indices.size() << " failed)\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out) {
  require_file(cfg.scenario, "--scenario");
  require_file(cfg.data, "--data");
  const formnet::Scenario scenario = formnet::load_scenario(cfg.scenario);
  const formnet::Dataset dataset = formnet::load_dataset(cfg.data);
  if (dataset.header.scenario_hash != formnet::scenario_hash(scenario))
    throw ProvenanceError(
        "dataset was generated from a different scenario than " +
        cfg.scenario);

  const auto [n_train, n_validation] = parse_split(cfg.split);
  const std::uint64_t split_seed =
      cfg.split_seed_set ? cfg.split_seed : cfg.seed;
  const auto [train_set, validation] = formnet::split(
      dataset.samples, n_train, n_validation, split_seed, split_mode(cfg));
  (void)validation;

  formnet::TrainOptions options;
  options.fit.n_starts = cfg.n_starts;
  options.fit.optimize_noise = cfg.optimize_noise;
  options.fit.fixed_sigma_w = cfg.sigma_w;
  options.tie_hyperparams = cfg.tie_hypers;
  options.keep_factors = !cfg.release_factors;
  options.n_threads = cfg.threads;
  const formnet::Identifier identifier =
      formnet::Identifier::train(train_set, options);

  formnet::Provenance prov;
  prov.scenario_hash = formnet::scenario_hash(scenario);
  prov.dataset_hash = formnet::file_hash(cfg.data);
  prov.seed = cfg.seed;
  prov.split_seed = split_seed;
  prov.n_train = n_train;
  prov.n_validation = n_validation;
  prov.split_mode = split_mode_name(cfg);
  formnet::save_identifier(identifier, prov, out);
  write_sidecar(out, {{"scenario", prov.scenario_hash},
                      {"data", prov.dataset_hash}});
  std::cout << "wrote " << out << " (" << identifier.edge_count()
            << " edge models, " << identifier.sample_count()
            << " training samples)\n";
  return 0;
}

// Shared by identify and eval: load the model and verify input hashes.
formnet::LoadedModel load_checked_model(const RunConfig& cfg,
                                        const formnet::Scenario* scenario) {
  require_file(cfg.model, "--model");
  formnet::LoadedModel loaded = formnet::load_identifier(cfg.model);
  if (scenario &&
      loaded.provenance.scenario_hash != formnet::scenario_hash(*scenario))
    throw ProvenanceError("model was trained under a different scenario");
  if (!cfg.data.empty() &&
      loaded.provenance.dataset_hash != formnet::file_hash(cfg.data))
    throw ProvenanceError("model was trained on a different dataset than " +
                          cfg.data);
  return loaded;
}

int cmd_identify(const RunConfig& cfg, const std::string& out) {
  std::optional<formnet::Scenario> scenario;
  if (!cfg.scenario.empty()) {
    require_file(cfg.scenario, "--scenario");
    scenario = formnet::load_scenario(cfg.scenario);
  }
  const formnet::LoadedModel loaded =
      load_checked_model(cfg, scenario ? &*scenario : nullptr);

  Eigen::VectorXd delta_r;
  if (cfg.sample >= 0) {
    require_file(cfg.data, "--data");
    const formnet::Dataset dataset = formnet::load_dataset(cfg.data);
    bool found = false;
    for (const formnet::SamplePair& s : dataset.samples) {
      if (s.index == cfg.sample) {
        delta_r = s.delta_r;
        found = true;
        break;
      }
    }
    if (!found)
      throw InvalidInputError("sample index not present in dataset: " +
                              std::to_string(cfg.sample));
  } else {
    require_file(cfg.measurement, "--measurement");
    const json doc = formnet::json_io::parse_json(
        formnet::json_io::read_text_file(cfg.measurement), "measurement");
    if (doc.contains("delta_r")) {
      delta_r = formnet::json_io::vector_from_json(doc.at("delta_r"),
                                                   "delta_r");
    } else if (doc.contains("r_interior")) {
      if (!scenario)
        throw InvalidInputError(
            "absolute coordinates need --scenario to subtract the nominal form");
      delta_r = formnet::json_io::vector_from_json(doc.at("r_interior"),
                                                   "r_interior") -
                scenario->nominal_interior;
    } else {
      throw IoError("measurement file needs \"delta_r\" or \"r_interior\"");
    }
  }

  const formnet::Identifier::Identification ident =
      loaded.identifier.identify(delta_r);

  json doc;
  doc["kind"] = "identification";
  doc["format_version"] = 1;
  formnet::Provenance prov = loaded.provenance;
  prov.model_hash = formnet::file_hash(cfg.model);
  doc["provenance"] = {{"scenario_hash", prov.scenario_hash},
                       {"dataset_hash", prov.dataset_hash},
                       {"model_hash", prov.model_hash},
                       {"seed", prov.seed}};
  doc["delta_l0_hat"] = formnet::json_io::vector_to_json(ident.delta_l0_hat);
  doc["sigma"] = formnet::json_io::vector_to_json(ident.sigma);
  doc["extrapolation"] = ident.extrapolation;
  if (scenario) {
    const Eigen::VectorXd absolute =
        scenario->nominal_params.interior_lengths(
            scenario->topology.m_interior) +
        ident.delta_l0_hat;
    doc["l0_identified"] = formnet::json_io::vector_to_json(absolute);
  }
  formnet::json_io::write_text_file(out, doc.dump(2) + "\n");
  write_sidecar(out, {{"model", prov.model_hash}});
  std::cout << "wrote " << out
            << (ident.extrapolation ? " (extrapolation warning: measurement "
                                      "far from training data)\n"
                                    : "\n");
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& out,
             const std::string& out_csv) {
  require_file(cfg.scenario, "--scenario");
  require_file(cfg.data, "--data");
  const formnet::Scenario scenario = formnet::load_scenario(cfg.scenario);
  const formnet::LoadedModel loaded = load_checked_model(cfg, &scenario);
  const formnet::Dataset dataset = formnet::load_dataset(cfg.data);

  // Reconstruct the exact held-out split recorded at training time.
  const formnet::Provenance& tp = loaded.provenance;
  const auto mode = tp.split_mode == "sequential"
                        ? formnet::SplitMode::Sequential
                        : formnet::SplitMode::Shuffled;
  const auto [train_set, validation] = formnet::split(
      dataset.samples, tp.n_train, tp.n_validation, tp.split_seed, mode);
  (void)train_set;
  if (validation.empty())
    throw InvalidInputError("model was trained without a validation split");

  formnet::EvalReport report =
      formnet::evaluate_cv(loaded.identifier, validation);

  // Form errors for one validation scenario: identify from its form
  // deviation, then compare the equilibria.
  if (cfg.form_sample < 0 ||
      cfg.form_sample >= static_cast<int>(validation.size()))
    throw InvalidInputError("--form-sample is outside the validation set");
  const formnet::SamplePair& probe = validation[cfg.form_sample];
  const formnet::Identifier::Identification ident =
      loaded.identifier.identify(probe.delta_r);
  report.form_errors = formnet::evaluate_form_errors(
      scenario, probe.delta_l0, ident.delta_l0_hat);

  formnet::Provenance prov = loaded.provenance;
  prov.model_hash = formnet::file_hash(cfg.model);
  formnet::save_eval_report(report, prov, out);
  formnet::json_io::write_text_file(out_csv,
                                    formnet::eval_errors_csv(report));
  const json inputs = {{"model", prov.model_hash},
                       {"data", prov.dataset_hash},
                       {"scenario", prov.scenario_hash}};
  write_sidecar(out, inputs);
  write_sidecar(out_csv, inputs);

  std::cout << "wrote " << out << " and " << out_csv << "\n"
            << "  MSE  = " << report.mse << " m^2\n"
            << "  MRSE = " << report.mrse << "\n"
            << "  form RMSE nominal    = "
            << report.form_errors->nominal_stats.rmse << " m\n"
            << "  form RMSE identified = "
            << report.form_errors->identified_stats.rmse << " m\n";
  return 0;
}

int cmd_plot(const RunConfig& cfg, const std::string& out_prefix) {
  require_file(cfg.eval, "--eval");
  const json doc = formnet::json_io::parse_json(
      formnet::json_io::read_text_file(cfg.eval), "eval report");
  if (doc.value("kind", "") != std::string("eval_report"))
    throw IoError("not an evaluation report: " + cfg.eval);

  const std::string csv_path = out_prefix + ".csv";
  const std::string svg_path = out_prefix + ".svg";
  std::ostringstream csv;

  if (cfg.fig == "errors") {
    const json& truths = doc.at("truths");
    const json& predictions = doc.at("predictions");
    csv << "edge,sample,delta_l0_true_mm,delta_l0_hat_mm,error_mm\n";
    PlotSeries truth{"true", "#36648b", false, {}};
    PlotSeries hat{"predicted", "#c05020", true, {}};
    for (std::size_t edge = 0; edge < truths.size(); ++edge) {
      for (std::size_t k = 0; k < truths[edge].size(); ++k) {
        const double t = truths[edge][k].get<double>() * 1e3;
        const double p = predictions[edge][k].get<double>() * 1e3;
        csv << edge << "," << k << "," << json(t).dump() << ","
            << json(p).dump() << "," << json(t - p).dump() << "\n";
        if (k == 0) {  // the rendered figure shows one validation scenario
          truth.points.push_back({static_cast<double>(edge), t});
          hat.points.push_back({static_cast<double>(edge), p});
        }
      }
    }
    formnet::json_io::write_text_file(csv_path, csv.str());
    formnet::json_io::write_text_file(
        svg_path,
        render_svg("True vs predicted length deviations (validation sample 0)",
                   "interior edge index", "deviation [mm]", {truth, hat}));
  } else if (cfg.fig == "form") {
    if (!doc.contains("form_errors"))
      throw InvalidInputError("evaluation report has no form-error block");
    const json& form = doc.at("form_errors");
    const json& nominal = form.at("nominal").at("values");
    const json& identified = form.at("identified").at("values");
    csv << "node,nominal_mm,identified_mm\n";
    PlotSeries nom{"nominal", "#36648b", false, {}};
    PlotSeries idf{"identified", "#c05020", true, {}};
    for (std::size_t i = 0; i < nominal.size(); ++i) {
      const double en = nominal[i].get<double>() * 1e3;
      const double ei = identified[i].get<double>() * 1e3;
      csv << i << "," << json(en).dump() << "," << json(ei).dump() << "\n";
      nom.points.push_back({static_cast<double>(i), en});
      idf.points.push_back({static_cast<double>(i), ei});
    }
    formnet::json_io::write_text_file(csv_path, csv.str());
    formnet::json_io::write_text_file(
        svg_path, render_svg("Form error per interior node",
                             "interior node index", "distance [mm]",
                             {nom, idf}));
  } else {
    throw InvalidInputError("--fig must be \"errors\" or \"form\"");
  }

  const json inputs = {{"eval", formnet::file_hash(cfg.eval)}};
  write_sidecar(csv_path, inputs);
  write_sidecar(svg_path, inputs);
  std::cout << "wrote " << csv_path << " and " << svg_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::ostringstream cmd;
  for (int i = 0; i < argc; ++i) cmd << (i ? " " : "") << argv[i];
  g_command_line = cmd.str();

  RunConfig cfg;

  // The config file (if any) assigns defaults before flags are parsed, so
  // explicit flags always win.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      try {
        apply_config_file(argv[i + 1], cfg);
      } catch (const std::exception& err) {
        std::cerr << json({{"error", "config"}, {"message", err.what()}})
                  << "\n";
        return 2;
      }
    }

  CLI::App app{"cable-net form simulation and parameter identification"};
  app.require_subcommand(1);
  std::string config_path;  // consumed above; registered so parsing accepts it

  std::string out, out_scenario, out_csv, out_prefix;

  CLI::App* net = app.add_subcommand("net", "generate a synthetic net file");
  net->add_option("--config", config_path);
  net->add_option("--grid", cfg.grid, "node lattice, e.g. 5x5");
  net->add_option("--seed", cfg.seed);
  net->add_option("--frame", cfg.frame, "frame footprint in meters, e.g. 4x3");
  net->add_option("--sag", cfg.sag, "corner height of the saddle frame");
  net->add_option("--ea", cfg.ea, "axial stiffness, newtons");
  net->add_option("--pretension", cfg.pretension,
                  "unstressed/layout length ratio");
  net->add_option("--out", out, "output net file");

  CLI::App* gen =
      app.add_subcommand("gen", "freeze a scenario and generate samples");
  gen->add_option("--config", config_path);
  gen->add_option("--net", cfg.net, "input net file");
  gen->add_option("--seed", cfg.seed);
  gen->add_option("--n-samples", cfg.n_samples);
  gen->add_option("--bounds-mm", cfg.bounds_mm,
                  "symmetric uncertainty bound in millimeters");
  gen->add_option("--tolerance", cfg.tolerance, "solver residual tolerance");
  gen->add_option("--out", out, "output dataset file");
  gen->add_option("--out-scenario", out_scenario, "output scenario file");

  CLI::App* train = app.add_subcommand("train", "fit per-edge GP models");
  train->add_option("--config", config_path);
  train->add_option("--scenario", cfg.scenario);
  train->add_option("--data", cfg.data);
  train->add_option("--split", cfg.split, "train/validation sizes, e.g. 400/50");
  auto* split_seed_opt = train->add_option("--split-seed", cfg.split_seed,
                                           "defaults to --seed");
  train->add_flag("--sequential-split", cfg.sequential_split);
  train->add_option("--seed", cfg.seed);
  train->add_option("--n-starts", cfg.n_starts, "multi-start count per edge");
  train->add_flag("--optimize-noise", cfg.optimize_noise);
  train->add_option("--sigma-w", cfg.sigma_w, "fixed noise level");
  train->add_flag("--tie-hypers", cfg.tie_hypers,
                  "one shared hyperparameter fit for all edges");
  train->add_flag("--release-factors", cfg.release_factors,
                  "drop Cholesky factors after training (saves memory)");
  train->add_option("--threads", cfg.threads);
  train->add_option("--out", out, "output model file");

  CLI::App* identify =
      app.add_subcommand("identify", "identify lengths from one measurement");
  identify->add_option("--config", config_path);
  identify->add_option("--model", cfg.model);
  identify->add_option("--scenario", cfg.scenario,
                       "optional; enables absolute lengths in the output");
  identify->add_option("--measurement", cfg.measurement,
                       "JSON file with delta_r or r_interior");
  identify->add_option("--sample", cfg.sample,
                       "use this dataset sample as the measurement");
  identify->add_option("--data", cfg.data, "dataset for --sample");
  identify->add_option("--out", out, "output identification file");

  CLI::App* eval = app.add_subcommand("eval", "cross-validate a model");
  eval->add_option("--config", config_path);
  eval->add_option("--model", cfg.model);
  eval->add_option("--scenario", cfg.scenario);
  eval->add_option("--data", cfg.data);
  eval->add_option("--form-sample", cfg.form_sample,
                   "validation sample used for the form-error block");
  eval->add_option("--threads", cfg.threads);
  eval->add_option("--out", out, "output report file");
  eval->add_option("--out-csv", out_csv, "output per-edge error CSV");

  CLI::App* plot = app.add_subcommand("plot", "emit CSV + SVG from a report");
  plot->add_option("--config", config_path);
  plot->add_option("--eval", cfg.eval, "evaluation report file");
  plot->add_option("--fig", cfg.fig, "errors | form");
  plot->add_option("--out", out_prefix, "output path prefix");

  CLI11_PARSE(app, argc, argv);
  if (split_seed_opt->count() > 0) cfg.split_seed_set = true;

  try {
    if (net->parsed())
      return cmd_net(cfg, out.empty() ? default_path(cfg, "net.json") : out);
    if (gen->parsed())
      return cmd_gen(
          cfg, out.empty() ? default_path(cfg, "dataset.jsonl") : out,
          out_scenario.empty() ? default_path(cfg, "scenario.json")
                               : out_scenario);
    if (train->parsed())
      return cmd_train(cfg,
                       out.empty() ? default_path(cfg, "model.json") : out);
    if (identify->parsed())
      return cmd_identify(
          cfg, out.empty() ? default_path(cfg, "identification.json") : out);
    if (eval->parsed())
      return cmd_eval(cfg, out.empty() ? default_path(cfg, "eval.json") : out,
                      out_csv.empty() ? default_path(cfg, "eval.csv")
                                      : out_csv);
    if (plot->parsed())
      return cmd_plot(cfg,
                      out_prefix.empty() ? default_path(cfg, "plot")
                                         : out_prefix);
  } catch (const InvalidInputError& err) {
    std::cerr << json({{"error", "invalid_input"}, {"message", err.what()}})
              << "\n";
    return 2;
  } catch (const formnet::DimensionError& err) {
    std::cerr << json({{"error", "dimension"}, {"message", err.what()}})
              << "\n";
    return 2;
  } catch (const ProvenanceError& err) {
    std::cerr << json({{"error", "provenance"}, {"message", err.what()}})
              << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << json({{"error", "runtime"}, {"message", err.what()}}) << "\n";
    return 1;
  }
  return 0;
}
