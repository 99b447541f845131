#include "formnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "formnet/equilibrium.hpp"
#include "formnet/errors.hpp"
#include "formnet/hash.hpp"
#include "formnet/parallel.hpp"
#include "formnet/rng.hpp"
#include "json_io.hpp"

namespace formnet {

using nlohmann::json;

namespace {

constexpr const char* kSamplingNote =
    "interior unstressed-length deviations drawn i.i.d. uniform per edge";

}  // namespace

void Scenario::validate() const {
  topology.validate();
  nominal_params.validate(topology.edge_count());
  if (boundary.size() != 3 * topology.n_boundary)
    throw DimensionError("scenario boundary coordinates have wrong size");
  if (nominal_interior.size() != 3 * topology.n_interior)
    throw DimensionError("scenario nominal interior coordinates have wrong size");
  if (!(bound_lo < bound_hi))
    throw InvalidInputError("uncertainty bounds must satisfy lo < hi");
  if (!(solver_tolerance > 0.0))
    throw InvalidInputError("solver tolerance must be positive");
  if (topology.m_interior > 0 &&
      nominal_params.interior_lengths(topology.m_interior).minCoeff() +
              bound_lo <=
          0.0)
    throw InvalidInputError(
        "lower uncertainty bound can produce a non-positive unstressed length");
}

Scenario make_scenario(const Net& net, double bound_lo, double bound_hi,
                       std::uint64_t seed, double solver_tolerance) {
  Scenario scenario;
  scenario.topology = net.topology;
  scenario.nominal_params = net.params;
  scenario.boundary = net.geometry.boundary;
  scenario.bound_lo = bound_lo;
  scenario.bound_hi = bound_hi;
  scenario.seed = seed;
  scenario.solver_tolerance = solver_tolerance;

  SolveOptions options;
  options.tolerance = solver_tolerance;
  if (net.geometry.interior.size() == 3 * net.topology.n_interior)
    options.initial_interior = net.geometry.interior;
  scenario.nominal_interior =
      solve_equilibrium(net.topology, net.params, net.geometry.boundary, options)
          .interior;
  scenario.validate();
  return scenario;
}

SamplePair make_sample(const Scenario& scenario, int kappa) {
  if (kappa < 0) throw InvalidInputError("sample index must be non-negative");
  const int m = scenario.topology.m_interior;

  RngStream stream(scenario.seed, static_cast<std::uint64_t>(kappa));
  Eigen::VectorXd delta(m);
  for (int i = 0; i < m; ++i)
    delta[i] = stream.uniform(scenario.bound_lo, scenario.bound_hi);

  EdgeParams perturbed = scenario.nominal_params;
  perturbed.unstressed_length.head(m) += delta;

  SolveOptions options;
  options.tolerance = scenario.solver_tolerance;
  options.initial_interior = scenario.nominal_interior;
  const EquilibriumState state = solve_equilibrium(
      scenario.topology, perturbed, scenario.boundary, options);

  SamplePair pair;
  pair.index = kappa;
  pair.delta_l0 = std::move(delta);
  pair.delta_r = state.interior - scenario.nominal_interior;
  pair.residual = state.residual_inf_norm;
  return pair;
}

GenerateResult generate(const Scenario& scenario, int n_samples) {
  scenario.validate();
  if (n_samples < 1)
    throw InvalidInputError("need at least one sample to generate");

  std::vector<SamplePair> slots(n_samples);
  std::vector<char> succeeded(n_samples, 0);
  parallel_for(n_samples, [&](int kappa) {
    try {
      slots[kappa] = make_sample(scenario, kappa);
      succeeded[kappa] = 1;
    } catch (const SolverError&) {
    } catch (const DegenerateGeometryError&) {
    }
  });

  GenerateResult result;
  result.n_requested = n_samples;
  result.samples.reserve(n_samples);
  for (int kappa = 0; kappa < n_samples; ++kappa) {
    if (succeeded[kappa])
      result.samples.push_back(std::move(slots[kappa]));
    else
      result.failed_indices.push_back(kappa);
  }
  if (static_cast<double>(result.failed_indices.size()) >
      0.01 * n_samples) {
    std::ostringstream msg;
    msg << result.failed_indices.size() << " of " << n_samples
        << " samples failed to solve (more than 1%)";
    throw GenerationError(msg.str());
  }
  return result;
}

std::pair<std::vector<SamplePair>, std::vector<SamplePair>> split(
    const std::vector<SamplePair>& samples, int n_train, int n_validation,
    std::uint64_t seed, SplitMode mode) {
  if (n_train < 0 || n_validation < 0)
    throw InvalidInputError("split sizes must be non-negative");
  const int n = static_cast<int>(samples.size());
  if (n_train + n_validation > n)
    throw InvalidInputError("split asks for more samples than available");

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  if (mode == SplitMode::Shuffled) {
    RngStream stream(seed, 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i],
                order[static_cast<int>(stream.uniform_below(
                    static_cast<std::uint64_t>(i) + 1))]);
  }

  std::pair<std::vector<SamplePair>, std::vector<SamplePair>> out;
  out.first.reserve(n_train);
  out.second.reserve(n_validation);
  for (int i = 0; i < n_train; ++i) out.first.push_back(samples[order[i]]);
  for (int i = 0; i < n_validation; ++i)
    out.second.push_back(samples[order[n_train + i]]);
  return out;
}

Eigen::MatrixXd inputs_matrix(const std::vector<SamplePair>& samples) {
  if (samples.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index d = samples.front().delta_r.size();
  Eigen::MatrixXd X(samples.size(), d);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].delta_r.size() != d)
      throw DimensionError("samples disagree on input dimension");
    X.row(k) = samples[k].delta_r;
  }
  return X;
}

Eigen::MatrixXd targets_matrix(const std::vector<SamplePair>& samples) {
  if (samples.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index m = samples.front().delta_l0.size();
  Eigen::MatrixXd Y(samples.size(), m);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].delta_l0.size() != m)
      throw DimensionError("samples disagree on target dimension");
    Y.row(k) = samples[k].delta_l0;
  }
  return Y;
}

// --- serialization ------------------------------------------------------

std::string scenario_to_json(const Scenario& s) {
  json doc;
  doc["format_version"] = 1;
  doc["kind"] = "scenario";
  json edges = json::array();
  for (const Edge& e : s.topology.edges)
    edges.push_back({e.s.kind == NodeKind::Interior ? "I" : "B", e.s.index,
                     e.t.kind == NodeKind::Interior ? "I" : "B", e.t.index});
  doc["edges"] = edges;
  doc["n_interior"] = s.topology.n_interior;
  doc["n_boundary"] = s.topology.n_boundary;
  doc["m_interior"] = s.topology.m_interior;
  doc["l0"] = json_io::vector_to_json(s.nominal_params.unstressed_length);
  doc["EA"] = json_io::vector_to_json(s.nominal_params.axial_stiffness);
  doc["boundary"] = json_io::vector_to_json(s.boundary);
  doc["nominal_interior"] = json_io::vector_to_json(s.nominal_interior);
  doc["bound_lo"] = s.bound_lo;
  doc["bound_hi"] = s.bound_hi;
  doc["seed"] = s.seed;
  doc["tolerance"] = s.solver_tolerance;
  return doc.dump(2);
}

namespace {

Scenario scenario_from_parsed(const json& doc) {
  Scenario s;
  s.topology.n_interior = doc.at("n_interior").get<int>();
  s.topology.n_boundary = doc.at("n_boundary").get<int>();
  s.topology.m_interior = doc.at("m_interior").get<int>();
  for (const auto& row : doc.at("edges")) {
    if (!row.is_array() || row.size() != 4)
      throw IoError("expected [kind, index, kind, index] edge rows");
    auto kind = [](const json& j) {
      const auto text = j.get<std::string>();
      if (text == "I") return NodeKind::Interior;
      if (text == "B") return NodeKind::Boundary;
      throw IoError("edge endpoint kind must be \"I\" or \"B\"");
    };
    s.topology.edges.push_back(
        {{kind(row[0]), row[1].get<int>()}, {kind(row[2]), row[3].get<int>()}});
  }
  s.nominal_params.unstressed_length =
      json_io::vector_from_json(doc.at("l0"), "l0");
  s.nominal_params.axial_stiffness =
      json_io::vector_from_json(doc.at("EA"), "EA");
  s.boundary = json_io::vector_from_json(doc.at("boundary"), "boundary");
  s.nominal_interior =
      json_io::vector_from_json(doc.at("nominal_interior"), "nominal_interior");
  s.bound_lo = doc.at("bound_lo").get<double>();
  s.bound_hi = doc.at("bound_hi").get<double>();
  s.seed = doc.at("seed").get<std::uint64_t>();
  s.solver_tolerance = doc.at("tolerance").get<double>();
  s.validate();
  return s;
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  const json doc = json_io::parse_json(text, "scenario");
  if (doc.value("kind", "") != std::string("scenario"))
    throw IoError("not a scenario file");
  if (doc.value("format_version", 0) != 1)
    throw IoError("unsupported scenario format version");
  try {
    return scenario_from_parsed(doc);
  } catch (const json::exception& err) {
    // Missing or ill-typed keys surface as file-format errors.
    throw IoError(std::string("malformed scenario file: ") + err.what());
  }
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  json_io::write_text_file(path, scenario_to_json(scenario) + "\n");
}

Scenario load_scenario(const std::string& path) {
  return scenario_from_json(json_io::read_text_file(path));
}

std::string scenario_hash(const Scenario& scenario) {
  return content_hash(scenario_to_json(scenario));
}

void save_dataset(const Scenario& scenario, const GenerateResult& result,
                  const std::string& path) {
  std::ostringstream out;
  json header;
  header["record"] = "header";
  header["kind"] = "dataset";
  header["format_version"] = 1;
  header["scenario_hash"] = scenario_hash(scenario);
  header["seed"] = scenario.seed;
  header["bound_lo"] = scenario.bound_lo;
  header["bound_hi"] = scenario.bound_hi;
  header["n_requested"] = result.n_requested;
  header["tolerance"] = scenario.solver_tolerance;
  header["m_interior"] = scenario.topology.m_interior;
  header["interior_coords"] = 3 * scenario.topology.n_interior;
  header["sampling"] = kSamplingNote;
  header["failed_indices"] = result.failed_indices;
  out << header.dump() << "\n";

  for (const SamplePair& sample : result.samples) {
    json record;
    record["record"] = "sample";
    record["index"] = sample.index;
    record["delta_l0"] = json_io::vector_to_json(sample.delta_l0);
    record["delta_r"] = json_io::vector_to_json(sample.delta_r);
    record["residual"] = sample.residual;
    out << record.dump() << "\n";
  }
  json_io::write_text_file(path, out.str());
}

Dataset load_dataset(const std::string& path) {
  std::istringstream in(json_io::read_text_file(path));
  std::string line;
  if (!std::getline(in, line))
    throw IoError("dataset file is empty: " + path);

  const json header = json_io::parse_json(line, "dataset header");
  if (header.value("record", "") != std::string("header") ||
      header.value("kind", "") != std::string("dataset"))
    throw IoError("not a dataset file: " + path);
  if (header.value("format_version", 0) != 1)
    throw IoError("unsupported dataset format version");

  try {
    Dataset dataset;
    dataset.header.format_version = 1;
    dataset.header.scenario_hash =
        header.at("scenario_hash").get<std::string>();
    dataset.header.seed = header.at("seed").get<std::uint64_t>();
    dataset.header.bound_lo = header.at("bound_lo").get<double>();
    dataset.header.bound_hi = header.at("bound_hi").get<double>();
    dataset.header.n_requested = header.at("n_requested").get<int>();
    dataset.header.tolerance = header.at("tolerance").get<double>();
    dataset.header.m_interior = header.at("m_interior").get<int>();
    dataset.header.interior_coords = header.at("interior_coords").get<int>();
    dataset.header.sampling = header.at("sampling").get<std::string>();
    dataset.header.failed_indices =
        header.at("failed_indices").get<std::vector<int>>();

    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json record = json_io::parse_json(line, "dataset sample");
      if (record.value("record", "") != std::string("sample"))
        throw IoError("unexpected record kind in dataset file");
      SamplePair sample;
      sample.index = record.at("index").get<int>();
      sample.delta_l0 =
          json_io::vector_from_json(record.at("delta_l0"), "delta_l0");
      sample.delta_r =
          json_io::vector_from_json(record.at("delta_r"), "delta_r");
      sample.residual = record.at("residual").get<double>();
      if (sample.delta_l0.size() != dataset.header.m_interior ||
          sample.delta_r.size() != dataset.header.interior_coords)
        throw IoError("sample dimensions disagree with the dataset header");
      dataset.samples.push_back(std::move(sample));
    }
    return dataset;
  } catch (const json::exception& err) {
    // Missing or ill-typed keys surface as file-format errors.
    throw IoError(std::string("malformed dataset file: ") + err.what());
  }
}

}  // namespace formnet
