#pragma once

// Training-data generation for the identification pipeline: perturb the
// interior unstressed lengths of a net at random, solve the resulting
// equilibrium, and record (form deviation, length deviation) pairs.
//
// Sample kappa draws from a counter-based random stream keyed by
// (scenario seed, kappa), which makes each sample a pure function of the
// scenario: the same pair is produced no matter how many samples are
// requested, in what order they run, or across how many threads.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "formnet/net_model.hpp"

namespace formnet {

// A net frozen for data generation: nominal parameters, their solved
// equilibrium, and the uncertainty model for the interior unstressed
// lengths (i.i.d. uniform on [bound_lo, bound_hi] per edge, in meters).
struct Scenario {
  Topology topology;
  EdgeParams nominal_params;
  Eigen::VectorXd boundary;          // fixed frame coordinates, 3 * n_boundary
  Eigen::VectorXd nominal_interior;  // equilibrium under nominal parameters
  double bound_lo = -5e-3;
  double bound_hi = 5e-3;
  std::uint64_t seed = 0;
  double solver_tolerance = 1e-8;

  void validate() const;
};

// Builds a scenario from a net by solving its nominal equilibrium once.
Scenario make_scenario(const Net& net, double bound_lo, double bound_hi,
                       std::uint64_t seed, double solver_tolerance = 1e-8);

// One generated data pair, stored as deviations from the nominal scenario:
// delta_l0 = perturbed minus nominal interior unstressed lengths (m_interior
// values), delta_r = solved minus nominal interior coordinates.
struct SamplePair {
  int index = 0;
  Eigen::VectorXd delta_l0;
  Eigen::VectorXd delta_r;
  double residual = 0.0;  // solver residual of this sample's equilibrium
};

struct GenerateResult {
  int n_requested = 0;
  std::vector<SamplePair> samples;  // ordered by index; failures excluded
  std::vector<int> failed_indices;
};

// Draws and solves n_samples pairs (in parallel when workers are available).
// Samples whose equilibrium solve fails are excluded; GenerationError is
// thrown when more than 1% of the requested samples fail.
GenerateResult generate(const Scenario& scenario, int n_samples);

// The single sample `kappa` of the scenario's deterministic sequence.
// Solver failures propagate as exceptions here (generate() catches them).
SamplePair make_sample(const Scenario& scenario, int kappa);

enum class SplitMode { Shuffled, Sequential };

// Deterministic disjoint split: with SplitMode::Shuffled the samples are
// permuted by a seeded shuffle first; Sequential keeps generation order.
std::pair<std::vector<SamplePair>, std::vector<SamplePair>> split(
    const std::vector<SamplePair>& samples, int n_train, int n_validation,
    std::uint64_t seed, SplitMode mode = SplitMode::Shuffled);

// Sample lists repacked as matrices for regression: inputs X holds one
// delta_r per row, targets Y one delta_l0 per row.
Eigen::MatrixXd inputs_matrix(const std::vector<SamplePair>& samples);
Eigen::MatrixXd targets_matrix(const std::vector<SamplePair>& samples);

// --- serialization ------------------------------------------------------

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& scenario, const std::string& path);
Scenario load_scenario(const std::string& path);

// Content hash of the scenario's canonical JSON form; datasets and models
// record it so downstream stages can refuse mismatched inputs.
std::string scenario_hash(const Scenario& scenario);

struct DatasetHeader {
  int format_version = 1;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  double bound_lo = 0.0;
  double bound_hi = 0.0;
  int n_requested = 0;
  double tolerance = 0.0;
  int m_interior = 0;
  int interior_coords = 0;
  std::string sampling;  // records the i.i.d.-per-coordinate assumption
  std::vector<int> failed_indices;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SamplePair> samples;
};

// JSON-lines dataset file: one header record, then one record per sample.
// Values survive a save/load round trip bit-exactly.
void save_dataset(const Scenario& scenario, const GenerateResult& result,
                  const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace formnet
