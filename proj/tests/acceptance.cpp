#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "formnet/dataset.hpp"
#include "formnet/equilibrium.hpp"
#include "formnet/gp.hpp"
#include "formnet/hash.hpp"
#include "formnet/identify.hpp"
#include "formnet/net_model.hpp"
#include "formnet/rng.hpp"
#include "oracles.hpp"
#include "properties.hpp"
#include "test_support.hpp"

// Acceptance gate. Each criterion prints exactly one PASS/FAIL line with its
// measured numbers and the pinned tolerance; the process exit code is the
// number of failed criteria. The full-scale stress criterion (number 7)
// runs as the separate `acceptance_stress` test because of its multi-hour
// budget; an INFO line marks its place in the sequence.

namespace {

using namespace formnet;
using formnet::testing::ScratchDir;

// Pinned acceptance tolerances.
constexpr double kResidualBudgetN = 1e-8;        // criterion 1, newtons
constexpr double kOracleMatchBudgetM = 1e-6;     // criterion 1, m/coordinate
constexpr double kSolveBudgetSec = 1.0;          // criterion 1
constexpr double kForceGradientRelBudget = 1e-6; // criterion 2
constexpr double kConicRelBudget = 1e-8;         // criterion 3
constexpr double kNlmlGradRelBudget = 1e-5;      // criterion 4
constexpr double kMrseBudget = 0.05;             // criterion 5
constexpr double kMseBudgetM2 = 1e-6;            // criterion 5, m^2
constexpr double kPipelineBudgetSec = 300.0;     // criterion 5
constexpr double kMedianRatioBudget = 0.25;      // criterion 6

struct Outcome {
  bool passed = false;
  std::string detail;
};

int g_failures = 0;

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(3) << std::scientific << v;
  return out.str();
}

void report(int number, const std::string& label,
            const std::function<Outcome()>& body) {
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& err) {
    outcome = {false, std::string("exception: ") + err.what()};
  }
  std::cout << (outcome.passed ? "PASS" : "FAIL") << "  criterion " << number
            << ": " << label << "  [" << outcome.detail << "]\n"
            << std::flush;
  if (!outcome.passed) ++g_failures;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Geometry with_interior(const Eigen::VectorXd& interior,
                       const Eigen::VectorXd& boundary) {
  Geometry g;
  g.interior = interior;
  g.boundary = boundary;
  return g;
}

// Pins the worker count to one for the duration of a criterion and restores
// the previous environment afterwards.
class SingleThreadGuard {
 public:
  SingleThreadGuard() {
    if (const char* v = std::getenv("FORMNET_THREADS")) {
      saved_ = v;
      had_value_ = true;
    }
    ::setenv("FORMNET_THREADS", "1", 1);
  }
  ~SingleThreadGuard() {
    if (had_value_)
      ::setenv("FORMNET_THREADS", saved_.c_str(), 1);
    else
      ::unsetenv("FORMNET_THREADS");
  }

 private:
  std::string saved_;
  bool had_value_ = false;
};

// Artifacts of the round-trip identification benchmark (criterion 5),
// reused by the form-error criterion that follows it.
struct Benchmark {
  Scenario scenario;
  Identifier identifier;
  std::vector<SamplePair> validation;
};
std::optional<Benchmark> g_benchmark;

// ------------------------------------------------------------ criteria

Outcome equilibrium_correctness() {
  const Net net = synth_net(5, 5, FrameSpec{}, SagSpec{}, 1);
  const auto start = std::chrono::steady_clock::now();
  const EquilibriumState state =
      solve_equilibrium(net.topology, net.params, net.geometry.boundary);
  const double seconds = elapsed_seconds(start);

  // Independent first-order oracle started away from the reported solution.
  const Eigen::VectorXd oracle = oracles::bb_minimize_energy(
      net.topology, net.params, net.geometry.boundary,
      formnet::testing::perturbed(state.interior, 0.05, 7, 0), 1e-10);
  const double oracle_residual =
      force_residual(net.topology,
                     with_interior(oracle, net.geometry.boundary), net.params)
          .lpNorm<Eigen::Infinity>();
  const double gap = (oracle - state.interior).lpNorm<Eigen::Infinity>();

  const bool ok = state.residual_inf_norm <= kResidualBudgetN &&
                  oracle_residual <= 1e-10 && gap <= kOracleMatchBudgetM &&
                  seconds < kSolveBudgetSec;
  return {ok, "residual " + fmt(state.residual_inf_norm) + " N (limit " +
                  fmt(kResidualBudgetN) + "), oracle gap " + fmt(gap) +
                  " m (limit " + fmt(kOracleMatchBudgetM) + "), " +
                  fmt(seconds) + " s (limit " + fmt(kSolveBudgetSec) + ")"};
}

Outcome force_gradient_consistency() {
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const Net net = synth_net(5, 5, FrameSpec{}, SagSpec{}, 100 + c);
    const EquilibriumState state =
        solve_equilibrium(net.topology, net.params, net.geometry.boundary);

    // Perturb off equilibrium but keep every edge safely tensioned so the
    // energy is smooth around the probe point.
    double amplitude = 1e-3;
    Eigen::VectorXd x;
    for (int attempt = 0; attempt < 10; ++attempt) {
      x = formnet::testing::perturbed(state.interior, amplitude, 200 + c, 1);
      const Eigen::VectorXd lengths =
          edge_lengths(net.topology, with_interior(x, net.geometry.boundary));
      if ((lengths - net.params.unstressed_length).minCoeff() > 1e-4) break;
      amplitude *= 0.5;
    }

    const Eigen::VectorXd analytic = force_residual(
        net.topology, with_interior(x, net.geometry.boundary), net.params);
    const Eigen::VectorXd fd = oracles::fd_energy_gradient(
        net.topology, net.params, net.geometry.boundary, x);
    const double rel = (fd - analytic).lpNorm<Eigen::Infinity>() /
                       std::max(analytic.lpNorm<Eigen::Infinity>(), 1e-12);
    worst = std::max(worst, rel);
  }
  return {worst <= kForceGradientRelBudget,
          "max relative error " + fmt(worst) +
              " over 20 tensioned configurations (limit " +
              fmt(kForceGradientRelBudget) + ")"};
}

Outcome conic_equivalence() {
  const int grids[5][2] = {{3, 4}, {4, 4}, {4, 5}, {5, 5}, {3, 5}};
  double worst_rel = 0.0;
  double worst_margin = 0.0;
  for (int k = 0; k < 5; ++k) {
    const Net net = synth_net(grids[k][0], grids[k][1], FrameSpec{},
                              SagSpec{}, 300 + k);
    SolveOptions options;
    options.tolerance = 1e-10;
    const EquilibriumState state = solve_equilibrium(
        net.topology, net.params, net.geometry.boundary, options);
    const double energy = total_energy(
        net.topology, with_interior(state.interior, net.geometry.boundary),
        net.params);

    const ConicProblem problem =
        build_conic_problem(net.topology, net.params, net.geometry.boundary);
    const oracles::ConicCompletion completion =
        oracles::conic_complete(problem, state.interior);
    worst_rel = std::max(worst_rel, std::abs(completion.objective - energy) /
                                        std::max(energy, 1e-300));
    worst_margin = std::min(worst_margin, completion.min_margin);
  }
  return {worst_rel <= kConicRelBudget && worst_margin >= -1e-9,
          "max relative objective gap " + fmt(worst_rel) + " (limit " +
              fmt(kConicRelBudget) + "), least cone margin " +
              fmt(worst_margin) + " over 5 scenarios"};
}

Outcome nlml_gradient() {
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    RngStream draw(0xacce97ULL, instance);
    Eigen::MatrixXd x(20, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = draw.normal();
    Eigen::VectorXd y(20);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = draw.normal();
    GpHyperparams hp;
    hp.lambda = std::exp(draw.uniform(-1.0, 1.0));
    hp.sigma_f = std::exp(draw.uniform(-0.7, 0.7));
    hp.sigma_w = std::exp(draw.uniform(-7.0, -2.5));

    const Eigen::MatrixXd sqdist = pairwise_sqdist(x);
    const Eigen::Vector3d analytic = nlml(sqdist, y, hp).log_gradient;
    const Eigen::Vector3d fd = oracles::fd_nlml_log_gradient(sqdist, y, hp);
    worst = std::max(worst,
                     (analytic - fd).norm() / std::max(analytic.norm(), 1e-10));
  }
  return {worst <= kNlmlGradRelBudget,
          "max relative gradient error " + fmt(worst) +
              " over 50 instances (limit " + fmt(kNlmlGradRelBudget) + ")"};
}

Outcome round_trip_identification() {
  const SingleThreadGuard single_threaded;
  const auto start = std::chrono::steady_clock::now();

  const Net net = synth_net(5, 5, FrameSpec{}, SagSpec{}, 42);
  const Scenario scenario = make_scenario(net, -5e-3, 5e-3, 42);
  const GenerateResult result = generate(scenario, 450);
  auto [train_set, validation] = split(result.samples, 400, 50, 42);
  const Identifier identifier = Identifier::train(train_set);
  const EvalReport report = evaluate_cv(identifier, validation);
  const double seconds = elapsed_seconds(start);

  g_benchmark = Benchmark{scenario, identifier, std::move(validation)};
  const bool ok = report.mrse <= kMrseBudget && report.mse <= kMseBudgetM2 &&
                  seconds < kPipelineBudgetSec;
  return {ok, "MRSE " + fmt(report.mrse) + " (limit " + fmt(kMrseBudget) +
                  "), MSE " + fmt(report.mse) + " m^2 (limit " +
                  fmt(kMseBudgetM2) + "), " + fmt(seconds) +
                  " s single-threaded (limit " + fmt(kPipelineBudgetSec) +
                  ")"};
}

Outcome form_error_reduction() {
  if (!g_benchmark)
    return {false, "prerequisite benchmark (criterion 5) did not complete"};
  const Benchmark& bench = *g_benchmark;

  std::vector<double> ratios;
  ratios.reserve(bench.validation.size());
  for (const SamplePair& sample : bench.validation) {
    const auto ident = bench.identifier.identify(sample.delta_r);
    const FormErrors errors = evaluate_form_errors(
        bench.scenario, sample.delta_l0, ident.delta_l0_hat);
    ratios.push_back(errors.identified_stats.rmse /
                     std::max(errors.nominal_stats.rmse, 1e-300));
  }
  const double med = median(ratios);
  return {ratios.size() == 50 && med <= kMedianRatioBudget,
          "median form-error ratio " + fmt(med) + " over " +
              std::to_string(ratios.size()) + " validation scenarios (limit " +
              fmt(kMedianRatioBudget) + ")"};
}

// ------------------------------------------------- CLI-driven criteria

std::string cli_binary() {
  const char* env = std::getenv("FORMNET_CLI_BIN");
  return env ? env : "";
}

int run_cli(const std::string& dir, const std::string& args) {
  const std::string command = "cd '" + dir + "' && '" + cli_binary() + "' " +
                              args + " > cli_stdout.txt 2> cli_stderr.txt";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome rerun_determinism() {
  if (cli_binary().empty()) return {false, "FORMNET_CLI_BIN is not set"};
  const ScratchDir scratch("acceptance_rerun");
  const std::vector<std::string> commands = {
      "net --grid 4x4 --seed 13",
      "gen --net net.json --n-samples 60 --bounds-mm 5 --seed 13",
      "train --scenario scenario.json --data dataset.jsonl --split 50/10 "
      "--n-starts 2 --seed 13",
      "identify --model model.json --scenario scenario.json "
      "--data dataset.jsonl --sample 3",
      "eval --model model.json --scenario scenario.json --data dataset.jsonl",
  };
  for (const char* run : {"a", "b"}) {
    const std::string dir = scratch.path(run);
    std::filesystem::create_directories(dir);
    for (const std::string& command : commands)
      if (const int code = run_cli(dir, command); code != 0)
        return {false, std::string("run ") + run + ": `" + command +
                           "` exited with " + std::to_string(code)};
  }
  std::string differing;
  for (const char* name : {"net.json", "scenario.json", "dataset.jsonl",
                           "model.json", "identification.json", "eval.json",
                           "eval.csv"}) {
    if (file_hash(scratch.path(std::string("a/") + name)) !=
        file_hash(scratch.path(std::string("b/") + name)))
      differing += std::string(differing.empty() ? "" : ", ") + name;
  }
  return {differing.empty(),
          differing.empty()
              ? "7 pipeline artifacts byte-identical across same-seed reruns"
              : "files differ between same-seed runs: " + differing};
}

Outcome invariant_suites() {
  std::vector<formnet::testing::PropertyCheck> checks =
      formnet::testing::all_properties(0x5eedULL);
  if (cli_binary().empty()) {
    checks.push_back({"cli", "front-end invariants", false,
                      "FORMNET_CLI_BIN is not set"});
  } else {
    const ScratchDir scratch("acceptance_props");
    auto cli = formnet::testing::cli_properties(cli_binary(),
                                                scratch.root().string());
    checks.insert(checks.end(), cli.begin(), cli.end());
  }

  std::string failing;
  int failed = 0;
  for (const auto& check : checks)
    if (!check.passed) {
      ++failed;
      failing += (failing.empty() ? "" : "; ") + check.module + "/" +
                 check.name + ": " + check.detail;
    }
  if (failed > 0)
    return {false, std::to_string(failed) + " of " +
                       std::to_string(checks.size()) +
                       " invariants failed -- " + failing};
  return {true, "all " + std::to_string(checks.size()) +
                    " module and front-end invariants green"};
}

}  // namespace

int main() {
  std::cout << "acceptance criteria\n" << std::flush;

  report(1, "equilibrium solve on the reference net", equilibrium_correctness);
  report(2, "force residual matches finite-difference energy gradient",
         force_gradient_consistency);
  report(3, "conic export reproduces the minimum elastic energy",
         conic_equivalence);
  report(4, "marginal-likelihood gradient matches finite differences",
         nlml_gradient);
  report(5, "round-trip identification on the 5x5 benchmark",
         round_trip_identification);
  report(6, "identification reduces the geometric form error",
         form_error_reduction);
  std::cout << "INFO  criterion 7: full-scale stress run executes as the "
               "separate `acceptance_stress` test (multi-hour budget)\n"
            << std::flush;
  report(8, "same-seed pipeline reruns are byte-identical",
         rerun_determinism);
  report(9, "module invariant suites", invariant_suites);

  if (g_failures == 0)
    std::cout << "all criteria passed\n";
  else
    std::cout << g_failures << " criterion(s) failed\n";
  return g_failures;
}
