#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "formnet/dataset.hpp"
#include "formnet/identify.hpp"
#include "formnet/net_model.hpp"
#include "properties.hpp"

// Full-scale stress criterion: a net in the reference prototype size
// class (interior-edge count within 10% of 536) must complete data
// generation (1000 samples), training, and evaluation inside four hours,
// with every module invariant still green afterwards. The resulting MSE and
// MRSE are reported against the calibration targets recorded for this
// configuration (1.7e-8 m^2 and 0.002); those two numbers gauge fidelity
// qualitatively and are not pass/fail gates, because the published
// prototype's exact geometry and nominal parameters are not available.

namespace {

constexpr double kBudgetSeconds = 4.0 * 3600.0;
constexpr int kReferenceInteriorEdges = 536;

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(3) << std::scientific << v;
  return out.str();
}

double since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

}  // namespace

int main() {
  using namespace formnet;
  try {
    const auto start = std::chrono::steady_clock::now();

    const Net net = synth_net(26, 14, FrameSpec{8.0, 4.5}, SagSpec{}, 7);
    const int m_interior = net.topology.m_interior;
    const bool size_ok =
        std::abs(m_interior - kReferenceInteriorEdges) <=
        0.1 * kReferenceInteriorEdges;
    std::cout << "net: " << net.topology.n_interior << " interior nodes, "
              << m_interior << " interior edges (reference "
              << kReferenceInteriorEdges << " +/- 10%)\n"
              << std::flush;

    const Scenario scenario = make_scenario(net, -5e-3, 5e-3, 7);
    const GenerateResult result = generate(scenario, 1000);
    std::cout << "generated " << result.samples.size() << " of 1000 samples ("
              << result.failed_indices.size() << " failed) at " << fmt(since(start))
              << " s\n"
              << std::flush;

    const auto [train_set, validation] = split(result.samples, 950, 50, 7);

    TrainOptions options;
    options.fit.n_starts = 2;      // two multistarts keep the fit inside the
    options.keep_factors = false;  // budget; factors are n^2 apiece at n=950
    const Identifier identifier = Identifier::train(train_set, options);
    std::cout << "trained " << identifier.edge_count() << " edge models at "
              << fmt(since(start)) << " s\n"
              << std::flush;

    const EvalReport report = evaluate_cv(identifier, validation);
    const double pipeline_seconds = since(start);
    std::cout << "evaluated " << validation.size() << " held-out samples at "
              << fmt(pipeline_seconds) << " s\n"
              << std::flush;

    std::cout << "INFO  measured MSE " << fmt(report.mse)
              << " m^2 (calibration target 1.7e-08 m^2), MRSE "
              << fmt(report.mrse) << " (calibration target 2e-03)\n"
              << std::flush;

    int failed_invariants = 0;
    std::string failing;
    for (const auto& check : formnet::testing::all_properties(0x57e55ULL))
      if (!check.passed) {
        ++failed_invariants;
        failing += (failing.empty() ? "" : "; ") + check.module + "/" +
                   check.name + ": " + check.detail;
      }

    const bool ok =
        size_ok && pipeline_seconds < kBudgetSeconds && failed_invariants == 0;
    std::cout << (ok ? "PASS" : "FAIL")
              << "  criterion 7: full-scale stress run  [" << m_interior
              << " interior edges, pipeline " << fmt(pipeline_seconds)
              << " s (limit " << fmt(kBudgetSeconds) << "), "
              << (failed_invariants == 0
                      ? std::string("all invariants green")
                      : std::to_string(failed_invariants) +
                            " invariants failed -- " + failing)
              << "]\n"
              << std::flush;
    return ok ? 0 : 1;
  } catch (const std::exception& err) {
    std::cout << "FAIL  criterion 7: full-scale stress run  [exception: "
              << err.what() << "]\n"
              << std::flush;
    return 1;
  }
}
