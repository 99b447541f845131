#include "formnet/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "formnet/errors.hpp"
#include "formnet/rng.hpp"

namespace formnet {

namespace {

constexpr double kMinEdgeLength = 1e-12;
constexpr double kArmijoSlope = 1e-4;

struct EnergyTerms {
  double energy = 0.0;
  Eigen::VectorXd gradient;
  double min_edge_length = std::numeric_limits<double>::infinity();
};

// Energy + gradient over the interior coordinates; optionally assembles the
// sparse Hessian (per-edge 3x3 blocks, zero for slack edges).
EnergyTerms assemble(const Topology& topology, const EdgeParams& params,
                     const Eigen::VectorXd& boundary,
                     const Eigen::VectorXd& interior,
                     Eigen::SparseMatrix<double>* hessian) {
  const int n = static_cast<int>(interior.size());
  EnergyTerms terms;
  terms.gradient = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> triplets;
  if (hessian) triplets.reserve(36 * topology.edge_count());

  auto position = [&](const EdgeEnd& end) -> Eigen::Vector3d {
    return end.kind == NodeKind::Interior
               ? Eigen::Vector3d(interior.segment<3>(3 * end.index))
               : Eigen::Vector3d(boundary.segment<3>(3 * end.index));
  };

  for (int e = 0; e < topology.edge_count(); ++e) {
    const Edge& edge = topology.edges[e];
    const Eigen::Vector3d d = position(edge.s) - position(edge.t);
    const double l = d.norm();
    terms.min_edge_length = std::min(terms.min_edge_length, l);
    const double l0 = params.unstressed_length[e];
    const double k = params.axial_stiffness[e] / l0;
    const bool tensioned = l > l0;
    const int si = edge.s.kind == NodeKind::Interior ? edge.s.index : -1;
    const int ti = edge.t.kind == NodeKind::Interior ? edge.t.index : -1;

    if (tensioned) {
      const double stretch = l - l0;
      terms.energy += 0.5 * k * stretch * stretch;
      const Eigen::Vector3d f = k * stretch * (d / l);
      if (si >= 0) terms.gradient.segment<3>(3 * si) += f;
      if (ti >= 0) terms.gradient.segment<3>(3 * ti) -= f;
    }

    if (hessian) {
      // d(force)/d(d) = k [(1 - l0/l) I + (l0/l) u u^T], PSD in tension and
      // zero for a slack edge. Slack edges still scatter their (zero-valued)
      // blocks so the sparsity pattern covers the whole graph and stays
      // constant across iterations: the factorization's pattern analysis is
      // done once and reused while edges cross the tension threshold.
      Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
      if (tensioned) {
        const Eigen::Vector3d u = d / l;
        block = k * ((1.0 - l0 / l) * Eigen::Matrix3d::Identity() +
                     (l0 / l) * (u * u.transpose()));
      }
      auto scatter = [&](int a, int b, double sign) {
        if (a < 0 || b < 0) return;
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            triplets.emplace_back(3 * a + r, 3 * b + c, sign * block(r, c));
      };
      scatter(si, si, 1.0);
      scatter(ti, ti, 1.0);
      scatter(si, ti, -1.0);
      scatter(ti, si, -1.0);
    }
  }

  if (hessian) {
    hessian->resize(n, n);
    hessian->setFromTriplets(triplets.begin(), triplets.end());
  }
  return terms;
}

Eigen::VectorXd default_start(const Topology& topology,
                              const Eigen::VectorXd& boundary) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < topology.n_boundary; ++i)
    centroid += boundary.segment<3>(3 * i);
  if (topology.n_boundary > 0) centroid /= topology.n_boundary;

  Eigen::VectorXd start(3 * topology.n_interior);
  RngStream jitter(0x666f726d6e6574ull, 1);  // fixed stream, node-indexed draws
  for (int i = 0; i < topology.n_interior; ++i)
    for (int c = 0; c < 3; ++c)
      start[3 * i + c] =
          centroid[c] +
          2e-3 * (static_cast<double>(jitter.at(3 * i + c) >> 11) * 0x1.0p-53 -
                  0.5);
  return start;
}

}  // namespace

EquilibriumState solve_equilibrium(const Topology& topology,
                                   const EdgeParams& params,
                                   const Eigen::VectorXd& boundary,
                                   const SolveOptions& options) {
  params.validate(topology.edge_count());
  if (boundary.size() != 3 * topology.n_boundary)
    throw DimensionError("boundary coordinate vector has wrong size");
  if (options.tolerance <= 0.0)
    throw InvalidInputError("solver tolerance must be positive");

  Eigen::VectorXd x;
  if (options.initial_interior) {
    if (options.initial_interior->size() != 3 * topology.n_interior)
      throw DimensionError("initial interior coordinates have wrong size");
    x = *options.initial_interior;
  } else {
    x = default_start(topology, boundary);
  }

  Eigen::SparseMatrix<double> hessian;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
  bool pattern_analyzed = false;

  int iterations = 0;
  EnergyTerms terms = assemble(topology, params, boundary, x, &hessian);

  for (; iterations < options.max_iterations; ++iterations) {
    if (terms.min_edge_length < kMinEdgeLength)
      throw DegenerateGeometryError("edge collapsed during equilibrium solve");
    if (terms.gradient.lpNorm<Eigen::Infinity>() <= options.tolerance) break;

    // Newton direction; Levenberg shift escalates until the factorization
    // succeeds and yields a descent direction.
    const double diag_scale =
        std::max(hessian.diagonal().maxCoeff(), 1e-30);
    double shift = 0.0;
    Eigen::VectorXd direction;
    bool have_direction = false;
    for (int attempt = 0; attempt < 24 && !have_direction; ++attempt) {
      Eigen::SparseMatrix<double> shifted = hessian;
      if (shift > 0.0) {
        Eigen::SparseMatrix<double> identity(hessian.rows(), hessian.cols());
        identity.setIdentity();
        shifted += shift * identity;
      }
      if (!pattern_analyzed) {
        llt.analyzePattern(shifted);
        pattern_analyzed = true;
      }
      llt.factorize(shifted);
      if (llt.info() == Eigen::Success) {
        direction = llt.solve(-terms.gradient);
        if (direction.dot(terms.gradient) < 0.0 && direction.allFinite())
          have_direction = true;
      }
      if (!have_direction)
        shift = shift == 0.0 ? 1e-12 * diag_scale : shift * 100.0;
    }
    if (!have_direction)
      throw SolverError("could not produce a descent direction", x,
                        terms.gradient.lpNorm<Eigen::Infinity>(), iterations);

    // Backtracking line search. Near the minimum the energy differences of
    // a Newton step drop below the floating-point resolution of the total
    // energy, so a step is also accepted when it shrinks the residual --
    // which stays numerically resolvable all the way to the tolerance.
    const double slope = terms.gradient.dot(direction);
    const double grad_norm = terms.gradient.lpNorm<Eigen::Infinity>();
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      Eigen::VectorXd candidate = x + step * direction;
      EnergyTerms trial = assemble(topology, params, boundary, candidate, nullptr);
      const bool energy_ok =
          trial.energy <= terms.energy + kArmijoSlope * step * slope;
      const bool residual_ok =
          trial.gradient.lpNorm<Eigen::Infinity>() <=
          (1.0 - kArmijoSlope * step) * grad_norm;
      if (energy_ok || residual_ok) {
        x = std::move(candidate);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      throw SolverError("line search failed to reduce the energy", x,
                        grad_norm, iterations);

    terms = assemble(topology, params, boundary, x, &hessian);
  }

  const double residual = terms.gradient.lpNorm<Eigen::Infinity>();
  if (residual > options.tolerance)
    throw SolverError("equilibrium solve hit the iteration cap", x, residual,
                      iterations);

  EquilibriumState state;
  state.interior = std::move(x);
  state.solver_iterations = iterations;
  state.residual_inf_norm = residual;
  const Geometry geometry{state.interior, boundary};
  state.edge_lengths = edge_lengths(topology, geometry);
  state.edge_tensions.resize(topology.edge_count());
  for (int e = 0; e < topology.edge_count(); ++e) {
    const double stretch =
        std::max(state.edge_lengths[e] - params.unstressed_length[e], 0.0);
    state.edge_tensions[e] =
        params.axial_stiffness[e] / params.unstressed_length[e] * stretch;
  }
  state.all_edges_tensioned = (state.edge_tensions.array() > 0.0).all();
  return state;
}

ConicProblem build_conic_problem(const Topology& topology,
                                 const EdgeParams& params,
                                 const Eigen::VectorXd& boundary) {
  params.validate(topology.edge_count());
  if (boundary.size() != 3 * topology.n_boundary)
    throw DimensionError("boundary coordinate vector has wrong size");

  ConicProblem p;
  p.num_interior_coords = 3 * topology.n_interior;
  p.num_edges = topology.edge_count();
  p.num_vars = p.num_interior_coords + p.num_edges + 1;
  p.objective = Eigen::VectorXd::Zero(p.num_vars);
  p.objective[p.epigraph_index()] = 0.5;

  const int m = p.num_edges;
  const int total_rows = 4 * m + m + (m + 2);
  p.constant = Eigen::VectorXd::Zero(total_rows);

  int row = 0;
  for (int e = 0; e < m; ++e) {
    const Edge& edge = topology.edges[e];
    const double scale =
        std::sqrt(params.axial_stiffness[e] / params.unstressed_length[e]);
    // ||r_s - r_t|| <= w_e / scale + l0_e, as a 4-row second-order cone.
    p.matrix.push_back({row, p.slack_offset() + e, 1.0 / scale});
    p.constant[row] = params.unstressed_length[e];
    ++row;
    for (int c = 0; c < 3; ++c, ++row) {
      for (const auto& [end, sign] :
           {std::pair{edge.s, 1.0}, std::pair{edge.t, -1.0}}) {
        if (end.kind == NodeKind::Interior)
          p.matrix.push_back({row, 3 * end.index + c, sign});
        else
          p.constant[row] += sign * boundary[3 * end.index + c];
      }
    }
    p.cones.push_back({ConeBlock::Type::SecondOrder, 4});
  }
  for (int e = 0; e < m; ++e, ++row) {
    p.matrix.push_back({row, p.slack_offset() + e, 1.0});
    p.cones.push_back({ConeBlock::Type::NonNegative, 1});
  }
  // ||(2 w, 1 - v)|| <= 1 + v.
  p.matrix.push_back({row, p.epigraph_index(), 1.0});
  p.constant[row] = 1.0;
  ++row;
  for (int e = 0; e < m; ++e, ++row)
    p.matrix.push_back({row, p.slack_offset() + e, 2.0});
  p.matrix.push_back({row, p.epigraph_index(), -1.0});
  p.constant[row] = 1.0;
  p.cones.push_back({ConeBlock::Type::SecondOrder, m + 2});
  return p;
}

std::string conic_problem_to_json(const ConicProblem& problem) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["variables"] = {{"interior_coords", problem.num_interior_coords},
                      {"edge_slacks", problem.num_edges},
                      {"epigraph_index", problem.epigraph_index()},
                      {"total", problem.num_vars}};
  doc["objective"] = std::vector<double>(
      problem.objective.data(), problem.objective.data() + problem.num_vars);
  nlohmann::json rows = nlohmann::json::array();
  for (const SparseEntry& t : problem.matrix)
    rows.push_back({t.row, t.col, t.value});
  doc["A"] = rows;
  doc["b"] = std::vector<double>(problem.constant.data(),
                                 problem.constant.data() + problem.constant.size());
  nlohmann::json cones = nlohmann::json::array();
  for (const ConeBlock& cone : problem.cones)
    cones.push_back(
        {{"type", cone.type == ConeBlock::Type::SecondOrder ? "soc" : "nonneg"},
         {"rows", cone.rows}});
  doc["cones"] = cones;
  doc["semantics"] = "feasible iff s = A*x + b lies in every cone block; "
                     "soc blocks read s = [t, u] with ||u|| <= t";
  return doc.dump(2);
}

void save_conic_problem(const ConicProblem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write conic problem file: " + path);
  out << conic_problem_to_json(problem) << "\n";
}

EquilibriumReport verify_equilibrium(const Topology& topology,
                                     const Geometry& geometry,
                                     const EdgeParams& params,
                                     const EquilibriumState& state,
                                     double tolerance) {
  if (state.interior.size() != 3 * topology.n_interior)
    throw DimensionError("state interior coordinates have wrong size");
  const Geometry at_state{state.interior, geometry.boundary};

  EquilibriumReport report;
  report.tolerance = tolerance;
  report.residual_inf_norm =
      force_residual(topology, at_state, params).lpNorm<Eigen::Infinity>();
  report.energy = total_energy(topology, at_state, params);

  double min_tension = std::numeric_limits<double>::infinity();
  for (int e = 0; e < topology.edge_count(); ++e) {
    const double l = edge_length(topology, at_state, e);
    const double stretch = l - params.unstressed_length[e];
    const double tension =
        params.axial_stiffness[e] / params.unstressed_length[e] *
        std::max(stretch, 0.0);
    min_tension = std::min(min_tension, tension);
    if (stretch <= 0.0) report.slack_edges.push_back(e);
  }
  report.min_tension = min_tension;
  report.all_edges_tensioned = report.slack_edges.empty();
  report.residual_ok = report.residual_inf_norm <= tolerance;
  return report;
}

}  // namespace formnet
