#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "formnet/net_model.hpp"

namespace formnet {

/// Interior coordinates at minimum elastic energy, plus derived per-edge
/// quantities. Tensions are EA_e / l0_e * max(l_e - l0_e, 0).
struct EquilibriumState {
  Eigen::VectorXd interior;
  Eigen::VectorXd edge_lengths;
  Eigen::VectorXd edge_tensions;
  double residual_inf_norm = 0.0;
  int solver_iterations = 0;
  bool all_edges_tensioned = false;
};

struct SolveOptions {
  /// Convergence threshold on the max absolute nodal force component (N).
  double tolerance = 1e-8;
  int max_iterations = 200;
  /// Warm start; when absent the solver starts every interior node at the
  /// boundary centroid with a small node-index-hashed offset.
  std::optional<Eigen::VectorXd> initial_interior;
};

/// Minimizes the total elastic energy over the interior coordinates with a
/// damped Newton iteration (sparse per-edge Hessian, Levenberg shift when
/// the factorization stalls, Armijo backtracking). The energy is convex, so
/// the result is the global minimum. Throws SolverError on the iteration
/// cap and DegenerateGeometryError if an edge collapses below 1e-12 m.
EquilibriumState solve_equilibrium(const Topology& topology,
                                   const EdgeParams& params,
                                   const Eigen::VectorXd& boundary,
                                   const SolveOptions& options = {});

/// One cone of the conic program, consuming `rows` consecutive rows of the
/// constraint matrix: s = A x + b restricted to those rows must satisfy
/// ||s[1:]|| <= s[0] (second-order) or s >= 0 elementwise (nonnegative).
struct ConeBlock {
  enum class Type { SecondOrder, NonNegative };
  Type type;
  int rows;
};

struct SparseEntry {
  int row;
  int col;
  double value;
};

/// Explicit second-order cone form of the equilibrium problem:
///   minimize objective . x   subject to   A x + b in K,
/// over x = [interior coordinates (3 n_I) | per-edge slack w (m) | epigraph v].
/// Each edge contributes one 4-row second-order cone
///   sqrt(EA_e / l0_e) * (||r_s - r_t|| - l0_e) <= w_e
/// and one nonnegativity row w_e >= 0; a final (m+2)-row cone
///   ||(2 w, 1 - v)|| <= 1 + v
/// bounds v by the squared slack norm, and the objective is v / 2.
struct ConicProblem {
  int num_interior_coords = 0;
  int num_edges = 0;
  int num_vars = 0;  // num_interior_coords + num_edges + 1
  Eigen::VectorXd objective;
  std::vector<SparseEntry> matrix;
  Eigen::VectorXd constant;
  std::vector<ConeBlock> cones;

  int slack_offset() const { return num_interior_coords; }
  int epigraph_index() const { return num_interior_coords + num_edges; }
};

ConicProblem build_conic_problem(const Topology& topology,
                                 const EdgeParams& params,
                                 const Eigen::VectorXd& boundary);

std::string conic_problem_to_json(const ConicProblem& problem);
void save_conic_problem(const ConicProblem& problem, const std::string& path);

/// Independent recomputation of the equilibrium conditions from a solved
/// state: residual, energy, tension extremes and the slack-edge list.
struct EquilibriumReport {
  double residual_inf_norm = 0.0;
  double energy = 0.0;
  double min_tension = 0.0;
  double tolerance = 0.0;
  std::vector<int> slack_edges;
  bool residual_ok = false;
  bool all_edges_tensioned = false;

  bool passed() const { return residual_ok; }
};

EquilibriumReport verify_equilibrium(const Topology& topology,
                                     const Geometry& geometry,
                                     const EdgeParams& params,
                                     const EquilibriumState& state,
                                     double tolerance = 1e-8);

}  // namespace formnet
