#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here deliberately avoids the code paths under test: the energy
// minimizer is a first-order Barzilai-Borwein descent (no Newton step, no
// sparse Cholesky), the marginal-likelihood reference goes through a dense
// eigendecomposition (no Cholesky), and the conic completion works purely on
// the exported (objective, A, b, cones) data.

#include <Eigen/Core>

#include "formnet/equilibrium.hpp"
#include "formnet/gp.hpp"
#include "formnet/net_model.hpp"

namespace formnet::oracles {

// Minimizes total_energy over the interior coordinates with Barzilai-Borwein
// steps safeguarded by a nonmonotone backtracking line search, using only
// energy and gradient evaluations. Returns the iterate once the gradient
// infinity norm drops to `grad_tolerance` (or the best iterate at the
// iteration cap; callers assert the residual themselves).
Eigen::VectorXd bb_minimize_energy(const Topology& topology,
                                   const EdgeParams& params,
                                   const Eigen::VectorXd& boundary,
                                   const Eigen::VectorXd& initial,
                                   double grad_tolerance = 1e-10,
                                   int max_iterations = 200000);

// Central finite-difference gradient of total_energy at the given interior
// coordinates, step h per coordinate.
Eigen::VectorXd fd_energy_gradient(const Topology& topology,
                                   const EdgeParams& params,
                                   const Eigen::VectorXd& boundary,
                                   const Eigen::VectorXd& interior,
                                   double h = 1e-6);

// Negative log marginal likelihood evaluated through a dense symmetric
// eigendecomposition: log-determinant as the sum of log eigenvalues and the
// quadratic form through the eigenbasis. No jitter is applied, so compare
// only on well-conditioned instances.
double nlml_dense_reference(const Eigen::MatrixXd& sqdist,
                            const Eigen::VectorXd& y,
                            const GpHyperparams& hp);

// Central finite differences of the library's nlml value with respect to the
// log-parameters (log lambda, log sigma_f, log sigma_w).
Eigen::Vector3d fd_nlml_log_gradient(const Eigen::MatrixXd& sqdist,
                                     const Eigen::VectorXd& y,
                                     const GpHyperparams& hp, double h = 1e-5);

// Result of completing the exported conic problem at fixed interior
// coordinates: the slack variables are raised to the smallest values
// admitted by the per-edge cones and the epigraph variable to the squared
// slack norm, then every cone's feasibility margin is re-checked on the
// completed point.
struct ConicCompletion {
  Eigen::VectorXd x;          // completed full variable vector
  double objective = 0.0;     // objective . x
  double min_margin = 0.0;    // least cone margin; >= -1e-9 means feasible
};

ConicCompletion conic_complete(const ConicProblem& problem,
                               const Eigen::VectorXd& interior);

}  // namespace formnet::oracles
