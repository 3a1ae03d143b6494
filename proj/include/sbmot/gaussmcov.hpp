#pragma once

#include "sbmot/convexfn.hpp"
#include "sbmot/measures.hpp"

namespace sbm {

struct McovResult {
  double value = 0.0;
  Vec dual_weights;          // semi-discrete potentials, gauge phi_0 = 0
  double error_estimate = 0.0;  // 0 on exact paths
};

/// Exact 1D maximal covariance against the standard Gaussian via the
/// comonotone (quantile) coupling.
McovResult mcov_1d(const DiscreteMeasure& p);

/// 2D maximal covariance by averaged stochastic subgradient descent on the
/// semi-discrete dual F(phi) = <p, phi> + E max_j(<Z,y_j> - phi_j).
/// Collinear supports reduce exactly to the 1D formula (error 0).
McovResult mcov_semidiscrete(const DiscreteMeasure& p, const McConfig& mc = {});

/// Dimension dispatch of the two above.
McovResult mcov(const DiscreteMeasure& p, const McConfig& mc = {});

/// MCov of a probability row over given atoms (zero entries allowed);
/// used for the per-row primal integrand.
double mcov_row(const Mat& atoms, const Vec& probs, const McConfig& mc = {});

}  // namespace sbm
