#pragma once

#include <string>
#include <vector>

#include "sbmot/convexfn.hpp"
#include "sbmot/measures.hpp"

namespace sbm {

struct DualConfig {
  double grad_tol = 1e-8;  // infinity norm of nu - induced column sums
  int max_iter = 20000;
  int lbfgs_memory = 20;
  McConfig mc;             // 2D sampling controls
  bool with_trace = true;
};

/// Dual functional evaluation at one potential: value, gradient, Bass
/// points, the induced coupling and its primal value.
struct DualState {
  PwaPotential psi;     // raw values as evaluated
  double dual_value = 0.0;
  Vec gradient;         // nu_j - sum_i mu_i induced_ij
  Mat bass_points;      // mu.size() x d
  Coupling induced;     // mass_ij = mu_i * laguerre mass j at bass point i
  double primal_value = 0.0;
  double gap = 0.0;     // dual_value - primal_value
  double mc_error = 0.0;  // 3-sigma aggregate of Monte Carlo std errors, 0 in 1D

  DualState(PwaPotential p, Coupling c) : psi(std::move(p)), induced(std::move(c)) {}
};

struct TraceRecord {
  int iter = 0;
  double dual = 0.0;
  double primal = 0.0;  // best induced primal seen so far (lower bound)
  double gap = 0.0;
  double grad_norm = 0.0;
  double s_partial_sum = 0.0;
  Vec psi;              // raw iterate values
};

struct SolveTrace {
  std::vector<TraceRecord> records;  // geometrically thinned, final included
  bool converged = false;
  int iterations = 0;
  double s_partial_sum = 0.0;  // sum over all iterations of D_n - best lower bound
  std::string diagnostics;
};

struct SolveResult {
  SolveTrace trace;
  DualState state;
};

/// D(psi) = <nu, psi> - sum_i mu_i (psi^* * gamma)^*(x_i), with the induced
/// coupling, analytic gradient, and induced primal value. Throws
/// BoundaryAtomError when a mu-atom is not strictly inside ri(conv supp nu).
DualState eval_dual(const PwaPotential& psi, const DiscreteMeasure& mu,
                    const DiscreteMeasure& nu, const McConfig& mc = {});

/// First-order minimization of D over potential values on the nu-atoms:
/// L-BFGS directions, backtracking line search on D, lower-convex-envelope
/// projection after every accepted step, termination on the gradient
/// infinity norm. The trace records geometrically thinned iterates with the
/// suboptimality ledger S_n = D_n - (best induced primal value so far).
SolveResult solve_dual(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const DualConfig& config = {});

/// sum_i mu_i MCov(pi_x_i, gamma) for a feasible martingale coupling.
/// Rows with barycenter defect above 1e-6 are rejected.
double primal_from_coupling(const Coupling& pi, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const McConfig& mc = {});

/// Serializes a trace as JSON lines, one record per stored iterate.
std::string trace_to_jsonl(const SolveTrace& trace);

}  // namespace sbm
