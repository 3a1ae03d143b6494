#pragma once

#include <Eigen/Core>

#include "sbmot/geometry.hpp"

namespace sbm {

enum class LpStatus { optimal, infeasible, iteration_limit };

struct LpResult {
  LpStatus status = LpStatus::iteration_limit;
  Vec x;             // primal solution, size n (optimal only)
  double objective = 0.0;
  Vec dual;          // y with c - A'y >= -tol on optimal solutions
  Vec farkas;        // infeasible only: y'A <= 0 componentwise, y'b > 0
  double residual = 0.0;  // max |Ax - b| of the returned point
};

/// Dense two-phase revised simplex for  min c'x  s.t.  Ax = b, x >= 0.
///
/// Pricing is Dantzig with an automatic switch to Bland's rule after a run
/// of degenerate pivots. Redundant equality rows are tolerated (their
/// phase-1 artificials stay basic at level zero). max_iter of 0 picks a
/// size-based default.
LpResult solve_lp(const Mat& A, const Vec& b, const Vec& c, int max_iter = 0);

}  // namespace sbm
