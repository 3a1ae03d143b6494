#include "sbmot/simplex.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace sbm {

namespace {

constexpr double kReducedCostTol = 1e-9;
constexpr double kPivotTol = 1e-9;
constexpr double kDegenerateStep = 1e-12;
constexpr int kRefactorEvery = 48;
constexpr int kBlandTrigger = 60;

struct Tableau {
  // Problem with artificials appended: columns 0..n-1 real, n..n+m-1 artificial.
  Mat A;  // m x n (real columns only; artificial columns are +-e_i)
  Vec b;  // >= 0 after row sign flips
  Vec art_sign;
  int m, n;

  std::vector<int> basis;      // m basic column ids (in 0..n+m-1)
  std::vector<char> in_basis;  // size n+m
  Mat Binv;
  Vec xB;

  Vec column(int j) const {
    if (j < n) return A.col(j);
    Vec e = Vec::Zero(m);
    e(j - n) = art_sign(j - n);
    return e;
  }

  void refactorize() {
    Mat B(m, m);
    for (int k = 0; k < m; ++k) B.col(k) = column(basis[k]);
    Binv = B.partialPivLu().inverse();
    xB = Binv * b;
  }
};

// One simplex phase on the given costs. Returns true on optimality,
// false on iteration limit. Unbounded cannot occur for our callers
// (phase 1 is bounded below by 0; phase-2 objectives are bounded on the
// transport polytope) but is reported as iteration_limit defensively.
bool run_phase(Tableau& t, const Vec& cost, const std::vector<char>& may_enter,
               int max_iter, Vec* dual_out, bool bland_from_start = false) {
  const int m = t.m;
  int degenerate_run = 0;
  bool bland = bland_from_start;
  int since_refactor = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    // dual vector y' = c_B' Binv
    Vec cB(m);
    for (int k = 0; k < m; ++k) cB(k) = cost(t.basis[k]);
    Vec y = t.Binv.transpose() * cB;

    // pricing
    int enter = -1;
    double best = -kReducedCostTol;
    const int ncols = t.n + m;
    for (int j = 0; j < ncols; ++j) {
      if (t.in_basis[j] || !may_enter[j]) continue;
      double rc;
      if (j < t.n)
        rc = cost(j) - y.dot(t.A.col(j));
      else
        rc = cost(j) - y(j - t.n) * t.art_sign(j - t.n);
      if (rc < best) {
        if (bland) {
          if (rc < -kReducedCostTol) {
            enter = j;
            break;
          }
        } else {
          best = rc;
          enter = j;
        }
      }
    }
    if (enter < 0) {
      if (dual_out) *dual_out = y;
      return true;  // optimal
    }

    Vec d = t.Binv * t.column(enter);

    // two-pass ratio test: find the minimum ratio, then pick the largest
    // pivot among the rows whose ratio is within tolerance of it (tiny
    // pivots wreck the eta-updated inverse)
    double rmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k)
      if (d(k) > kPivotTol) rmin = std::min(rmin, t.xB(k) / d(k));
    if (!std::isfinite(rmin)) return false;  // unbounded direction
    const double rtol = 1e-9 * (1.0 + std::fabs(rmin));
    int leave = -1;
    for (int k = 0; k < m; ++k) {
      if (d(k) <= kPivotTol) continue;
      const double r = t.xB(k) / d(k);
      if (r > rmin + rtol) continue;
      if (leave < 0) {
        leave = k;
      } else if (bland) {
        if (t.basis[k] < t.basis[leave]) leave = k;
      } else if (std::fabs(d(k)) > std::fabs(d(leave))) {
        leave = k;
      }
    }
    const double step = std::max(0.0, t.xB(leave) / d(leave));

    if (step < kDegenerateStep) {
      if (++degenerate_run > kBlandTrigger) bland = true;
    } else {
      degenerate_run = 0;
    }

    // pivot
    const int out_col = t.basis[leave];
    t.in_basis[out_col] = 0;
    t.in_basis[enter] = 1;
    t.basis[leave] = enter;
    const double piv = d(leave);
    t.xB -= step * d;
    t.xB(leave) = step;
    // eta update of Binv
    Vec row = t.Binv.row(leave);
    for (int k = 0; k < m; ++k) {
      if (k == leave) continue;
      const double f = d(k) / piv;
      if (f != 0.0) t.Binv.row(k) -= f * row;
    }
    t.Binv.row(leave) = row / piv;

    if (++since_refactor >= kRefactorEvery) {
      t.refactorize();
      since_refactor = 0;
    }
    // guard against drift
    for (int k = 0; k < m; ++k)
      if (t.xB(k) < 0.0 && t.xB(k) > -1e-11) t.xB(k) = 0.0;
  }
  return false;
}

}  // namespace

LpResult solve_lp(const Mat& A_in, const Vec& b_in, const Vec& c, int max_iter) {
  const int m = static_cast<int>(A_in.rows());
  const int n = static_cast<int>(A_in.cols());
  if (max_iter <= 0) max_iter = 200 + 40 * (m + n);

  auto attempt = [&](bool bland) {
    Tableau t;
    t.A = A_in;
    t.b = b_in;
    t.art_sign = Vec::Ones(m);
    t.m = m;
    t.n = n;
    for (int i = 0; i < m; ++i) {
      if (t.b(i) < 0.0) {
        t.b(i) = -t.b(i);
        t.A.row(i) = -t.A.row(i);
        // artificial column stays +e_i relative to the flipped row
      }
    }
    t.basis.resize(m);
    t.in_basis.assign(n + m, 0);
    for (int i = 0; i < m; ++i) {
      t.basis[i] = n + i;
      t.in_basis[n + i] = 1;
    }
    t.Binv = Mat::Identity(m, m);
    t.xB = t.b;

    LpResult res;

    // phase 1: minimize sum of artificials
    Vec cost1 = Vec::Zero(n + m);
    cost1.segment(n, m).setOnes();
    std::vector<char> enter1(n + m, 1);
    for (int i = 0; i < m; ++i) enter1[n + i] = 0;  // artificials stay out
    Vec y1;
    if (!run_phase(t, cost1, enter1, max_iter, &y1, bland)) {
      res.status = LpStatus::iteration_limit;
      return res;
    }
    t.refactorize();
    double art_mass = 0.0;
    for (int k = 0; k < m; ++k)
      if (t.basis[k] >= n) art_mass += std::max(0.0, t.xB(k));
    if (art_mass > 1e-8) {
      res.status = LpStatus::infeasible;
      // y1 is the phase-1 dual: y1'A_j <= cost1_j = 0 for real columns,
      // y1'b = artificial mass > 0. Undo the row sign flips.
      Vec f = y1;
      for (int i = 0; i < m; ++i)
        if (b_in(i) < 0.0) f(i) = -f(i);
      res.farkas = f;
      res.objective = art_mass;
      return res;
    }

    // phase 2
    Vec cost2 = Vec::Zero(n + m);
    cost2.head(n) = c;
    std::vector<char> enter2(n + m, 1);
    for (int i = 0; i < m; ++i) enter2[n + i] = 0;
    Vec y2;
    if (!run_phase(t, cost2, enter2, max_iter, &y2, bland)) {
      res.status = LpStatus::iteration_limit;
      return res;
    }

    t.refactorize();
    res.status = LpStatus::optimal;
    res.x = Vec::Zero(n);
    for (int k = 0; k < m; ++k) {
      if (t.basis[k] < n) res.x(t.basis[k]) = std::max(0.0, t.xB(k));
    }
    res.objective = c.dot(res.x);
    res.dual = y2;
    for (int i = 0; i < m; ++i)
      if (b_in(i) < 0.0) res.dual(i) = -res.dual(i);
    res.residual = (A_in * res.x - b_in).cwiseAbs().maxCoeff();
    return res;
  };

  LpResult res = attempt(false);
  const double scale = std::max(1.0, b_in.cwiseAbs().maxCoeff());
  if (res.status == LpStatus::iteration_limit ||
      (res.status == LpStatus::optimal && res.residual > 1e-8 * scale)) {
    // deterministic fallback: Bland's rule from the start
    res = attempt(true);
  }
  return res;
}

}  // namespace sbm
