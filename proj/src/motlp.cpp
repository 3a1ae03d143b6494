#include "sbmot/motlp.hpp"

#include <cmath>

#include "sbmot/errors.hpp"
#include "sbmot/simplex.hpp"

namespace sbm::motlp {

namespace {

constexpr double kReachTol = 1e-9;

// Constraint matrix of MT(mu, nu): row sums, column sums, and d barycenter
// rows per mu-atom. Variables are pi_ij with j fastest.
void build(const DiscreteMeasure& mu, const DiscreteMeasure& nu, Mat& A,
           Vec& b) {
  const int n = mu.size(), m = nu.size(), d = mu.dim();
  const int rows = n + m + d * n;
  A = Mat::Zero(rows, n * m);
  b = Vec::Zero(rows);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) A(i, i * m + j) = 1.0;
    b(i) = mu.weights()(i);
  }
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) A(n + j, i * m + j) = 1.0;
    b(n + j) = nu.weights()(j);
  }
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      const int r = n + m + i * d + k;
      for (int j = 0; j < m; ++j)
        A(r, i * m + j) = nu.atoms()(j, k) - mu.atoms()(i, k);
    }
  }
}

Coupling to_coupling(const Vec& x, int n, int m) {
  Mat mass(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) mass(i, j) = std::max(0.0, x(i * m + j));
  return Coupling(n, m, mass);
}

void check_dims(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim())
    throw InvalidInputError("motlp: dimension mismatch");
}

}  // namespace

FeasibleResult feasible(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  check_dims(mu, nu);
  const int n = mu.size(), m = nu.size(), d = mu.dim();
  Mat A;
  Vec b;
  build(mu, nu, A, b);
  LpResult lp = solve_lp(A, b, Vec::Zero(n * m));
  FeasibleResult res;
  if (lp.status == LpStatus::optimal) {
    if (lp.residual > 1e-9)
      throw NonConvergenceError("motlp::feasible: residual " +
                                std::to_string(lp.residual));
    res.coupling = to_coupling(lp.x, n, m);
    return res;
  }
  if (lp.status == LpStatus::iteration_limit)
    throw NonConvergenceError("motlp::feasible: simplex iteration limit");
  res.farkas_row = lp.farkas.segment(0, n);
  res.farkas_col = lp.farkas.segment(n, m);
  res.farkas_bary.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) res.farkas_bary(i, k) = lp.farkas(n + m + i * d + k);
  return res;
}

double max_cell_mass(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                     int i, int j) {
  check_dims(mu, nu);
  const int n = mu.size(), m = nu.size();
  Mat A;
  Vec b;
  build(mu, nu, A, b);
  Vec c = Vec::Zero(n * m);
  c(i * m + j) = -1.0;
  LpResult lp = solve_lp(A, b, c);
  if (lp.status == LpStatus::infeasible)
    throw InvalidInputError("max_cell_mass: infeasible pair");
  if (lp.status != LpStatus::optimal)
    throw NonConvergenceError("max_cell_mass: simplex iteration limit");
  return -lp.objective;
}

std::vector<std::vector<char>> reachability_matrix(const DiscreteMeasure& mu,
                                                   const DiscreteMeasure& nu) {
  check_dims(mu, nu);
  const int n = mu.size(), m = nu.size();
  Mat A;
  Vec b;
  build(mu, nu, A, b);
  std::vector<std::vector<char>> reach(n, std::vector<char>(m, 0));
  for (;;) {
    Vec c = Vec::Zero(n * m);
    bool any_open = false;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        if (!reach[i][j]) {
          c(i * m + j) = -1.0;
          any_open = true;
        }
    if (!any_open) break;
    LpResult lp = solve_lp(A, b, c);
    if (lp.status == LpStatus::infeasible)
      throw InvalidInputError("reachability_matrix: infeasible pair");
    if (lp.status != LpStatus::optimal)
      throw NonConvergenceError("reachability_matrix: simplex limit");
    if (-lp.objective <= kReachTol) break;  // all open pairs certified zero
    bool added = false;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        if (!reach[i][j] && lp.x(i * m + j) > kReachTol) {
          reach[i][j] = 1;
          added = true;
        }
    if (!added) break;
  }
  return reach;
}

std::vector<int> reachable_set(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu, int i) {
  auto reach = reachability_matrix(mu, nu);
  std::vector<int> out;
  for (int j = 0; j < nu.size(); ++j)
    if (reach[i][j]) out.push_back(j);
  return out;
}

std::optional<Coupling> solve_mt_lp(const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu,
                                    const Mat& cost) {
  check_dims(mu, nu);
  const int n = mu.size(), m = nu.size();
  Mat A;
  Vec b;
  build(mu, nu, A, b);
  Vec c(n * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) c(i * m + j) = cost(i, j);
  LpResult lp = solve_lp(A, b, c);
  if (lp.status == LpStatus::infeasible) return std::nullopt;
  if (lp.status != LpStatus::optimal)
    throw NonConvergenceError("solve_mt_lp: simplex iteration limit");
  return to_coupling(lp.x, n, m);
}

}  // namespace sbm::motlp
