#include "sbmot/gaussmcov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"
#include "sbmot/geometry.hpp"

namespace sbm {

namespace {

// Comonotone formula on (atoms, weights) given as raw arrays. Zero weights
// are allowed; they give zero-width cells. The dual potentials follow the
// breakpoint recursion phi_{k+1} = phi_k + q_k (y_{k+1} - y_k) with the
// first potential gauged to zero.
double mcov_1d_raw(const Vec& atoms, const Vec& weights, Vec* duals_out) {
  const int n = static_cast<int>(atoms.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return atoms(a) < atoms(b); });
  const double total = weights.sum();
  double value = 0.0, cum = 0.0, prev_pdf = 0.0;
  for (int idx = 0; idx < n; ++idx) {
    const int j = order[idx];
    cum += weights(j) / total;
    const double pdf =
        (cum >= 1.0 - 1e-15) ? 0.0 : norm_pdf(norm_quantile(cum));
    value += atoms(j) * (prev_pdf - pdf);
    prev_pdf = pdf;
  }
  if (duals_out) {
    Vec duals = Vec::Zero(n);
    double cum2 = 0.0, phi = 0.0;
    for (int idx = 0; idx < n; ++idx) {
      const int j = order[idx];
      if (idx > 0) {
        const double q =
            norm_quantile(std::clamp(cum2, 1e-300, 1.0 - 1e-16));
        phi += q * (atoms(j) - atoms(order[idx - 1]));
      }
      duals(j) = phi;
      cum2 += weights(j) / total;
    }
    *duals_out = duals;
  }
  return value;
}

}  // namespace

McovResult mcov_1d(const DiscreteMeasure& p) {
  if (p.dim() != 1) throw InvalidInputError("mcov_1d: measure is not 1D");
  McovResult res;
  Vec duals;
  res.value = mcov_1d_raw(p.atoms().col(0), p.weights(), &duals);
  res.dual_weights = duals;
  res.error_estimate = 0.0;
  return res;
}

McovResult mcov_semidiscrete(const DiscreteMeasure& p, const McConfig& mc) {
  if (p.dim() != 2)
    throw InvalidInputError("mcov_semidiscrete: measure is not 2D");
  const int m = p.size();
  McovResult res;

  // collinear supports reduce exactly: <Y,Z> = <foot,Z> + S <e,Z>
  {
    Vec e, c, t;
    if (collinear_fit(p.atoms(), e, c, t)) {
      Vec duals;
      res.value = mcov_1d_raw(t, p.weights(), &duals);
      res.dual_weights = duals;
      res.error_estimate = 0.0;
      return res;
    }
  }

  // averaged stochastic subgradient on F(phi) = <p,phi> + E max_j(<Z,y_j>-phi_j)
  const Mat& y = p.atoms();
  Vec phi = Vec::Zero(m), phi_avg = Vec::Zero(m);
  RngStream train(mc.seed, 0x4d43u);
  const int iters = std::max(4000, mc.max_iter * 10);
  const int batch = 64;
  double scale = 0.0;
  for (int j = 0; j < m; ++j) scale = std::max(scale, y.row(j).norm());
  const double a0 = 0.5 * std::max(1.0, scale);
  int avg_count = 0;
  for (int it = 0; it < iters; ++it) {
    Vec g = p.weights();
    for (int s = 0; s < batch; ++s) {
      const double z0 = train.normal(), z1 = train.normal();
      int arg = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        const double v = z0 * y(j, 0) + z1 * y(j, 1) - phi(j);
        if (v > best) {
          best = v;
          arg = j;
        }
      }
      g(arg) -= 1.0 / batch;
    }
    const double step = a0 / std::sqrt(static_cast<double>(it + 1));
    phi -= step * g;
    if (it >= iters / 2) {
      phi_avg += phi;
      ++avg_count;
    }
  }
  phi = phi_avg / avg_count;
  phi.array() -= phi(0);  // gauge

  // held-out value estimate
  RngStream held(mc.seed, 0x4845u);
  const int n_eval = std::max(mc.samples, 1000);
  double sum = 0.0, sumsq = 0.0;
  for (int s = 0; s < n_eval; ++s) {
    const double z0 = held.normal(), z1 = held.normal();
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j)
      best = std::max(best, z0 * y(j, 0) + z1 * y(j, 1) - phi(j));
    sum += best;
    sumsq += best * best;
  }
  const double emax = sum / n_eval;
  const double se =
      std::sqrt(std::max(0.0, sumsq / n_eval - emax * emax) / n_eval);
  res.value = p.weights().dot(phi) + emax;
  res.dual_weights = phi;
  res.error_estimate = se;
  return res;
}

McovResult mcov(const DiscreteMeasure& p, const McConfig& mc) {
  return p.dim() == 1 ? mcov_1d(p) : mcov_semidiscrete(p, mc);
}

double mcov_row(const Mat& atoms, const Vec& probs, const McConfig& mc) {
  if (atoms.cols() == 1) return mcov_1d_raw(atoms.col(0), probs, nullptr);
  // restrict to the positive support, then reuse the measure-level code
  std::vector<int> sup;
  for (int j = 0; j < probs.size(); ++j)
    if (probs(j) > 0.0) sup.push_back(j);
  if (sup.empty()) throw InvalidInputError("mcov_row: empty row");
  Mat a(static_cast<int>(sup.size()), atoms.cols());
  Vec w(static_cast<int>(sup.size()));
  for (int k = 0; k < static_cast<int>(sup.size()); ++k) {
    a.row(k) = atoms.row(sup[k]);
    w(k) = probs(sup[k]);
  }
  if (sup.size() == 1) return 0.0;  // Dirac: MCov(delta, gamma) = 0
  Vec e, c, t;
  if (collinear_fit(a, e, c, t)) return mcov_1d_raw(t, w, nullptr);
  DiscreteMeasure row(2, a, w / w.sum());
  return mcov_semidiscrete(row, mc).value;
}

}  // namespace sbm
