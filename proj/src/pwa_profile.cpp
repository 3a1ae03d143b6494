#include "sbmot/detail/pwa_profile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"

namespace sbm::detail {

namespace {

// breakpoints outside t +- kWindow * sigma contribute their saturated CDF
constexpr double kWindow = 9.0;

// lower hull of (s_j, psi_j); strictly convex vertices only
std::vector<int> lower_hull_1d(const Vec& s, const Vec& psi,
                               const std::vector<int>& order) {
  std::vector<int> hull;
  for (int oi : order) {
    while (hull.size() >= 2) {
      const int i0 = hull[hull.size() - 2], i1 = hull.back();
      const double lhs = (psi(i1) - psi(i0)) * (s(oi) - s(i1));
      const double rhs = (psi(oi) - psi(i1)) * (s(i1) - s(i0));
      if (lhs >= rhs)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(oi);
  }
  return hull;
}

}  // namespace

Vec PwaProfile::bass_embed(double t) const {
  if (direction.size() == 1) {
    Vec b(1);
    b << t;
    return b;
  }
  return t * direction;
}

double PwaProfile::value(double t, double sigma) const {
  const int k = pieces();
  if (k == 1) return slopes(0) * t - offsets(0);
  double val = 0.0, prev_pdf = 0.0, prev_cdf = 0.0;
  for (int i = 0; i < k; ++i) {
    const bool last = (i == k - 1);
    const double zc = last ? 0.0 : (breaks(i) - t) / sigma;
    const double cdf = last ? 1.0 : norm_cdf(zc);
    const double pdf = last ? 0.0 : norm_pdf(zc);
    val += (slopes(i) * t - offsets(i)) * (cdf - prev_cdf) +
           slopes(i) * sigma * (prev_pdf - pdf);
    prev_pdf = pdf;
    prev_cdf = cdf;
  }
  return val;
}

double PwaProfile::deriv(double t, double sigma) const {
  const int k = pieces();
  if (k == 1) return slopes(0);
  // deriv(t) = m_K - sum_i (m_{i+1} - m_i) Phi((c_i - t)/sigma). Breakpoints
  // below the window have Phi ~ 0, those above have Phi ~ 1; the saturated
  // upper tail telescopes to slopes(last).
  const double lo = t - kWindow * sigma, hi = t + kWindow * sigma;
  const int first = static_cast<int>(
      std::lower_bound(breaks.data(), breaks.data() + k - 1, lo) -
      breaks.data());
  const int last = static_cast<int>(
      std::upper_bound(breaks.data(), breaks.data() + k - 1, hi) -
      breaks.data());
  double val = slopes(last);
  for (int i = first; i < last; ++i)
    val -= (slopes(i + 1) - slopes(i)) * norm_cdf((breaks(i) - t) / sigma);
  return val;
}

double PwaProfile::second(double t, double sigma) const {
  const int k = pieces();
  if (k == 1) return 0.0;
  const double lo = t - kWindow * sigma, hi = t + kWindow * sigma;
  const int first = static_cast<int>(
      std::lower_bound(breaks.data(), breaks.data() + k - 1, lo) -
      breaks.data());
  const int last = static_cast<int>(
      std::upper_bound(breaks.data(), breaks.data() + k - 1, hi) -
      breaks.data());
  double val = 0.0;
  for (int i = first; i < last; ++i)
    val += norm_pdf((breaks(i) - t) / sigma) * (slopes(i + 1) - slopes(i));
  return val / sigma;
}

Vec PwaProfile::masses(double t, double sigma, int n_atoms) const {
  Vec out = Vec::Zero(n_atoms);
  double prev_cdf = 0.0;
  const int k = pieces();
  for (int i = 0; i < k; ++i) {
    const double cdf = (i == k - 1) ? 1.0 : norm_cdf((breaks(i) - t) / sigma);
    out(vertex[i]) = std::max(0.0, cdf - prev_cdf);
    prev_cdf = cdf;
  }
  const double s = out.sum();
  if (s > 0.0) out /= s;
  return out;
}

int PwaProfile::active_piece(double t) const {
  const int k = pieces();
  if (k == 1) return 0;
  const int idx = static_cast<int>(
      std::lower_bound(breaks.data(), breaks.data() + k - 1, t) -
      breaks.data());
  return idx;
}

double PwaProfile::invert_deriv(double x, double sigma, double warm) const {
  const int k = pieces();
  double lo, hi;
  if (std::isfinite(warm)) {
    lo = warm - sigma;
    hi = warm + sigma;
  } else {
    lo = breaks(0) - sigma;
    hi = breaks(k - 2) + sigma;
  }
  double step = std::max(1.0, sigma);
  while (deriv(lo, sigma) > x) {
    lo -= step;
    step *= 2.0;
    if (step > 1e12) throw NonConvergenceError("conjugate bracket expansion");
  }
  step = std::max(1.0, sigma);
  while (deriv(hi, sigma) < x) {
    hi += step;
    step *= 2.0;
    if (step > 1e12) throw NonConvergenceError("conjugate bracket expansion");
  }
  double t = 0.5 * (lo + hi);
  if (std::isfinite(warm) && warm > lo && warm < hi) t = warm;
  const double ftol = 1e-12 * std::max(1.0, std::fabs(x));
  for (int it = 0; it < 200; ++it) {
    const double f = deriv(t, sigma) - x;
    if (f > 0.0)
      hi = t;
    else
      lo = t;
    if (std::fabs(f) <= ftol ||
        hi - lo <= 1e-15 * std::max(1.0, std::fabs(lo) + std::fabs(hi)))
      return t;
    const double d2 = second(t, sigma);
    double t_new = (d2 > 1e-300) ? t - f / d2 : 0.5 * (lo + hi);
    if (!(t_new > lo && t_new < hi)) t_new = 0.5 * (lo + hi);
    t = t_new;
  }
  return t;
}

bool reduce_support(const Mat& atoms, const Vec& values, PwaProfile& red,
                    Vec* params_out) {
  const int n = static_cast<int>(atoms.rows());
  Vec s(n);
  if (atoms.cols() == 1) {
    s = atoms.col(0);
    red.direction = Vec::Ones(1);
    red.foot = Vec::Zero(1);
  } else {
    Vec e, c, t;
    if (!collinear_fit(atoms, e, c, t)) return false;
    red.direction = e;
    for (int j = 0; j < n; ++j) s(j) = atoms.row(j).dot(e.transpose());
    red.foot = atoms.row(0).transpose() - s(0) * e;
  }
  if (params_out) *params_out = s;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return s(a) < s(b); });
  red.vertex = lower_hull_1d(s, values, order);
  const int k = static_cast<int>(red.vertex.size());
  red.slopes.resize(k);
  red.offsets.resize(k);
  for (int i = 0; i < k; ++i) {
    red.slopes(i) = s(red.vertex[i]);
    red.offsets(i) = values(red.vertex[i]);
  }
  red.breaks.resize(std::max(0, k - 1));
  for (int i = 0; i + 1 < k; ++i)
    red.breaks(i) = (red.offsets(i + 1) - red.offsets(i)) /
                    (red.slopes(i + 1) - red.slopes(i));
  return true;
}

}  // namespace sbm::detail
