#include "sbmot/convexfn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbmot/detail/pwa_profile.hpp"
#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"
#include "sbmot/simplex.hpp"

namespace sbm {

using detail::PwaProfile;
using detail::reduce_support;

namespace {

// ---------------------------------------------------------------------------
// 2D Monte Carlo machinery, common random numbers per McConfig seed
// ---------------------------------------------------------------------------
Mat mc_samples(const McConfig& mc) {
  RngStream rng(mc.seed, 0x6d63u);
  Mat z(mc.samples, 2);
  for (int i = 0; i < mc.samples; ++i) {
    z(i, 0) = rng.normal();
    z(i, 1) = rng.normal();
  }
  return z;
}

int argmax_atom(const Mat& atoms, const Vec& values, double w0, double w1) {
  int best = 0;
  double bv = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < atoms.rows(); ++j) {
    const double v = w0 * atoms(j, 0) + w1 * atoms(j, 1) - values(j);
    if (v > bv) {
      bv = v;
      best = j;
    }
  }
  return best;
}

struct McStats {
  double value = 0.0;
  double value_se = 0.0;
  Vec grad = Vec::Zero(2);
  double grad_se = 0.0;
  Vec masses;
};

McStats mc_stats(const Mat& atoms, const Vec& values, const Mat& z,
                 double sigma, const Vec& b) {
  const int n = static_cast<int>(z.rows());
  McStats st;
  st.masses = Vec::Zero(atoms.rows());
  double sum = 0.0, sumsq = 0.0, gsq = 0.0;
  Vec g = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const double w0 = b(0) + sigma * z(i, 0);
    const double w1 = b(1) + sigma * z(i, 1);
    const int j = argmax_atom(atoms, values, w0, w1);
    const double v = w0 * atoms(j, 0) + w1 * atoms(j, 1) - values(j);
    sum += v;
    sumsq += v * v;
    g(0) += atoms(j, 0);
    g(1) += atoms(j, 1);
    gsq += atoms(j, 0) * atoms(j, 0) + atoms(j, 1) * atoms(j, 1);
    st.masses(j) += 1.0;
  }
  st.value = sum / n;
  st.value_se = std::sqrt(std::max(0.0, sumsq / n - st.value * st.value) / n);
  st.grad = g / n;
  st.grad_se = std::sqrt(std::max(0.0, gsq / n - st.grad.squaredNorm()) / n);
  st.masses /= n;
  return st;
}

}  // namespace

// ---------------------------------------------------------------------------

PwaPotential::PwaPotential(Mat atoms, Vec values, bool envelope_flag)
    : atoms_(std::move(atoms)), values_(std::move(values)),
      envelope_flag_(envelope_flag) {
  if (atoms_.rows() != values_.size() || atoms_.rows() == 0)
    throw InvalidInputError("PwaPotential: shape mismatch");
  if (atoms_.cols() != 1 && atoms_.cols() != 2)
    throw InvalidInputError("PwaPotential: dim must be 1 or 2");
  if (!values_.allFinite() || !atoms_.allFinite())
    throw InvalidInputError("PwaPotential: non-finite data");
}

PwaPotential::PwaPotential(const DiscreteMeasure& support, Vec values,
                           bool envelope_flag)
    : PwaPotential(support.atoms(), std::move(values), envelope_flag) {}

Vec NormalizedPotential::normalized_values() const {
  const Mat& y = base.atoms();
  Vec out(base.size());
  for (int j = 0; j < base.size(); ++j)
    out(j) = base.values()(j) - offset -
             subgradient.dot(y.row(j).transpose() - anchor);
  return out;
}

PwaPotential lower_convex_envelope(const PwaPotential& p) {
  const int n = p.size();
  PwaProfile red;
  Vec params;
  if (reduce_support(p.atoms(), p.values(), red, &params)) {
    Vec env = p.values();
    const int k = red.pieces();
    for (int j = 0; j < n; ++j) {
      const double s = params(j);
      for (int i = 0; i + 1 < k; ++i) {
        if (s >= red.slopes(i) && s <= red.slopes(i + 1)) {
          const double lam =
              (s - red.slopes(i)) / (red.slopes(i + 1) - red.slopes(i));
          env(j) = (1 - lam) * red.offsets(i) + lam * red.offsets(i + 1);
          break;
        }
      }
    }
    for (int i = 0; i < k; ++i) env(red.vertex[i]) = red.offsets(i);
    return PwaPotential(p.atoms(), env, true);
  }
  // full-rank 2D: interpolation LP over the lifted points, one per atom
  Mat A(3, n);
  for (int j = 0; j < n; ++j) {
    A(0, j) = p.atoms()(j, 0);
    A(1, j) = p.atoms()(j, 1);
    A(2, j) = 1.0;
  }
  Vec env(n);
  for (int j = 0; j < n; ++j) {
    Vec b(3);
    b << p.atoms()(j, 0), p.atoms()(j, 1), 1.0;
    LpResult lp = solve_lp(A, b, p.values());
    if (lp.status != LpStatus::optimal)
      throw NonConvergenceError("lower_convex_envelope: interpolation LP");
    env(j) = std::min(lp.objective, p.values()(j));
  }
  return PwaPotential(p.atoms(), env, true);
}

std::pair<double, int> conjugate_maxaffine(const PwaPotential& p,
                                           const Vec& b) {
  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (int j = 0; j < p.size(); ++j) {
    const double v = p.atoms().row(j).dot(b.transpose()) - p.values()(j);
    if (v > best) {
      best = v;
      arg = j;
    }
  }
  return {best, arg};
}

SmoothedValue smoothed_value(const PwaPotential& p, const SmoothingKernel& k,
                             const Vec& b, const McConfig& mc) {
  if (k.variance <= 0.0) throw InvalidInputError("kernel variance must be > 0");
  const double sigma = std::sqrt(k.variance);
  PwaProfile red;
  if (reduce_support(p.atoms(), p.values(), red)) {
    double v = red.value(red.param_of(b), sigma);
    if (p.dim() == 2) v += b.dot(red.foot);
    if (!std::isfinite(v))
      throw NonConvergenceError("smoothed_value: non-finite result");
    return {v, 0.0};
  }
  const Mat z = mc_samples(mc);
  McStats st = mc_stats(p.atoms(), p.values(), z, sigma, b);
  if (!std::isfinite(st.value))
    throw NonConvergenceError("smoothed_value: non-finite result");
  return {st.value, st.value_se};
}

Vec smoothed_gradient(const PwaPotential& p, const SmoothingKernel& k,
                      const Vec& b, const McConfig& mc) {
  const double sigma = std::sqrt(k.variance);
  PwaProfile red;
  if (reduce_support(p.atoms(), p.values(), red)) {
    const double d = red.deriv(red.param_of(b), sigma);
    if (p.dim() == 1) {
      Vec g(1);
      g << d;
      return g;
    }
    return red.foot + d * red.direction;
  }
  const Mat z = mc_samples(mc);
  return mc_stats(p.atoms(), p.values(), z, sigma, b).grad;
}

double smoothed_laplacian(const PwaPotential& p, const SmoothingKernel& k,
                          const Vec& b, const McConfig& mc) {
  const double sigma = std::sqrt(k.variance);
  PwaProfile red;
  if (reduce_support(p.atoms(), p.values(), red))
    return red.second(red.param_of(b), sigma);
  const Mat z = mc_samples(mc);
  const double h = 0.05 * sigma;
  double tr = 0.0;
  for (int axis = 0; axis < 2; ++axis) {
    Vec bp = b, bm = b;
    bp(axis) += h;
    bm(axis) -= h;
    const Vec gp = mc_stats(p.atoms(), p.values(), z, sigma, bp).grad;
    const Vec gm = mc_stats(p.atoms(), p.values(), z, sigma, bm).grad;
    tr += (gp(axis) - gm(axis)) / (2.0 * h);
  }
  return tr;
}

Vec laguerre_masses(const PwaPotential& p, const SmoothingKernel& k,
                    const Vec& b, const McConfig& mc) {
  const double sigma = std::sqrt(k.variance);
  PwaProfile red;
  if (reduce_support(p.atoms(), p.values(), red))
    return red.masses(red.param_of(b), sigma, p.size());
  const Mat z = mc_samples(mc);
  return mc_stats(p.atoms(), p.values(), z, sigma, b).masses;
}

ConjugateResult smoothed_conjugate(const PwaPotential& p,
                                   const SmoothingKernel& k, const Vec& x,
                                   const McConfig& mc, const Vec* warm) {
  const double sigma = std::sqrt(k.variance);
  ConjugateResult res;
  PwaProfile red;
  if (reduce_support(p.atoms(), p.values(), red)) {
    const int kp = red.pieces();
    double t_x;
    if (p.dim() == 1) {
      t_x = x(0);
    } else {
      const Vec u = x - red.foot;
      const double off =
          std::fabs(u(0) * red.direction(1) - u(1) * red.direction(0));
      if (off > 1e-7 * std::max(1.0, u.norm()))
        throw BoundaryAtomError("smoothed_conjugate: x off the support line");
      t_x = u.dot(red.direction);
    }
    if (kp == 1) {
      if (std::fabs(t_x - red.slopes(0)) > 1e-9)
        throw BoundaryAtomError("smoothed_conjugate: single-atom support");
      res.value = red.offsets(0);
      res.argpoint = red.bass_embed(0.0);
      res.masses = Vec::Zero(p.size());
      res.masses(red.vertex[0]) = 1.0;
      return res;
    }
    const double span = red.slopes(kp - 1) - red.slopes(0);
    if (t_x <= red.slopes(0) + 1e-12 * span ||
        t_x >= red.slopes(kp - 1) - 1e-12 * span)
      throw BoundaryAtomError("smoothed_conjugate: x on the support boundary");
    const double warm_t = (warm && warm->size() == x.size())
                              ? red.param_of(*warm)
                              : std::numeric_limits<double>::quiet_NaN();
    const double t_star = red.invert_deriv(t_x, sigma, warm_t);
    res.value = t_x * t_star - red.value(t_star, sigma);
    res.argpoint = red.bass_embed(t_star);
    res.masses = red.masses(t_star, sigma, p.size());
    return res;
  }

  // full-rank 2D: Monte Carlo ascent on h(b) = <x,b> - (v * gamma^s)(b)
  if (!in_relative_interior(p.atoms(), x))
    throw BoundaryAtomError("smoothed_conjugate: x outside ri of support hull");
  const Mat z = mc_samples(mc);
  Vec b = warm ? *warm : x;
  auto h_of = [&](const Vec& bb) {
    return x.dot(bb) - mc_stats(p.atoms(), p.values(), z, sigma, bb).value;
  };
  double step = 1.0;
  double h_cur = h_of(b);
  Vec b_avg = Vec::Zero(2);
  int avg_count = 0;
  const int tail_start = mc.max_iter / 2;
  for (int it = 0; it < mc.max_iter; ++it) {
    McStats st = mc_stats(p.atoms(), p.values(), z, sigma, b);
    Vec g = x - st.grad;
    const double gn = g.norm();
    if (gn <= std::max(mc.tol, 0.1 * st.grad_se)) break;
    double alpha = std::min(4.0 * step, 4.0);
    bool moved = false;
    while (alpha > 1e-13) {
      const Vec cand = b + alpha * g;
      const double h_new = h_of(cand);
      if (h_new > h_cur + 0.1 * alpha * gn * gn) {
        b = cand;
        h_cur = h_new;
        step = alpha;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (it >= tail_start) {
      b_avg += b;
      ++avg_count;
    }
    if (!moved) break;  // stalled at a kink of the empirical objective
  }
  if (avg_count > 0) b = b_avg / avg_count;
  McStats st = mc_stats(p.atoms(), p.values(), z, sigma, b);
  res.value = x.dot(b) - st.value;
  res.argpoint = b;
  res.masses = st.masses;
  res.std_error = st.value_se;
  const double resid = (x - st.grad).norm();
  res.converged = resid <= std::max(0.02, 5.0 * st.grad_se);
  return res;
}

NormalizedPotential normalize_at(const PwaPotential& p, const Vec& x,
                                 double eps) {
  if (eps <= 0.0) throw InvalidInputError("normalize_at: eps must be > 0");
  PwaPotential env = p.envelope_flag() ? p : lower_convex_envelope(p);
  const int n = env.size();
  Vec g;
  double offset = 0.0;
  PwaProfile red;
  if (reduce_support(env.atoms(), env.values(), red)) {
    double t_x;
    if (env.dim() == 1) {
      t_x = x(0);
    } else {
      const Vec u = x - red.foot;
      if (std::fabs(u(0) * red.direction(1) - u(1) * red.direction(0)) >
          1e-7 * std::max(1.0, u.norm()))
        throw InvalidInputError("normalize_at: x outside the support hull");
      t_x = u.dot(red.direction);
    }
    const int k = red.pieces();
    const double span = std::max(1e-30, red.slopes(k - 1) - red.slopes(0));
    if (t_x < red.slopes(0) - 1e-9 * span ||
        t_x > red.slopes(k - 1) + 1e-9 * span)
      throw InvalidInputError("normalize_at: x outside the support hull");
    double left = 0.0, right = 0.0, val = red.offsets(0);
    if (k > 1) {
      int seg = 0;
      while (seg + 2 < k && t_x > red.slopes(seg + 1)) ++seg;
      const double s0 = red.slopes(seg), s1 = red.slopes(seg + 1);
      const double slope = red.breaks(seg);
      const double lam = std::clamp((t_x - s0) / (s1 - s0), 0.0, 1.0);
      val = (1 - lam) * red.offsets(seg) + lam * red.offsets(seg + 1);
      left = right = slope;
      if (std::fabs(t_x - s0) <= 1e-9 * span && seg > 0)
        left = red.breaks(seg - 1);
      if (std::fabs(t_x - s1) <= 1e-9 * span && seg + 2 < k)
        right = red.breaks(seg + 1);
    }
    const double gt = 0.5 * (left + right);
    if (env.dim() == 1) {
      g = Vec(1);
      g << gt;
    } else {
      g = gt * red.direction;
    }
    offset = val;
  } else {
    Mat A(3, n);
    for (int j = 0; j < n; ++j) {
      A(0, j) = env.atoms()(j, 0);
      A(1, j) = env.atoms()(j, 1);
      A(2, j) = 1.0;
    }
    auto lp_at = [&](const Vec& q, bool* ok) -> std::pair<double, Vec> {
      Vec b(3);
      b << q(0), q(1), 1.0;
      LpResult lp = solve_lp(A, b, env.values());
      if (lp.status != LpStatus::optimal) {
        *ok = false;
        return {0.0, Vec::Zero(2)};
      }
      *ok = true;
      return {lp.objective, lp.dual.head(2)};
    };
    bool ok = false;
    auto [val, g0] = lp_at(x, &ok);
    if (!ok) throw InvalidInputError("normalize_at: x outside the support hull");
    // probe a small ring around x: the LP duals are gradients of the facets
    // incident to x, and any average of those is a subgradient
    double diam = 0.0;
    for (int j = 0; j < n; ++j)
      diam = std::max(diam, (env.atoms().row(j).transpose() - x).norm());
    const double delta = 1e-6 * std::max(1.0, diam);
    std::vector<Vec> grads{g0};
    for (int r = 0; r < 8; ++r) {
      const double th = 2.0 * M_PI * r / 8;
      Vec q = x;
      q(0) += delta * std::cos(th);
      q(1) += delta * std::sin(th);
      bool ok2 = false;
      auto [v2, g2] = lp_at(q, &ok2);
      (void)v2;
      if (!ok2) continue;
      bool dup = false;
      for (const Vec& gg : grads)
        if ((gg - g2).norm() <= 1e-7 * std::max(1.0, gg.norm())) dup = true;
      if (!dup) grads.push_back(g2);
    }
    g = Vec::Zero(2);
    for (const Vec& gg : grads) g += gg;
    g /= static_cast<double>(grads.size());
    offset = val;
  }

  NormalizedPotential np{env, x, g, offset, eps};
  // numerical slack can leave tiny negatives; absorb them into the offset
  const double mn = np.normalized_values().minCoeff();
  if (mn < 0.0) np.offset += mn;
  return np;
}

}  // namespace sbm
