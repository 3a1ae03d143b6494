#include "sbmot/dualsolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <numeric>
#include <sstream>

#include "sbmot/errors.hpp"
#include "sbmot/gaussmcov.hpp"
#include "sbmot/serialize.hpp"

namespace sbm {

namespace {

McConfig mc_for_atom(const McConfig& base, int i) {
  McConfig out = base;
  out.seed = base.seed + 1000003ull * static_cast<unsigned long long>(i + 1);
  return out;
}

// Conjugate contribution of one mu-atom, including the limiting face/vertex
// treatment for atoms on the relative boundary of the support hull. The
// limit of (psi^* * gamma)^* at a hull-boundary point is the conjugate of
// the smoothing restricted to the face, which in turn is a 1D profile.
struct AtomEval {
  double value = 0.0;
  Vec masses;     // over all nu-atoms
  Vec bass;       // finite for interior atoms; the atom itself on faces
  bool boundary = false;
  double std_error = 0.0;
};

AtomEval face_conjugate(const PwaPotential& env, const Vec& x) {
  const Mat& y = env.atoms();
  const int m = env.size();
  AtomEval out;
  out.boundary = true;
  out.bass = x;
  out.masses = Vec::Zero(m);
  // vertex case: x within tolerance of a support atom that is extremal
  double span = 0.0;
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k)
      span = std::max(span, (y.row(j) - y.row(k)).norm());
  const double tol = 1e-9 * std::max(1.0, span);
  for (int j = 0; j < m; ++j) {
    if ((y.row(j).transpose() - x).norm() <= tol) {
      out.value = env.values()(j);
      out.masses(j) = 1.0;
      return out;
    }
  }
  if (env.dim() == 1)
    throw BoundaryAtomError("eval_dual: mu-atom outside the support hull");
  // edge case: find the hull edge whose supporting line contains x
  const std::vector<int> hull = convex_hull_2d(y);
  const int h = static_cast<int>(hull.size());
  for (int e = 0; e < h; ++e) {
    const Vec a = y.row(hull[e]).transpose();
    const Vec b = y.row(hull[(e + 1) % h]).transpose();
    const Vec d = b - a;
    const double len = d.norm();
    if (len <= tol) continue;
    const Vec u = x - a;
    const double off = std::fabs(u(0) * d(1) - u(1) * d(0)) / len;
    const double t = u.dot(d) / (len * len);
    if (off <= tol && t > -1e-12 && t < 1.0 + 1e-12) {
      // gather the atoms on this edge line and solve the 1D face problem
      std::vector<int> face;
      for (int j = 0; j < m; ++j) {
        const Vec uj = y.row(j).transpose() - a;
        if (std::fabs(uj(0) * d(1) - uj(1) * d(0)) / len <= tol)
          face.push_back(j);
      }
      Mat fa(static_cast<int>(face.size()), 2);
      Vec fv(static_cast<int>(face.size()));
      for (int k = 0; k < static_cast<int>(face.size()); ++k) {
        fa.row(k) = y.row(face[k]);
        fv(k) = env.values()(face[k]);
      }
      PwaPotential fp(fa, fv);
      ConjugateResult cr = smoothed_conjugate(
          lower_convex_envelope(fp), SmoothingKernel{1.0, 2}, x);
      out.value = cr.value;
      for (int k = 0; k < static_cast<int>(face.size()); ++k)
        out.masses(face[k]) = cr.masses(k);
      return out;
    }
  }
  throw BoundaryAtomError("eval_dual: mu-atom outside the support hull");
}

struct EvalOut {
  double dual = 0.0;
  Vec grad;
  Mat rows;   // n x m laguerre masses
  Mat bass;   // n x d
  double mc_error = 0.0;  // 3 sigma aggregate
  std::vector<char> boundary;
};

EvalOut eval_core(const Vec& raw, const PwaPotential& env,
                  const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                  const McConfig& mc, const Mat* warm_bass) {
  const int n = mu.size(), m = nu.size(), d = mu.dim();
  EvalOut out;
  out.rows = Mat::Zero(n, m);
  out.bass = Mat::Zero(n, d);
  out.boundary.assign(n, 0);
  const SmoothingKernel kernel{1.0, d};
  double dual = nu.weights().dot(raw);
  double var3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec x = mu.atom(i);
    AtomEval ae;
    try {
      Vec w;
      const Vec* warm = nullptr;
      if (warm_bass && warm_bass->rows() == n) {
        w = warm_bass->row(i).transpose();
        if (w.allFinite()) warm = &w;
      }
      ConjugateResult cr =
          smoothed_conjugate(env, kernel, x, mc_for_atom(mc, i), warm);
      ae.value = cr.value;
      ae.masses = cr.masses;
      ae.bass = cr.argpoint;
      ae.std_error = cr.std_error;
    } catch (const BoundaryAtomError&) {
      ae = face_conjugate(env, x);
    }
    dual -= mu.weights()(i) * ae.value;
    out.rows.row(i) = ae.masses.transpose();
    out.bass.row(i) = ae.bass.transpose();
    out.boundary[i] = ae.boundary ? 1 : 0;
    const double se = mu.weights()(i) * ae.std_error;
    var3 += se * se;
  }
  out.dual = dual;
  out.grad = nu.weights() - out.rows.transpose() * mu.weights();
  out.mc_error = 3.0 * std::sqrt(var3);
  return out;
}

double induced_primal(const Mat& rows, const DiscreteMeasure& mu,
                      const DiscreteMeasure& nu, const McConfig& mc) {
  double p = 0.0;
  for (int i = 0; i < mu.size(); ++i)
    p += mu.weights()(i) *
         mcov_row(nu.atoms(), rows.row(i).transpose(), mc_for_atom(mc, i));
  return p;
}

}  // namespace

DualState eval_dual(const PwaPotential& psi, const DiscreteMeasure& mu,
                    const DiscreteMeasure& nu, const McConfig& mc) {
  if (mu.dim() != nu.dim() || psi.size() != nu.size())
    throw InvalidInputError("eval_dual: shape mismatch");
  const PwaPotential env =
      psi.envelope_flag() ? psi : lower_convex_envelope(psi);
  EvalOut e = eval_core(psi.values(), env, mu, nu, mc, nullptr);
  Mat mass = e.rows;
  for (int i = 0; i < mu.size(); ++i) mass.row(i) *= mu.weights()(i);
  DualState st(psi, Coupling(mu.size(), nu.size(), mass));
  st.dual_value = e.dual;
  st.gradient = e.grad;
  st.bass_points = e.bass;
  st.primal_value = induced_primal(e.rows, mu, nu, mc);
  st.gap = st.dual_value - st.primal_value;
  st.mc_error = e.mc_error;
  return st;
}

SolveResult solve_dual(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const DualConfig& config) {
  if (mu.dim() != nu.dim())
    throw InvalidInputError("solve_dual: dimension mismatch");
  const int m = nu.size();

  Vec psi = 0.5 * nu.atoms().rowwise().squaredNorm();
  PwaPotential env = lower_convex_envelope(PwaPotential(nu.atoms(), psi));
  psi = env.values();

  Mat warm;  // bass points carried across iterations
  EvalOut cur = eval_core(psi, env, mu, nu, config.mc, nullptr);
  warm = cur.bass;

  SolveTrace trace;
  double best_lb = -std::numeric_limits<double>::infinity();
  double s_sum = 0.0;
  int next_snapshot = 0;

  std::deque<Vec> mem_s, mem_y;
  const int mem = std::max(1, config.lbfgs_memory);
  double alpha_prev = 1.0;  // grows in flat valleys (the tilt direction of
                            // reducible pairs has nearly zero curvature)

  auto record = [&](int iter, bool force) {
    if (!config.with_trace) return;
    if (iter < next_snapshot && !force) return;
    next_snapshot = (iter < 32) ? iter + 1
                                : iter + 1 + static_cast<int>(0.18 * iter);
    const double primal = induced_primal(cur.rows, mu, nu, config.mc);
    // the induced primal value is a valid lower bound only once the induced
    // coupling is close to feasible (columns near nu)
    if (cur.grad.cwiseAbs().maxCoeff() <= 1e-3)
      best_lb = std::max(best_lb, primal);
    TraceRecord r;
    r.iter = iter;
    r.dual = cur.dual;
    r.primal = primal;
    r.gap = cur.dual - primal;
    r.grad_norm = cur.grad.cwiseAbs().maxCoeff();
    r.s_partial_sum = s_sum;
    r.psi = psi;
    trace.records.push_back(std::move(r));
  };

  record(0, true);

  int iter = 0;
  bool converged = false;
  std::string diag;
  for (; iter < config.max_iter; ++iter) {
    const double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm <= config.grad_tol) {
      converged = true;
      break;
    }
    if (std::isfinite(best_lb)) s_sum += std::max(0.0, cur.dual - best_lb);

    // L-BFGS two-loop recursion on the raw coordinates
    Vec d = -cur.grad;
    if (!mem_s.empty()) {
      std::vector<double> alpha(mem_s.size());
      for (int k = static_cast<int>(mem_s.size()) - 1; k >= 0; --k) {
        const double rho = 1.0 / mem_y[k].dot(mem_s[k]);
        alpha[k] = rho * mem_s[k].dot(d);
        d -= alpha[k] * mem_y[k];
      }
      const double gamma = mem_s.back().dot(mem_y.back()) /
                           mem_y.back().squaredNorm();
      d *= gamma;
      for (size_t k = 0; k < mem_s.size(); ++k) {
        const double rho = 1.0 / mem_y[k].dot(mem_s[k]);
        const double beta = rho * mem_y[k].dot(d);
        d += (alpha[k] - beta) * mem_s[k];
      }
    }
    double dg = d.dot(cur.grad);
    if (!(dg < -1e-14 * d.norm() * cur.grad.norm())) {
      d = -cur.grad;
      dg = -cur.grad.squaredNorm();
      mem_s.clear();
      mem_y.clear();
    }

    // backtracking Armijo line search with envelope projection
    bool accepted = false;
    Vec psi_new;
    PwaPotential env_new = env;
    EvalOut enew = cur;
    // near the optimum the decrease -alpha |g|^2 falls below the double
    // resolution of D; accept machine-level non-increase so the iterates
    // keep moving while the gradient still shrinks
    // Sufficient decrease, or -- once the decrease falls below the double
    // resolution of D -- machine-level non-increase combined with strict
    // gradient progress (this is what keeps the flat tilt direction of
    // reducible pairs moving without letting the iterate wander). The
    // resolution of D is set by its summands, not its value: D sums terms
    // of size |psi|, so rounding noise is ~eps * ||psi||_inf * sqrt(m).
    const double fp_slack =
        1e-13 * std::max(1.0, psi.cwiseAbs().maxCoeff());
    const double gnorm_cur = cur.grad.cwiseAbs().maxCoeff();
    auto try_direction = [&](const Vec& dir, double dir_dg) {
      double alpha = std::min(std::max(1.0, 2.0 * alpha_prev), 1e12);
      // flat-regime fallback: best gradient shrink over the halving scan
      double flat_best = 0.995 * gnorm_cur;
      bool flat_found = false;
      int worse_streak = 0;
      Vec flat_proj;
      PwaPotential flat_env = env;
      EvalOut flat_et = cur;
      double flat_alpha = alpha;
      for (int ls = 0; ls < 100; ++ls) {
        Vec trial = psi + alpha * dir;
        PwaPotential env_t =
            lower_convex_envelope(PwaPotential(nu.atoms(), trial));
        Vec proj = env_t.values();
        if ((proj - psi).cwiseAbs().maxCoeff() == 0.0) break;  // no movement
        EvalOut et;
        try {
          et = eval_core(proj, env_t, mu, nu, config.mc, &warm);
        } catch (const NonConvergenceError&) {
          alpha *= 0.5;  // step too extreme for the conjugate solver
          continue;
        }
        if (et.dual <= cur.dual + 1e-4 * alpha * dir_dg) {
          psi_new = proj;
          env_new = env_t;
          enew = et;
          accepted = true;
          alpha_prev = alpha;
          return;
        }
        if (et.dual <= cur.dual + fp_slack) {
          const double gn = et.grad.cwiseAbs().maxCoeff();
          if (gn < flat_best) {
            flat_best = gn;
            flat_proj = proj;
            flat_env = env_t;
            flat_et = et;
            flat_alpha = alpha;
            flat_found = true;
            worse_streak = 0;
          } else if (flat_found && ++worse_streak >= 4) {
            break;  // past the sweet spot of the scan
          }
        }
        alpha *= 0.5;
        if (alpha < 1e-14) break;
      }
      if (flat_found) {
        psi_new = flat_proj;
        env_new = flat_env;
        enew = flat_et;
        accepted = true;
        alpha_prev = flat_alpha;
      }
    };
    // Exact-ish line search along steepest descent on a geometric step
    // ladder; D is convex along any ray, so the ladder argmin is close to
    // the true line minimum. This is what unlocks the nearly flat affine
    // tilt directions of reducible pairs, whose curvature is orders of
    // magnitude below the transport part.
    // the gauge-invariant proxy <psi, g> equals D - P_induced in 1D and is
    // what the cross-component leak scales with; the sweep may trade an
    // unresolvable D improvement for proxy progress
    auto gap_proxy = [](const Vec& vals, const EvalOut& e) {
      return std::fabs(vals.dot(e.grad));
    };
    auto valley_sweep = [&]() {
      const Vec dir = -cur.grad;
      double best_dual = cur.dual;
      double best_proxy = gap_proxy(psi, cur);
      Vec best_proj;
      PwaPotential best_env = env;
      EvalOut best_et = cur;
      bool found = false;
      double alpha = 1.0;
      for (int k = 0; k < 26; ++k, alpha *= 4.0) {
        Vec trial = psi + alpha * dir;
        PwaPotential env_t =
            lower_convex_envelope(PwaPotential(nu.atoms(), trial));
        Vec proj = env_t.values();
        if ((proj - psi).cwiseAbs().maxCoeff() == 0.0) continue;
        EvalOut et;
        try {
          et = eval_core(proj, env_t, mu, nu, config.mc, &warm);
        } catch (const NonConvergenceError&) {
          break;  // larger steps only get more extreme
        }
        const bool lower = et.dual < best_dual - fp_slack;
        const bool flat = et.dual <= cur.dual + fp_slack;
        const bool proxy_gain =
            flat && gap_proxy(proj, et) < 0.7 * best_proxy;
        const bool grad_gain =
            flat && !found &&
            et.grad.cwiseAbs().maxCoeff() < 0.995 * gnorm_cur;
        if (lower || proxy_gain || grad_gain) {
          best_dual = std::min(best_dual, et.dual);
          best_proxy = std::min(best_proxy, gap_proxy(proj, et));
          best_proj = proj;
          best_env = env_t;
          best_et = et;
          found = true;
        }
      }
      if (found) {
        psi_new = best_proj;
        env_new = best_env;
        enew = best_et;
        accepted = true;
      }
    };
    // Structured stall breaker for reducible pairs: the optimizing
    // sequences of such problems grow by adding C|y - c| at the contact
    // points, so sweep that one-kink family with kinks placed between the
    // atoms where the gradient concentrates.
    auto kink_sweep = [&]() {
      if (nu.dim() != 1) return;
      // the first-order gain of adding |y - c| is <g, |y - c|>, which stays
      // visibly negative at a cross-leaking state even when the plain
      // gradient has been balanced away; pick the most promising midpoints
      const Vec ya = nu.atoms().col(0);  // ascending by construction
      std::vector<std::pair<double, double>> gain;  // (delta, c)
      for (int j = 0; j + 1 < m; ++j) {
        const double c = 0.5 * (ya(j) + ya(j + 1));
        double delta = 0.0;
        for (int j2 = 0; j2 < m; ++j2)
          delta += cur.grad(j2) * std::fabs(ya(j2) - c);
        gain.emplace_back(delta, c);
      }
      std::sort(gain.begin(), gain.end());
      std::vector<double> kinks;
      for (int t2 = 0; t2 < std::min<int>(3, static_cast<int>(gain.size()));
           ++t2) {
        if (gain[t2].first < -fp_slack) kinks.push_back(gain[t2].second);
      }
      if (kinks.empty()) return;
      double best_dual = cur.dual;
      double best_proxy = gap_proxy(psi, cur);
      bool found = false;
      Vec best_proj;
      PwaPotential best_env = env;
      EvalOut best_et = cur;
      for (double c : kinks) {
        Vec u = (ya.array() - c).abs();
        double t3 = 0.25;
        for (int k = 0; k < 24; ++k, t3 *= 4.0) {
          Vec proj = psi + t3 * u;  // sum of convex stays convex
          EvalOut et;
          try {
            et = eval_core(proj, PwaPotential(nu.atoms(), proj, true), mu, nu,
                           config.mc, &warm);
          } catch (const NonConvergenceError&) {
            break;
          }
          const bool lower = et.dual < best_dual - fp_slack;
          const bool proxy_gain = et.dual <= cur.dual + fp_slack &&
                                  gap_proxy(proj, et) < 0.7 * best_proxy;
          if (lower || proxy_gain) {
            best_dual = std::min(best_dual, et.dual);
            best_proxy = std::min(best_proxy, gap_proxy(proj, et));
            best_proj = proj;
            best_env = PwaPotential(nu.atoms(), proj, true);
            best_et = et;
            found = true;
          }
        }
      }
      if (found) {
        psi_new = best_proj;
        env_new = best_env;
        enew = best_et;
        accepted = true;
      }
    };

    if (iter > 0 && iter % 64 == 0) {
      if (iter % 128 == 0) kink_sweep();
      if (!accepted) valley_sweep();
    }
    if (!accepted) try_direction(d, dg);
    if (!accepted && !mem_s.empty()) {
      // quasi-Newton direction rejected; restart from steepest descent
      mem_s.clear();
      mem_y.clear();
      d = -cur.grad;
      dg = -cur.grad.squaredNorm();
      try_direction(d, dg);
    }
    if (!accepted) valley_sweep();
    if (!accepted) kink_sweep();
    if (!accepted) {
      if (std::getenv("SBMOT_LS_DEBUG")) {
        std::fprintf(stderr, "stall@%d ginf=%.3e D=%.17g\n", iter, gnorm,
                     cur.dual);
        double a2 = 1.0;
        for (int k = 0; k < 24; ++k, a2 *= 0.5) {
          Vec trial = psi - a2 * cur.grad;
          PwaPotential env_t =
              lower_convex_envelope(PwaPotential(nu.atoms(), trial));
          Vec proj = env_t.values();
          EvalOut et = eval_core(proj, env_t, mu, nu, config.mc, &warm);
          std::fprintf(stderr,
                       "  a=%9.3g move=%.2e dD=%+.3e gratio=%.6f\n", a2,
                       (proj - psi).cwiseAbs().maxCoeff(),
                       et.dual - cur.dual,
                       et.grad.cwiseAbs().maxCoeff() / gnorm);
        }
      }
      diag = "line search stalled at iteration " + std::to_string(iter) +
             ", gradient norm " + fmt17(gnorm);
      break;
    }

    Vec s = psi_new - psi;
    Vec yv = enew.grad - cur.grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      mem_s.push_back(std::move(s));
      mem_y.push_back(std::move(yv));
      if (static_cast<int>(mem_s.size()) > mem) {
        mem_s.pop_front();
        mem_y.pop_front();
      }
    }
    psi = std::move(psi_new);
    env = env_new;
    cur = enew;
    warm = cur.bass;
    record(iter + 1, false);
  }

  record(iter, true);
  trace.converged = converged;
  trace.iterations = iter;
  trace.s_partial_sum = s_sum;
  trace.diagnostics = diag;

  Mat mass = cur.rows;
  for (int i = 0; i < mu.size(); ++i) mass.row(i) *= mu.weights()(i);
  DualState st(PwaPotential(nu.atoms(), psi, true),
               Coupling(mu.size(), m, mass));
  st.dual_value = cur.dual;
  st.gradient = cur.grad;
  st.bass_points = cur.bass;
  st.primal_value = induced_primal(cur.rows, mu, nu, config.mc);
  st.gap = st.dual_value - st.primal_value;
  st.mc_error = cur.mc_error;
  return SolveResult{std::move(trace), std::move(st)};
}

double primal_from_coupling(const Coupling& pi, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const McConfig& mc) {
  if (pi.rows() != mu.size() || pi.cols() != nu.size())
    throw InvalidInputError("primal_from_coupling: shape mismatch");
  if (pi.marginal_defect(mu, nu) > 1e-6)
    throw InvalidInputError("primal_from_coupling: marginals off by more than 1e-6");
  if (pi.barycenter_defect(mu, nu) > 1e-6)
    throw InvalidInputError(
        "primal_from_coupling: barycenter defect above 1e-6");
  double p = 0.0;
  for (int i = 0; i < mu.size(); ++i)
    p += mu.weights()(i) *
         mcov_row(nu.atoms(), pi.conditional_row(i), mc_for_atom(mc, i));
  return p;
}

std::string trace_to_jsonl(const SolveTrace& trace) {
  std::ostringstream os;
  for (const auto& r : trace.records) {
    os << "{\"iter\":" << r.iter << ",\"dual\":" << fmt17(r.dual)
       << ",\"primal\":" << fmt17(r.primal) << ",\"gap\":" << fmt17(r.gap)
       << ",\"grad_norm\":" << fmt17(r.grad_norm)
       << ",\"S_partial_sum\":" << fmt17(r.s_partial_sum) << "}\n";
  }
  return os.str();
}

}  // namespace sbm
