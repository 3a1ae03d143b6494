#include "sbmot/examples.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"

namespace sbm::examples {

namespace {

// equal-mass core with geometrically tapered outermost bins
Vec tapered_bin_masses(int n, int depth, double ratio) {
  if (depth < 1 || n <= 2 * depth)
    throw InvalidInputError("tapered_bin_masses: bad taper");
  Vec w(n);
  int idx = 0;
  for (int k = depth; k >= 1; --k) w(idx++) = std::pow(ratio, k);
  for (int k = 0; k < n - 2 * depth; ++k) w(idx++) = 1.0;
  for (int k = 1; k <= depth; ++k) w(idx++) = std::pow(ratio, k);
  return w / w.sum();
}

double simpson(const std::function<double(double)>& f, double a, double b,
               int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i)
    s += f(a + i * h) * ((i % 2) ? 4.0 : 2.0);
  return s * h / 3.0;
}

// radial density of |rho e + Z|: r exp(-(r^2+rho^2)/2) I0(rho r)
double radial_pdf(double r, double rho) {
  return r * std::exp(-0.5 * (r * r + rho * rho)) *
         std::cyl_bessel_i(0.0, rho * r);
}

// integrand of E[h(|X|) X_2/|X|]: h(r) I1(rho r) exp(-(r^2+rho^2)/2) r
double dir_weight(double r, double rho) {
  return r * std::exp(-0.5 * (r * r + rho * rho)) *
         std::cyl_bessel_i(1.0, rho * r);
}

}  // namespace

DiscreteMeasure tapered_lognormal(int n, int taper_depth, double taper_ratio,
                                  bool negative) {
  const Vec w = tapered_bin_masses(n, taper_depth, taper_ratio);
  Mat atoms(n, 1);
  double cum = 0.0;
  double mean = 0.0;
  for (int k = 0; k < n; ++k) {
    const double mid = cum + 0.5 * w(k);
    cum += w(k);
    atoms(k, 0) = std::exp(norm_quantile(mid) - 0.5);
    mean += w(k) * atoms(k, 0);
  }
  atoms /= mean;  // unit barycenter, so the pair below touches exactly at 0
  if (negative) atoms = -atoms;
  return DiscreteMeasure(1, atoms, w);
}

double ex61_analytic_psi(double y) {
  if (y > 0.0) return y * (std::log(y) - 0.5);
  if (y < 0.0) return -y * (std::log(-y) - 0.5);
  return 0.0;
}

Vec second_differences(const Vec& y_sorted, const Vec& values) {
  const int n = static_cast<int>(y_sorted.size());
  Vec out(std::max(0, n - 2));
  for (int k = 0; k + 2 < n + 0; ++k) {
    const double s1 =
        (values(k + 1) - values(k)) / (y_sorted(k + 1) - y_sorted(k));
    const double s2 =
        (values(k + 2) - values(k + 1)) / (y_sorted(k + 2) - y_sorted(k + 1));
    out(k) = s2 - s1;
  }
  return out;
}

Ex61Result run_ex61(const Ex61Config& cfg) {
  DiscreteMeasure pos =
      tapered_lognormal(cfg.n_per_side, cfg.taper_depth, cfg.taper_ratio, false);
  DiscreteMeasure neg =
      tapered_lognormal(cfg.n_per_side, cfg.taper_depth, cfg.taper_ratio, true);
  Mat atoms(2 * cfg.n_per_side, 1);
  Vec weights(2 * cfg.n_per_side);
  atoms << neg.atoms(), pos.atoms();
  weights << 0.5 * neg.weights(), 0.5 * pos.weights();
  DiscreteMeasure nu(1, atoms, weights);
  Mat mx(2, 1);
  mx << -1.0, 1.0;
  DiscreteMeasure mu(1, mx, Vec::Constant(2, 0.5));

  DecomposeResult dec = decompose(mu, nu, cfg.decompose);
  Ex61Result res(mu, nu, std::move(dec));
  for (const auto& c : res.dec.paving.components) {
    if (!c.bass) continue;
    res.component_primal.push_back(c.bass->local_primal);
    const Mat& ya = c.nu_local->atoms();
    const int m = c.nu_local->size();
    Vec y(m), fit(m), ana(m);
    for (int j = 0; j < m; ++j) {
      y(j) = ya(j, 0);
      fit(j) = c.bass->psi_values(j);
      ana(j) = ex61_analytic_psi(ya(j, 0));
    }
    // nu_local atoms are sorted by construction of DiscreteMeasure
    const Vec df = second_differences(y, fit);
    const Vec da = second_differences(y, ana);
    if (df.size() > 0)
      res.max_secdiff_error =
          std::max(res.max_secdiff_error, (df - da).cwiseAbs().maxCoeff());
  }
  return res;
}

DiscreteMeasure circle_measure(int n, double r, double phase) {
  return quantile_discretize("circle", n, r, phase);
}

DiscreteMeasure two_ring_measure(int n, double r_inner, double r_outer,
                                 double phase) {
  Mat atoms(2 * n, 2);
  for (int k = 0; k < n; ++k) {
    const double th = phase + 2.0 * M_PI * k / n;
    atoms(k, 0) = r_inner * std::cos(th);
    atoms(k, 1) = r_inner * std::sin(th);
    atoms(n + k, 0) = r_outer * std::cos(th);
    atoms(n + k, 1) = r_outer * std::sin(th);
  }
  return DiscreteMeasure(2, atoms, Vec::Constant(2 * n, 0.5 / n));
}

double circles_k(double rho) {
  const double hi = rho + 12.0;
  auto pdf = [rho](double r) { return radial_pdf(r, rho); };
  const double total = simpson(pdf, 0.0, hi, 4000);
  double lo = 0.0, up = hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + up);
    const double c = simpson(pdf, 0.0, mid, 2000) / total;
    if (c < 0.5)
      lo = mid;
    else
      up = mid;
  }
  return 0.5 * (lo + up);
}

double circles_R(double rho) {
  const double k = circles_k(rho);
  const double hi = rho + 12.0;
  auto w = [rho](double r) { return dir_weight(r, rho); };
  const double A = simpson(w, 0.0, k, 4000);
  const double B = simpson(w, k, hi, 4000);
  return (1.0 - 0.5 * A) / B;
}

void circles_kR_mc(double rho, int samples, std::uint64_t seed, double* k_out,
                   double* R_out) {
  RngStream rng(seed, 0x63697263u);
  std::vector<double> norms(samples);
  std::vector<double> cosines(samples);
  for (int i = 0; i < samples; ++i) {
    const double x0 = rng.normal();
    const double x1 = rho + rng.normal();
    const double r = std::hypot(x0, x1);
    norms[i] = r;
    cosines[i] = x1 / r;
  }
  std::vector<double> sorted = norms;
  std::nth_element(sorted.begin(), sorted.begin() + samples / 2, sorted.end());
  const double k = sorted[samples / 2];
  double A = 0.0, B = 0.0;
  for (int i = 0; i < samples; ++i) {
    if (norms[i] < k)
      A += cosines[i];
    else
      B += cosines[i];
  }
  A /= samples;
  B /= samples;
  if (k_out) *k_out = k;
  if (R_out) *R_out = (1.0 - 0.5 * A) / B;
}

CirclesResult run_circles(const CirclesConfig& cfg) {
  CirclesResult res;
  for (double rho : cfg.rho_grid) {
    res.rho.push_back(rho);
    res.k_values.push_back(circles_k(rho));
    res.r_values.push_back(circles_R(rho));
    double km = 0.0, rm = 0.0;
    circles_kR_mc(rho, cfg.mc_samples, cfg.seed, &km, &rm);
    res.k_mc.push_back(km);
    res.r_mc.push_back(rm);
  }

  const int n = cfg.n_angles;
  DiscreteMeasure mu = circle_measure(n, 1.0);
  DiscreteMeasure nu_thresh = two_ring_measure(n, 0.5, 1.5);
  DiscreteMeasure nu_below = two_ring_measure(n, 0.5, 1.4);
  res.feasible_at_threshold = check_convex_order(mu, nu_thresh).ordered;
  res.feasible_below = check_convex_order(mu, nu_below).ordered;

  std::ostringstream summary;

  if (cfg.run_decompose_threshold) {
    // R = 3/2 aligned: every mu-atom is wedged on its own radial segment
    DecomposeConfig dc;  // all component solves are collinear, hence exact
    dc.component_gap_tol = 1e-6;
    DecomposeResult dec = decompose(mu, nu_thresh, dc);
    res.components_at_threshold =
        static_cast<int>(dec.paving.components.size());
    res.threshold_cells_radial = true;
    for (const auto& c : dec.paving.components) {
      if (c.cell.rank() != 1 || c.mu_indices.size() != 1 ||
          c.nu_indices.size() != 2) {
        res.threshold_cells_radial = false;
        continue;
      }
      const Vec x = mu.atom(c.mu_indices[0]);
      bool seen_half = false, seen_outer = false;
      for (int j : c.nu_indices) {
        const Vec y = nu_thresh.atom(j);
        if ((y - 0.5 * x).norm() < 1e-9) seen_half = true;
        if ((y - 1.5 * x).norm() < 1e-9) seen_outer = true;
      }
      if (!(seen_half && seen_outer)) res.threshold_cells_radial = false;
    }
    // simulate each fitted segment martingale and verify the marginals
    res.sim_pass = true;
    int comp_id = 0;
    for (const auto& c : dec.paving.components) {
      SimulateConfig sc;
      sc.n_paths = cfg.sim_paths;
      sc.steps = 32;
      sc.seed = cfg.seed + 31ull * comp_id++;
      PathBundle pb = simulate(*c.bass->model, sc);
      const auto term = verify_terminal_marginal(pb, *c.nu_local);
      const auto init = verify_initial_marginal(pb, *c.mu_local);
      if (!term.pass || !init.pass) res.sim_pass = false;
    }
    summary << "threshold paving: " << res.components_at_threshold
            << " components, radial cells "
            << (res.threshold_cells_radial ? "ok" : "WRONG") << ", sim "
            << (res.sim_pass ? "pass" : "FAIL") << "; ";
  }

  if (cfg.run_decompose_above) {
    const double r_above = res.r_values.back();
    DiscreteMeasure nu_above = two_ring_measure(n, 0.5, r_above);
    DecomposeConfig dc = cfg.decompose_above;
    DecomposeResult dec = decompose(mu, nu_above, dc);
    res.components_above = static_cast<int>(dec.paving.components.size());
    summary << "R=" << r_above << " paving: " << res.components_above
            << " component(s)";
  }

  res.summary = summary.str();
  return res;
}

}  // namespace sbm::examples
