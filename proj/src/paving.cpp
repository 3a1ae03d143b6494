#include "sbmot/paving.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "sbmot/errors.hpp"
#include "sbmot/motlp.hpp"
#include "sbmot/serialize.hpp"
#include "sbmot/simplex.hpp"

namespace sbm {

namespace {

ConvexCell make_cell(const Mat& nu_atoms, const std::vector<int>& nu_idx,
                     int dim) {
  ConvexCell cell;
  cell.dim = dim;
  cell.points.resize(static_cast<int>(nu_idx.size()), dim);
  for (int k = 0; k < static_cast<int>(nu_idx.size()); ++k)
    cell.points.row(k) = nu_atoms.row(nu_idx[k]);
  return cell;
}

// Strict (relative-interior) intersection of two polytopes given by their
// generating points, as an LP: maximize t subject to the two convex
// combinations agreeing, with all coefficients >= t.
bool ri_intersect_lp(const Mat& a, const Mat& b, double tol) {
  const int na = static_cast<int>(a.rows());
  const int nb = static_cast<int>(b.rows());
  const int d = static_cast<int>(a.cols());
  // variables: lambda (na), sigma (nb), t, u (na), w (nb)
  const int nv = na + nb + 1 + na + nb;
  const int nr = d + 2 + na + nb;
  Mat A = Mat::Zero(nr, nv);
  Vec rhs = Vec::Zero(nr);
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < na; ++i) A(k, i) = a(i, k);
    for (int j = 0; j < nb; ++j) A(k, na + j) = -b(j, k);
  }
  for (int i = 0; i < na; ++i) A(d, i) = 1.0;
  rhs(d) = 1.0;
  for (int j = 0; j < nb; ++j) A(d + 1, na + j) = 1.0;
  rhs(d + 1) = 1.0;
  const int tcol = na + nb;
  for (int i = 0; i < na; ++i) {
    A(d + 2 + i, i) = 1.0;
    A(d + 2 + i, tcol) = -1.0;
    A(d + 2 + i, tcol + 1 + i) = -1.0;
  }
  for (int j = 0; j < nb; ++j) {
    A(d + 2 + na + j, na + j) = 1.0;
    A(d + 2 + na + j, tcol) = -1.0;
    A(d + 2 + na + j, tcol + 1 + na + j) = -1.0;
  }
  Vec c = Vec::Zero(nv);
  c(tcol) = -1.0;
  LpResult lp = solve_lp(A, rhs, c);
  if (lp.status == LpStatus::infeasible) return false;
  if (lp.status != LpStatus::optimal)
    throw NonConvergenceError("ri_intersect_lp: simplex limit");
  return -lp.objective > tol;
}

struct Builder {
  // working state of a paving under construction
  std::vector<std::vector<int>> comp_mu;
  std::vector<std::set<int>> comp_nu;
  const DiscreteMeasure* mu;
  const DiscreteMeasure* nu;

  ConvexCell cell_of(int c) const {
    std::vector<int> idx(comp_nu[c].begin(), comp_nu[c].end());
    return make_cell(nu->atoms(), idx, nu->dim());
  }

  void merge(int into, int from) {
    comp_mu[into].insert(comp_mu[into].end(), comp_mu[from].begin(),
                         comp_mu[from].end());
    comp_nu[into].insert(comp_nu[from].begin(), comp_nu[from].end());
    comp_mu.erase(comp_mu.begin() + from);
    comp_nu.erase(comp_nu.begin() + from);
  }

  // Prop 3.3 fixpoint: merge when a mu-atom of one component lies in the
  // other's cell, or the cells' relative interiors meet.
  void merge_to_fixpoint() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t i = 0; i < comp_mu.size() && !changed; ++i) {
        ConvexCell ci = cell_of(static_cast<int>(i));
        for (size_t j = i + 1; j < comp_mu.size() && !changed; ++j) {
          ConvexCell cj = cell_of(static_cast<int>(j));
          bool touch = false;
          for (int mi : comp_mu[j])
            if (ci.ri_contains(mu->atom(mi))) touch = true;
          for (int mi : comp_mu[i])
            if (cj.ri_contains(mu->atom(mi))) touch = true;
          if (!touch) touch = ci.ri_intersects(cj);
          if (touch) {
            merge(static_cast<int>(i), static_cast<int>(j));
            changed = true;
          }
        }
      }
    }
  }

  PavingResult finish(const std::string& method) const {
    PavingResult out;
    out.method = method;
    // deterministic order: by smallest mu index
    std::vector<int> order(comp_mu.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::vector<int>> sorted_mu = comp_mu;
    for (auto& v : sorted_mu) std::sort(v.begin(), v.end());
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return sorted_mu[a][0] < sorted_mu[b][0];
    });
    for (int c : order) {
      PavingComponent pc;
      pc.mu_indices = sorted_mu[c];
      pc.nu_indices.assign(comp_nu[c].begin(), comp_nu[c].end());
      pc.cell = make_cell(nu->atoms(), pc.nu_indices, nu->dim());
      double kappa = 0.0;
      for (int i : pc.mu_indices) kappa += mu->weights()(i);
      pc.kappa_weight = kappa;
      Mat ma(static_cast<int>(pc.mu_indices.size()), mu->dim());
      Vec mw(static_cast<int>(pc.mu_indices.size()));
      for (int k = 0; k < static_cast<int>(pc.mu_indices.size()); ++k) {
        ma.row(k) = mu->atoms().row(pc.mu_indices[k]);
        mw(k) = mu->weights()(pc.mu_indices[k]) / kappa;
      }
      pc.mu_local = DiscreteMeasure(mu->dim(), ma, mw);
      // provisional local target: the normalized restriction; disintegrate
      // replaces it with the coupling-consistent split
      Mat na(static_cast<int>(pc.nu_indices.size()), nu->dim());
      Vec nw(static_cast<int>(pc.nu_indices.size()));
      double tot = 0.0;
      for (int k = 0; k < static_cast<int>(pc.nu_indices.size()); ++k)
        tot += nu->weights()(pc.nu_indices[k]);
      for (int k = 0; k < static_cast<int>(pc.nu_indices.size()); ++k) {
        na.row(k) = nu->atoms().row(pc.nu_indices[k]);
        nw(k) = nu->weights()(pc.nu_indices[k]) / tot;
      }
      pc.nu_local = DiscreteMeasure(nu->dim(), na, nw);
      out.components.push_back(std::move(pc));
    }
    return out;
  }
};

}  // namespace

int ConvexCell::rank() const {
  if (points.rows() == 0) return -1;
  if (dim == 1) {
    const double span = points.col(0).maxCoeff() - points.col(0).minCoeff();
    return span > 1e-12 ? 1 : 0;
  }
  return affine_rank_2d(points);
}

bool ConvexCell::ri_contains(const Vec& p, double tol) const {
  return in_relative_interior(points, p, tol);
}

bool ConvexCell::ri_intersects(const ConvexCell& other, double tol) const {
  if (dim == 1) {
    const double lo1 = points.col(0).minCoeff(), hi1 = points.col(0).maxCoeff();
    const double lo2 = other.points.col(0).minCoeff(),
                 hi2 = other.points.col(0).maxCoeff();
    const bool p1 = hi1 - lo1 <= tol, p2 = hi2 - lo2 <= tol;
    if (p1 && p2) return std::fabs(lo1 - lo2) <= tol;
    if (p1) return lo1 > lo2 + tol && lo1 < hi2 - tol;
    if (p2) return lo2 > lo1 + tol && lo2 < hi1 - tol;
    return std::max(lo1, lo2) < std::min(hi1, hi2) - tol;
  }
  return ri_intersect_lp(points, other.points, 1e-9);
}

std::vector<std::vector<int>> PavingResult::mu_partition() const {
  std::vector<std::vector<int>> parts;
  for (const auto& c : components) {
    auto v = c.mu_indices;
    std::sort(v.begin(), v.end());
    parts.push_back(std::move(v));
  }
  std::sort(parts.begin(), parts.end());
  return parts;
}

PavingResult pave_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const auto reach = motlp::reachability_matrix(mu, nu);
  Builder b;
  b.mu = &mu;
  b.nu = &nu;
  for (int i = 0; i < mu.size(); ++i) {
    b.comp_mu.push_back({i});
    std::set<int> s;
    for (int j = 0; j < nu.size(); ++j)
      if (reach[i][j]) s.insert(j);
    if (s.empty())
      throw NonConvergenceError("pave_lp: empty reachable set");
    b.comp_nu.push_back(std::move(s));
  }
  b.merge_to_fixpoint();
  return b.finish("lp");
}

PavingResult pave_potential_1d(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu) {
  if (mu.dim() != 1 || nu.dim() != 1)
    throw InvalidInputError("pave_potential_1d: 1D only");
  std::vector<double> grid;
  for (int i = 0; i < mu.size(); ++i) grid.push_back(mu.atoms()(i, 0));
  for (int j = 0; j < nu.size(); ++j) grid.push_back(nu.atoms()(j, 0));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double scale = 1.0;
  for (double t : grid) scale = std::max(scale, std::fabs(t));
  const double tol = 1e-9 * scale;

  auto delta = [&](double t) {
    return potential_function(nu, t) - potential_function(mu, t);
  };
  // contact points on the grid; the support endpoints are always contacts
  std::vector<double> contacts;
  for (double t : grid)
    if (delta(t) <= tol) contacts.push_back(t);
  const double ylo = nu.atoms().col(0).minCoeff();
  const double yhi = nu.atoms().col(0).maxCoeff();

  Builder b;
  b.mu = &mu;
  b.nu = &nu;
  std::vector<std::pair<double, double>> intervals;  // open components
  for (size_t k = 0; k + 1 < contacts.size(); ++k) {
    const double lo = contacts[k], hi = contacts[k + 1];
    bool positive_inside = false;
    for (double t : grid)
      if (t > lo + tol && t < hi - tol && delta(t) > tol)
        positive_inside = true;
    // no grid point strictly inside: delta is linear and zero at both ends
    if (positive_inside) intervals.emplace_back(lo, hi);
  }
  std::vector<char> assigned(mu.size(), 0);
  for (const auto& [lo, hi] : intervals) {
    std::vector<int> mus, nus;
    for (int i = 0; i < mu.size(); ++i) {
      const double x = mu.atoms()(i, 0);
      if (x > lo + tol && x < hi - tol && delta(x) > tol) {
        mus.push_back(i);
        assigned[i] = 1;
      }
    }
    for (int j = 0; j < nu.size(); ++j) {
      const double y = nu.atoms()(j, 0);
      if (y >= lo - tol && y <= hi + tol) nus.push_back(j);
    }
    if (mus.empty()) continue;  // an interval of {u_mu < u_nu} with no source
    b.comp_mu.push_back(mus);
    b.comp_nu.emplace_back(nus.begin(), nus.end());
  }
  for (int i = 0; i < mu.size(); ++i) {
    if (assigned[i]) continue;
    const double x = mu.atoms()(i, 0);
    (void)ylo;
    (void)yhi;
    std::set<int> nus;
    for (int j = 0; j < nu.size(); ++j)
      if (std::fabs(nu.atoms()(j, 0) - x) <= tol) nus.insert(j);
    if (nus.empty())
      throw ConvexOrderError(
          "pave_potential_1d: stuck mu-atom without matching nu-atom");
    b.comp_mu.push_back({i});
    b.comp_nu.push_back(std::move(nus));
  }
  return b.finish("potential-1d");
}

PavingResult pave_dual_divergence(const SolveTrace& trace,
                                  const DiscreteMeasure& mu,
                                  const DiscreteMeasure& nu,
                                  const DivergenceConfig& cfg,
                                  const PavingResult* lp_reference,
                                  Mat* sup_stats) {
  const int K = static_cast<int>(trace.records.size());
  if (K < cfg.min_records)
    throw InvalidInputError("pave_dual_divergence: trace too short");
  const int n = mu.size(), m = nu.size();
  const int d = nu.dim();

  // ---- recession probing -------------------------------------------------
  // The solver stops tilting once it is machine-converged, so the raw trace
  // cannot separate atoms adjacent to a cell boundary. Extend the sequence
  // with one-kink tilts u(y) = |<e,y> - c| that keep the dual value flat
  // within a vanishing budget. Candidates are pre-filtered by the induced
  // coupling: a separating kink carries (almost) no crossing mass.
  const Vec psi_final = trace.records.back().psi;
  DualState final_state =
      eval_dual(PwaPotential(nu.atoms(), psi_final), mu, nu, cfg.mc);
  const double d_star = final_state.dual_value;
  const double slack =
      cfg.flat_slack > 0.0
          ? cfg.flat_slack
          : std::max(1e-8 * std::max(1.0, std::fabs(d_star)),
                     3.0 * final_state.mc_error);
  const Mat& mass = final_state.induced.mass();

  struct Probe {
    Vec normal;  // unit direction e
    double offset;
  };
  std::vector<Probe> candidates;
  auto cross_mass = [&](const Vec& e, double c) {
    double cross = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sx = mu.atom(i).dot(e) - c;
      for (int j = 0; j < m; ++j) {
        const double sy = nu.atom(j).dot(e) - c;
        if (sx * sy < 0.0) cross += mass(i, j);
      }
    }
    return cross;
  };
  auto add_candidates_for_direction = [&](const Vec& e) {
    std::vector<double> proj(m);
    for (int j = 0; j < m; ++j) proj[j] = nu.atom(j).dot(e);
    std::sort(proj.begin(), proj.end());
    for (int j = 0; j + 1 < m; ++j) {
      if (proj[j + 1] - proj[j] < 1e-12) continue;
      const double c = 0.5 * (proj[j] + proj[j + 1]);
      if (cross_mass(e, c) <= 1e-6)
        candidates.push_back({e, c});
      if (static_cast<int>(candidates.size()) >= cfg.max_probes) return;
    }
  };
  if (d == 1) {
    add_candidates_for_direction(Vec::Ones(1));
  } else {
    for (int r = 0; r < 16; ++r) {
      Vec e(2);
      const double th = M_PI * r / 16.0;
      e << std::cos(th), std::sin(th);
      add_candidates_for_direction(e);
      if (static_cast<int>(candidates.size()) >= cfg.max_probes) break;
    }
  }

  std::vector<Vec> extensions;
  for (const Probe& pr : candidates) {
    Vec u(m);
    for (int j = 0; j < m; ++j)
      u(j) = std::fabs(nu.atom(j).dot(pr.normal) - pr.offset);
    double flat_t = 0.0;
    for (double t = 4.0; t <= 2e7; t *= 4.0) {
      Vec cand = psi_final + t * u;
      double dv;
      try {
        dv = eval_dual(PwaPotential(nu.atoms(), cand), mu, nu, cfg.mc)
                 .dual_value;
      } catch (const Error&) {
        break;
      }
      if (dv <= d_star + slack)
        flat_t = t;
      else
        break;
    }
    if (flat_t >= 16.0) extensions.push_back(psi_final + flat_t * u);
  }

  // ---- anchored sup statistics over the settled trace + extensions -------
  Mat sup = Mat::Constant(n, m, -std::numeric_limits<double>::infinity());
  auto absorb = [&](const Vec& psi_vals, double eps) {
    PwaPotential p(nu.atoms(), psi_vals);
    for (int i = 0; i < n; ++i) {
      NormalizedPotential np = normalize_at(p, mu.atom(i), eps);
      const Vec vals = np.normalized_values();
      for (int j = 0; j < m; ++j) sup(i, j) = std::max(sup(i, j), vals(j));
    }
  };
  for (int k = K / 2; k < K; ++k)
    absorb(trace.records[k].psi,
           std::max(1e-9, 1.0 / ((k + 1.0) * (k + 1.0))));
  for (const Vec& ext : extensions) absorb(ext, 1e-9);
  if (sup_stats) *sup_stats = sup;

  auto median_of = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  std::vector<double> s_ref;
  if (lp_reference) {
    for (const auto& c : lp_reference->components)
      for (int i : c.mu_indices)
        for (int j : c.nu_indices) s_ref.push_back(sup(i, j));
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) s_ref.push_back(sup(i, j));
  }
  const double M = cfg.threshold > 0.0
                       ? cfg.threshold
                       : std::max(cfg.threshold_factor * median_of(s_ref),
                                  1e-6);

  Builder b;
  b.mu = &mu;
  b.nu = &nu;
  for (int i = 0; i < n; ++i) {
    std::set<int> s;
    for (int j = 0; j < m; ++j)
      if (sup(i, j) <= M) s.insert(j);
    if (s.empty())
      throw NonConvergenceError(
          "pave_dual_divergence: no nu-atom classified reachable");
    b.comp_mu.push_back({i});
    b.comp_nu.push_back(std::move(s));
  }
  b.merge_to_fixpoint();
  return b.finish("dual-divergence");
}

PavingResult disintegrate(const PavingResult& paving, const Coupling& pi,
                          const DiscreteMeasure& mu,
                          const DiscreteMeasure& nu) {
  PavingResult out = paving;
  double total_leak = 0.0;
  for (auto& c : out.components) {
    std::vector<char> inside(nu.size(), 0);
    for (int j : c.nu_indices) inside[j] = 1;
    Vec colw = Vec::Zero(nu.size());
    for (int i : c.mu_indices) colw += pi.mass().row(i).transpose();
    double leak = 0.0;
    for (int j = 0; j < nu.size(); ++j)
      if (!inside[j]) leak += colw(j);
    total_leak += leak;
  }
  if (total_leak > 1e-8)
    throw CrossLeakError("disintegrate: coupling leaks " +
                         fmt17(total_leak) +
                         " across components (dual not converged enough)");
  for (auto& c : out.components) {
    Vec colw = Vec::Zero(nu.size());
    for (int i : c.mu_indices) colw += pi.mass().row(i).transpose();
    Mat na(static_cast<int>(c.nu_indices.size()), nu.dim());
    Vec nw(static_cast<int>(c.nu_indices.size()));
    for (int k = 0; k < static_cast<int>(c.nu_indices.size()); ++k) {
      na.row(k) = nu.atoms().row(c.nu_indices[k]);
      nw(k) = colw(c.nu_indices[k]);
    }
    const double tot = nw.sum();
    if (tot <= 0.0)
      throw CrossLeakError("disintegrate: component received no mass");
    c.nu_local = DiscreteMeasure(nu.dim(), na, nw / tot);
    double kappa = 0.0;
    for (int i : c.mu_indices) kappa += mu.weights()(i);
    c.kappa_weight = kappa;
  }
  return out;
}

DecomposeResult decompose(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                          const DecomposeConfig& config) {
  auto order = check_convex_order(mu, nu);
  if (!order.ordered)
    throw ConvexOrderError("decompose: marginals are not in convex order");

  SolveResult solved = solve_dual(mu, nu, config.global);
  PavingResult lp = pave_lp(mu, nu);
  PavingResult div = pave_dual_divergence(solved.trace, mu, nu,
                                          config.divergence, &lp);
  const bool agree = lp.mu_partition() == div.mu_partition();
  std::ostringstream report;
  report << "lp components: " << lp.components.size()
         << ", dual-divergence components: " << div.components.size()
         << ", mu-partitions " << (agree ? "agree" : "DISAGREE");
  lp.agreement_report = report.str();
  div.agreement_report = report.str();
  if (config.check_agreement && !agree)
    throw NonConvergenceError("decompose: paving method disagreement (" +
                              report.str() + ")");

  PavingResult paving = disintegrate(lp, solved.state.induced, mu, nu);
  paving.agreement_report = report.str();

  if (config.fit_bass) {
    int comp_index = 0;
    for (auto& c : paving.components) {
      const DiscreteMeasure& ml = *c.mu_local;
      const DiscreteMeasure& nl = *c.nu_local;
      BassFit fit;
      if (nl.size() == 1) {
        // point component: the martingale is constant
        Mat a0(1, nu.dim());
        a0.setZero();
        fit.psi_values = Vec::Zero(1);
        fit.model = BassModel{
            PwaPotential(nl.atoms(), Vec::Zero(1), true),
            DiscreteMeasure(nu.dim(), a0, Vec::Ones(1)), nu.dim()};
        fit.local_dual = fit.local_primal = fit.local_gap = 0.0;
        fit.irreducible = true;
      } else {
        DualConfig local = config.local;
        local.mc.seed += 7919ull * static_cast<unsigned long long>(++comp_index);
        SolveResult rs = solve_dual(ml, nl, local);
        fit.psi_values = rs.state.psi.values();
        fit.local_dual = rs.state.dual_value;
        fit.local_primal = rs.state.primal_value;
        fit.local_gap = rs.state.gap;
        fit.mc_error = rs.state.mc_error;
        if (!(std::fabs(fit.local_gap) <=
              config.component_gap_tol + fit.mc_error))
          throw NonConvergenceError(
              "decompose: component dual solve above gap tolerance");
        fit.model = BassModel{
            PwaPotential(nl.atoms(), rs.state.psi.values(), true),
            DiscreteMeasure(nu.dim(), rs.state.bass_points,
                            ml.weights()),
            nu.dim()};
        const auto reach = motlp::reachability_matrix(ml, nl);
        fit.irreducible = true;
        for (const auto& row : reach)
          for (char r : row)
            if (!r) fit.irreducible = false;
      }
      c.bass = std::move(fit);
    }
  }

  DecomposeResult out(std::move(paving), std::move(solved.trace),
                      std::move(solved.state), std::move(div));
  out.methods_agree = agree;
  return out;
}

std::string paving_to_json(const PavingResult& p) {
  std::ostringstream os;
  os << "{\"method\":\"" << p.method << "\",\"agreement\":\""
     << p.agreement_report << "\",\"components\":[";
  for (size_t c = 0; c < p.components.size(); ++c) {
    const auto& pc = p.components[c];
    if (c) os << ",";
    os << "{\"kappa\":" << fmt17(pc.kappa_weight) << ",\"cell_rank\":"
       << pc.cell.rank() << ",\"cell_points\":[";
    for (int i = 0; i < pc.cell.points.rows(); ++i) {
      if (i) os << ",";
      os << "[";
      for (int k = 0; k < pc.cell.points.cols(); ++k) {
        if (k) os << ",";
        os << fmt17(pc.cell.points(i, k));
      }
      os << "]";
    }
    os << "],\"mu_indices\":[";
    for (size_t i = 0; i < pc.mu_indices.size(); ++i)
      os << (i ? "," : "") << pc.mu_indices[i];
    os << "],\"nu_indices\":[";
    for (size_t i = 0; i < pc.nu_indices.size(); ++i)
      os << (i ? "," : "") << pc.nu_indices[i];
    os << "]";
    if (pc.mu_local) os << ",\"mu_local\":" << measure_to_json(*pc.mu_local);
    if (pc.nu_local) os << ",\"nu_local\":" << measure_to_json(*pc.nu_local);
    if (pc.bass) {
      os << ",\"bass\":{\"psi_values\":[";
      for (int i = 0; i < pc.bass->psi_values.size(); ++i)
        os << (i ? "," : "") << fmt17(pc.bass->psi_values(i));
      os << "],\"alpha\":" << measure_to_json(pc.bass->model->alpha)
         << ",\"local_dual\":" << fmt17(pc.bass->local_dual)
         << ",\"local_primal\":" << fmt17(pc.bass->local_primal)
         << ",\"local_gap\":" << fmt17(pc.bass->local_gap)
         << ",\"irreducible\":" << (pc.bass->irreducible ? "true" : "false")
         << "}";
    }
    os << "}";
  }
  os << "]}";
  return os.str();
}

}  // namespace sbm
