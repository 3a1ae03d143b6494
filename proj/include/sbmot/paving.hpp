#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sbmot/bassim.hpp"
#include "sbmot/dualsolve.hpp"
#include "sbmot/measures.hpp"

namespace sbm {

/// Relatively open convex cell, represented by a generating point set:
/// the cell is ri(conv(points)). Rank 0 is a point, rank 1 a segment
/// (1D: an open interval), rank 2 an open polygon.
struct ConvexCell {
  int dim = 1;
  Mat points;

  int rank() const;
  bool ri_contains(const Vec& p, double tol = 1e-9) const;
  bool ri_intersects(const ConvexCell& other, double tol = 1e-9) const;
};

struct BassFit {
  Vec psi_values;   // fitted psi_lim on the local nu-atoms
  std::optional<BassModel> model;
  double local_dual = 0.0;
  double local_primal = 0.0;
  double local_gap = 0.0;
  double mc_error = 0.0;
  bool irreducible = true;
};

struct PavingComponent {
  ConvexCell cell;
  std::vector<int> mu_indices;
  std::vector<int> nu_indices;   // nu-atoms in the cell closure
  double kappa_weight = 0.0;
  std::optional<DiscreteMeasure> mu_local;
  std::optional<DiscreteMeasure> nu_local;
  std::optional<BassFit> bass;
};

struct PavingResult {
  std::vector<PavingComponent> components;
  std::string method;           // "lp" | "dual-divergence" | "potential-1d"
  std::string agreement_report;  // filled by decompose

  /// canonical mu-atom partition: sorted list of sorted index groups
  std::vector<std::vector<int>> mu_partition() const;
};

/// Authoritative paving: reachable sets from the martingale-transport LP,
/// cells as relative interiors of their hulls, merged to a fixpoint.
PavingResult pave_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// 1D oracle: components are the maximal open intervals of
/// {u_mu < u_nu} inside conv supp nu, plus point components at mu-atoms
/// where the potentials touch.
PavingResult pave_potential_1d(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu);

struct DivergenceConfig {
  double threshold = 0.0;         // sup cutoff M; 0 = derive from reference
  int min_records = 6;
  double threshold_factor = 50.0;  // M = factor * median of reachable sups
  double flat_slack = 0.0;        // D budget of recession probes; 0 = auto
  int max_probes = 512;
  McConfig mc;                    // 2D evaluation of probe candidates
};

/// Diagnostic paving from the anchored-normalization statistics of the
/// solver trace: a nu-atom joins I^b(x_i) when its normalized values stay
/// below the sup threshold. Since a finite solver stops tilting once it is
/// converged to machine precision, the trace is first extended by recession
/// probes: one-kink tilts psi + t|<.,e> - c| that leave the dual value flat
/// within a vanishing budget (so the extended sequence still satisfies the
/// fast-convergence condition) and along which the statistics of separated
/// pairs genuinely diverge. The sup statistics are exposed for audit.
PavingResult pave_dual_divergence(const SolveTrace& trace,
                                  const DiscreteMeasure& mu,
                                  const DiscreteMeasure& nu,
                                  const DivergenceConfig& cfg = {},
                                  const PavingResult* lp_reference = nullptr,
                                  Mat* sup_stats = nullptr);

/// Fills mu_local / nu_local by disintegrating the coupling over the
/// components. Mass crossing components above 1e-8 raises CrossLeakError.
PavingResult disintegrate(const PavingResult& paving, const Coupling& pi,
                          const DiscreteMeasure& mu, const DiscreteMeasure& nu);

struct DecomposeConfig {
  DualConfig global;        // dual solve on the full pair
  DualConfig local;         // per-component refits
  DivergenceConfig divergence;
  double component_gap_tol = 1e-6;  // per-component |D - P| target (plus MC error)
  bool fit_bass = true;
  bool check_agreement = true;

  DecomposeConfig() {
    // tight global tolerance: the cross-component leak of the induced
    // coupling scales with the gradient norm, and disintegrate gates at 1e-8
    global.grad_tol = 1e-11;
    global.max_iter = 80000;
    local.grad_tol = 1e-9;
    local.max_iter = 40000;
  }
};

struct DecomposeResult {
  PavingResult paving;        // lp-based, disintegrated, with Bass fits
  SolveTrace global_trace;
  DualState global_state;
  PavingResult divergence_paving;
  bool methods_agree = true;

  DecomposeResult(PavingResult p, SolveTrace t, DualState s,
                  PavingResult dp)
      : paving(std::move(p)), global_trace(std::move(t)),
        global_state(std::move(s)), divergence_paving(std::move(dp)) {}
};

/// Full pipeline: global dual solve, LP paving (authoritative) checked
/// against the dual-divergence diagnostic, disintegration, and one Bass
/// fit per component with an LP irreducibility certificate.
DecomposeResult decompose(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                          const DecomposeConfig& config = {});

std::string paving_to_json(const PavingResult& p);

}  // namespace sbm
