#pragma once

#include <optional>
#include <vector>

#include "sbmot/measures.hpp"

namespace sbm::motlp {

/// Result of the martingale-transport feasibility LP. On success `coupling`
/// holds a feasible plan with constraint residuals <= 1e-9. On failure the
/// Farkas certificate is split by constraint block: one intercept per
/// mu-atom, one value per nu-atom, and one gradient row per mu-atom.
struct FeasibleResult {
  std::optional<Coupling> coupling;
  Vec farkas_row;   // a_i, size mu.size()
  Vec farkas_col;   // b_j, size nu.size()
  Mat farkas_bary;  // g_i, mu.size() x d
};

/// Strassen at discrete scale: phase-1 LP over MT(mu, nu).
FeasibleResult feasible(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// LP maximum of pi_ij over MT(mu, nu). Throws InvalidInputError if the
/// pair is infeasible.
double max_cell_mass(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                     int i, int j);

/// reach(i, j) == true iff max_cell_mass(i, j) > 1e-9. Computed by a
/// covering sweep: repeatedly maximize the total mass on still-unmarked
/// pairs and mark the support of each optimizer, until the optimum is zero
/// (which certifies that every unmarked pair has zero maximum).
std::vector<std::vector<char>> reachability_matrix(const DiscreteMeasure& mu,
                                                   const DiscreteMeasure& nu);

/// { j : max_cell_mass(i, j) > 1e-9 }
std::vector<int> reachable_set(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu, int i);

/// Solve min sum_ij cost_ij pi_ij over MT(mu, nu).
std::optional<Coupling> solve_mt_lp(const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu,
                                    const Mat& cost);

}  // namespace sbm::motlp
