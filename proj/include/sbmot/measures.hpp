#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "sbmot/geometry.hpp"

namespace sbm {

/// Finitely supported probability measure on R^d, d in {1,2}.
///
/// Construction validates and canonicalizes: zero-weight atoms are dropped,
/// atoms closer than 1e-12 are merged (weights summed, position kept from
/// the first occurrence), weights must sum to 1 within 1e-9 and are then
/// renormalized exactly. Atoms are stored sorted lexicographically so that
/// equal measures compare equal.
class DiscreteMeasure {
 public:
  DiscreteMeasure(int dim, Mat atoms, Vec weights);

  static DiscreteMeasure dirac(const Vec& point);
  static DiscreteMeasure dirac1d(double x);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(weights_.size()); }
  const Mat& atoms() const { return atoms_; }
  const Vec& weights() const { return weights_; }
  Vec atom(int i) const { return atoms_.row(i).transpose(); }

  Vec barycenter() const;
  double second_moment() const;

  /// 1D helper: atoms as a plain vector (requires dim == 1).
  Vec atoms1d() const;

 private:
  int dim_;
  Mat atoms_;
  Vec weights_;
};

/// Nonnegative transport plan between two discrete measures.
class Coupling {
 public:
  Coupling(int rows, int cols, Mat mass);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Mat& mass() const { return mass_; }
  Mat& mass() { return mass_; }

  Vec row_sums() const { return mass_.rowwise().sum(); }
  Vec col_sums() const { return mass_.colwise().sum().transpose(); }

  /// Normalized row i as a probability vector; zero rows are rejected.
  Vec conditional_row(int i) const;

  /// max_i | sum_j pi_ij (y_j - x_i) | / row mass, the martingale defect.
  double barycenter_defect(const DiscreteMeasure& mu,
                           const DiscreteMeasure& nu) const;
  double marginal_defect(const DiscreteMeasure& mu,
                         const DiscreteMeasure& nu) const;

 private:
  int rows_, cols_;
  Mat mass_;
};

/// Witness of a convex-order violation: a max-affine convex function h with
/// integral(h, mu) > integral(h, nu). Pieces are anchored at the mu-atoms.
struct ConvexWitness {
  Vec intercepts;           // a_i
  Mat gradients;            // g_i, one row per mu-atom
  std::optional<double> strike;  // 1D: t with u_mu(t) > u_nu(t)
  double violation = 0.0;   // integral h dmu - integral h dnu > 0
};

struct ConvexOrderResult {
  bool ordered = false;
  std::optional<Coupling> transport;   // present when ordered
  std::optional<ConvexWitness> witness;  // present when not ordered
};

/// Decides mu <=_c nu by martingale-transport feasibility (Strassen at
/// discrete scale). Throws InvalidInputError on dimension mismatch.
ConvexOrderResult check_convex_order(const DiscreteMeasure& mu,
                                     const DiscreteMeasure& nu);

/// u_m(t) = sum_i w_i |t - x_i| (1D potential function).
double potential_function(const DiscreteMeasure& m, double t);

/// Named 1D/2D quantile discretizations with n equal-weight atoms.
///   "gaussian"       midpoint quantiles of N(0,1)
///   "lognormal_pos"  Law(exp(Z - 1/2))
///   "lognormal_neg"  Law(-exp(Z - 1/2))
///   "circle"         n equally spaced angles on the circle of the given
///                    radius, starting at angle `phase`
/// Unknown names throw InvalidInputError. n >= 2 required.
DiscreteMeasure quantile_discretize(const std::string& spec, int n,
                                    double radius = 1.0, double phase = 0.0);

}  // namespace sbm
