#pragma once

#include <Eigen/Core>
#include <limits>
#include <vector>

#include "sbmot/geometry.hpp"

namespace sbm::detail {

/// Reduced 1D view of the max-affine function v(b) = max_j <b,y_j> - psi_j.
/// In 1D this is the function itself. For collinear 2D supports
/// y_j = foot + s_j e with <foot, e> = 0, so that
///   v(b) = <b, foot> + vt(<b, e>),    vt(t) = max_j (s_j t - psi_j),
/// and every smoothing operation reduces exactly to the profile vt.
struct PwaProfile {
  std::vector<int> vertex;  // original atom indices of the hull vertices
  Vec slopes;               // s-coordinates, strictly increasing
  Vec offsets;              // psi values at the vertices
  Vec breaks;               // pieces()-1 breakpoints of vt
  Vec direction;            // unit e (size 1 in 1D)
  Vec foot;                 // orthogonal foot point (zero in 1D)

  int pieces() const { return static_cast<int>(slopes.size()); }

  double param_of(const Vec& b) const {
    return direction.size() == 1 ? b(0) : b.dot(direction);
  }

  Vec bass_embed(double t) const;

  double value(double t, double sigma) const;
  double deriv(double t, double sigma) const;
  double second(double t, double sigma) const;
  Vec masses(double t, double sigma, int n_atoms) const;

  /// index (into vertex/slopes) of the piece active at t, smallest on ties
  int active_piece(double t) const;

  /// Solves deriv(t) = x by safeguarded Newton; `warm` seeds the bracket.
  double invert_deriv(double x, double sigma,
                      double warm = std::numeric_limits<double>::quiet_NaN())
      const;
};

/// Builds the reduced profile; returns false when a 2D support is not
/// collinear. params_out receives the per-atom line parameters.
bool reduce_support(const Mat& atoms, const Vec& values, PwaProfile& red,
                    Vec* params_out = nullptr);

}  // namespace sbm::detail
