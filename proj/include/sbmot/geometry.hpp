#pragma once

#include <Eigen/Core>
#include <vector>

namespace sbm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Indices of the convex hull of 2D points, counter-clockwise, starting at
/// the lexicographically smallest point. Collinear interior points are not
/// hull vertices. Degenerate inputs (all points equal / collinear) return
/// the extreme points only.
std::vector<int> convex_hull_2d(const Mat& pts);

/// Affine rank of a point set at tolerance: 0 point, 1 segment, 2 full.
int affine_rank_2d(const Mat& pts, double tol = 1e-10);

/// True if p lies strictly inside the convex hull of pts relative to the
/// hull's affine span (relative interior). For a segment this means strictly
/// between the endpoints, for a point it means coincidence within tol.
bool in_relative_interior(const Mat& pts, const Vec& p, double tol = 1e-9);

/// Fit of 2D points to a line c + t*e (unit e): returns false when the
/// points are not collinear within tol. On success fills direction e,
/// foot point c (c is the centroid projected) and the parameters t_i.
bool collinear_fit(const Mat& pts, Vec& direction, Vec& foot, Vec& params,
                   double tol = 1e-9);

}  // namespace sbm
