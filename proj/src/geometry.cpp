#include "sbmot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sbm {

namespace {
double cross(const Eigen::RowVector2d& o, const Eigen::RowVector2d& a,
             const Eigen::RowVector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}
}  // namespace

std::vector<int> convex_hull_2d(const Mat& pts) {
  const int n = static_cast<int>(pts.rows());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (pts(a, 0) != pts(b, 0)) return pts(a, 0) < pts(b, 0);
    return pts(a, 1) < pts(b, 1);
  });
  idx.erase(std::unique(idx.begin(), idx.end(),
                        [&](int a, int b) {
                          return pts.row(a) == pts.row(b);
                        }),
            idx.end());
  const int m = static_cast<int>(idx.size());
  if (m <= 2) return idx;
  std::vector<int> hull(2 * m);
  int k = 0;
  for (int i = 0; i < m; ++i) {  // lower chain
    while (k >= 2 && cross(pts.row(hull[k - 2]).head<2>(),
                           pts.row(hull[k - 1]).head<2>(),
                           pts.row(idx[i]).head<2>()) <= 0.0)
      --k;
    hull[k++] = idx[i];
  }
  for (int i = m - 2, lower = k + 1; i >= 0; --i) {  // upper chain
    while (k >= lower && cross(pts.row(hull[k - 2]).head<2>(),
                               pts.row(hull[k - 1]).head<2>(),
                               pts.row(idx[i]).head<2>()) <= 0.0)
      --k;
    hull[k++] = idx[i];
  }
  hull.resize(k - 1);
  return hull;
}

int affine_rank_2d(const Mat& pts, double tol) {
  const int n = static_cast<int>(pts.rows());
  if (n == 0) return -1;
  double scale = 0.0;
  for (int i = 1; i < n; ++i)
    scale = std::max(scale, (pts.row(i) - pts.row(0)).norm());
  if (scale <= tol) return 0;
  // direction of the largest spread
  int far = 0;
  double best = 0.0;
  for (int i = 1; i < n; ++i) {
    const double d = (pts.row(i) - pts.row(0)).norm();
    if (d > best) {
      best = d;
      far = i;
    }
  }
  Eigen::RowVector2d e = (pts.row(far) - pts.row(0)).head<2>().normalized();
  for (int i = 0; i < n; ++i) {
    Eigen::RowVector2d d = (pts.row(i) - pts.row(0)).head<2>();
    const double off = std::fabs(d.x() * e.y() - d.y() * e.x());
    if (off > tol * std::max(1.0, scale)) return 2;
  }
  return 1;
}

bool in_relative_interior(const Mat& pts, const Vec& p, double tol) {
  const int n = static_cast<int>(pts.rows());
  if (n == 0) return false;
  if (pts.cols() == 1) {
    const double lo = pts.col(0).minCoeff(), hi = pts.col(0).maxCoeff();
    if (hi - lo <= tol) return std::fabs(p(0) - lo) <= tol;
    return p(0) > lo + tol && p(0) < hi - tol;
  }
  const int rank = affine_rank_2d(pts, tol);
  if (rank == 0) return (p.transpose() - pts.row(0)).norm() <= tol;
  if (rank == 1) {
    Vec e, c, t;
    collinear_fit(pts, e, c, t, 1e-7);
    const Vec d = p - c;
    const double off = std::fabs(d(0) * e(1) - d(1) * e(0));
    if (off > tol) return false;
    const double tp = d.dot(e);
    return tp > t.minCoeff() + tol && tp < t.maxCoeff() - tol;
  }
  const std::vector<int> hull = convex_hull_2d(pts);
  const int h = static_cast<int>(hull.size());
  double diam = 0.0;
  for (int i = 0; i < h; ++i)
    diam = std::max(diam, (pts.row(hull[i]) - pts.row(hull[0])).norm());
  const double margin = tol * std::max(1.0, diam);
  for (int i = 0; i < h; ++i) {
    const auto a = pts.row(hull[i]).head<2>();
    const auto b = pts.row(hull[(i + 1) % h]).head<2>();
    Eigen::RowVector2d q(p(0), p(1));
    if (cross(a, b, q) <= margin) return false;  // hull is CCW
  }
  return true;
}

bool collinear_fit(const Mat& pts, Vec& direction, Vec& foot, Vec& params,
                   double tol) {
  const int n = static_cast<int>(pts.rows());
  if (n == 0 || affine_rank_2d(pts, tol) > 1) return false;
  Eigen::RowVector2d c = pts.colwise().mean();
  int far = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = (pts.row(i) - c).norm();
    if (d > best) {
      best = d;
      far = i;
    }
  }
  Eigen::RowVector2d e(1.0, 0.0);
  if (best > 0.0) e = (pts.row(far) - c).head<2>().normalized();
  direction = e.transpose();
  foot = c.transpose();
  params.resize(n);
  for (int i = 0; i < n; ++i) params(i) = (pts.row(i) - c).dot(e);
  return true;
}

}  // namespace sbm
