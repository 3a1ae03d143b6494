#include "sbmot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"
#include "sbmot/motlp.hpp"

namespace sbm {

namespace {
constexpr double kMergeTol = 1e-12;
constexpr double kWeightSumTol = 1e-9;
}  // namespace

DiscreteMeasure::DiscreteMeasure(int dim, Mat atoms, Vec weights) : dim_(dim) {
  if (dim != 1 && dim != 2)
    throw InvalidInputError("DiscreteMeasure: dim must be 1 or 2");
  if (atoms.rows() != weights.size() || atoms.cols() != dim)
    throw InvalidInputError("DiscreteMeasure: atoms/weights shape mismatch");
  if (atoms.rows() == 0) throw InvalidInputError("DiscreteMeasure: empty");
  if (!atoms.allFinite() || !weights.allFinite())
    throw InvalidInputError("DiscreteMeasure: non-finite entry");
  if ((weights.array() < 0.0).any())
    throw InvalidInputError("DiscreteMeasure: negative weight");
  const double s = weights.sum();
  if (std::fabs(s - 1.0) > kWeightSumTol)
    throw InvalidInputError("DiscreteMeasure: weights sum to " +
                            std::to_string(s));

  const int n = static_cast<int>(atoms.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int k = 0; k < dim; ++k) {
      if (atoms(a, k) != atoms(b, k)) return atoms(a, k) < atoms(b, k);
    }
    return false;
  });

  std::vector<Vec> kept;
  std::vector<double> w;
  for (int oi : order) {
    if (weights(oi) == 0.0) continue;
    Vec p = atoms.row(oi).transpose();
    if (!kept.empty() && (kept.back() - p).norm() <= kMergeTol) {
      w.back() += weights(oi);
    } else {
      kept.push_back(p);
      w.push_back(weights(oi));
    }
  }
  if (kept.empty()) throw InvalidInputError("DiscreteMeasure: no mass");
  atoms_.resize(static_cast<int>(kept.size()), dim);
  weights_.resize(static_cast<int>(kept.size()));
  for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
    atoms_.row(i) = kept[i].transpose();
    weights_(i) = w[i];
  }
  weights_ /= weights_.sum();
}

DiscreteMeasure DiscreteMeasure::dirac(const Vec& point) {
  Mat a(1, point.size());
  a.row(0) = point.transpose();
  return DiscreteMeasure(static_cast<int>(point.size()), a, Vec::Ones(1));
}

DiscreteMeasure DiscreteMeasure::dirac1d(double x) {
  Vec p(1);
  p << x;
  return dirac(p);
}

Vec DiscreteMeasure::barycenter() const {
  return atoms_.transpose() * weights_;
}

double DiscreteMeasure::second_moment() const {
  return (atoms_.rowwise().squaredNorm().array() * weights_.array()).sum();
}

Vec DiscreteMeasure::atoms1d() const {
  if (dim_ != 1) throw InvalidInputError("atoms1d: measure is not 1D");
  return atoms_.col(0);
}

Coupling::Coupling(int rows, int cols, Mat mass)
    : rows_(rows), cols_(cols), mass_(std::move(mass)) {
  if (mass_.rows() != rows_ || mass_.cols() != cols_)
    throw InvalidInputError("Coupling: mass shape mismatch");
  if (!mass_.allFinite() || (mass_.array() < -1e-12).any())
    throw InvalidInputError("Coupling: invalid mass entries");
}

Vec Coupling::conditional_row(int i) const {
  const double s = mass_.row(i).sum();
  if (s <= 0.0) throw InvalidInputError("Coupling: empty row");
  return mass_.row(i).transpose() / s;
}

double Coupling::barycenter_defect(const DiscreteMeasure& mu,
                                   const DiscreteMeasure& nu) const {
  double worst = 0.0;
  for (int i = 0; i < rows_; ++i) {
    const double s = mass_.row(i).sum();
    if (s <= 0.0) continue;
    Vec bary = nu.atoms().transpose() * mass_.row(i).transpose() / s;
    worst = std::max(worst, (bary - mu.atom(i)).norm());
  }
  return worst;
}

double Coupling::marginal_defect(const DiscreteMeasure& mu,
                                 const DiscreteMeasure& nu) const {
  const double r = (row_sums() - mu.weights()).cwiseAbs().maxCoeff();
  const double c = (col_sums() - nu.weights()).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

ConvexOrderResult check_convex_order(const DiscreteMeasure& mu,
                                     const DiscreteMeasure& nu) {
  if (mu.dim() != nu.dim())
    throw InvalidInputError("check_convex_order: dimension mismatch");
  ConvexOrderResult res;
  auto lp = motlp::feasible(mu, nu);
  if (lp.coupling) {
    res.ordered = true;
    res.transport = lp.coupling;
    return res;
  }
  res.ordered = false;
  ConvexWitness w;
  w.intercepts = lp.farkas_row;   // a_i
  w.gradients = lp.farkas_bary;   // g_i
  // violation = integral h dmu - integral h dnu for h(y) = max_i a_i + <g_i, y - x_i>
  auto h = [&](const Vec& y) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < mu.size(); ++i) {
      best = std::max(best, w.intercepts(i) +
                                w.gradients.row(i).dot((y - mu.atom(i)).transpose()));
    }
    return best;
  };
  double vmu = 0.0, vnu = 0.0;
  for (int i = 0; i < mu.size(); ++i) vmu += mu.weights()(i) * h(mu.atom(i));
  for (int j = 0; j < nu.size(); ++j) vnu += nu.weights()(j) * h(nu.atom(j));
  w.violation = vmu - vnu;
  if (mu.dim() == 1) {
    // best single call-payoff strike: scan the potential difference on atoms
    double best = 0.0;
    std::optional<double> strike;
    auto scan = [&](double t) {
      const double d = potential_function(mu, t) - potential_function(nu, t);
      if (d > best) {
        best = d;
        strike = t;
      }
    };
    for (int i = 0; i < mu.size(); ++i) scan(mu.atoms()(i, 0));
    for (int j = 0; j < nu.size(); ++j) scan(nu.atoms()(j, 0));
    w.strike = strike;
  }
  res.witness = std::move(w);
  return res;
}

double potential_function(const DiscreteMeasure& m, double t) {
  if (m.dim() != 1) throw InvalidInputError("potential_function: 1D only");
  return (m.weights().array() * (m.atoms().col(0).array() - t).abs()).sum();
}

DiscreteMeasure quantile_discretize(const std::string& spec, int n,
                                    double radius, double phase) {
  if (n < 2) throw InvalidInputError("quantile_discretize: n >= 2 required");
  if (spec == "circle") {
    Mat a(n, 2);
    for (int k = 0; k < n; ++k) {
      const double th = phase + 2.0 * M_PI * k / n;
      a(k, 0) = radius * std::cos(th);
      a(k, 1) = radius * std::sin(th);
    }
    return DiscreteMeasure(2, a, Vec::Constant(n, 1.0 / n));
  }
  Mat a(n, 1);
  for (int k = 0; k < n; ++k) {
    const double q = norm_quantile((k + 0.5) / n);
    if (spec == "gaussian") {
      a(k, 0) = q;
    } else if (spec == "lognormal_pos") {
      a(k, 0) = std::exp(q - 0.5);
    } else if (spec == "lognormal_neg") {
      a(k, 0) = -std::exp(q - 0.5);
    } else {
      throw InvalidInputError("quantile_discretize: unknown spec '" + spec +
                              "'");
    }
  }
  return DiscreteMeasure(1, a, Vec::Constant(n, 1.0 / n));
}

}  // namespace sbm
