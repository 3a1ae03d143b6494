#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbmot/gauss.hpp"
#include "sbmot/examples.hpp"
#include "sbmot/gaussmcov.hpp"
#include "sbmot/measures.hpp"

using namespace sbm;

namespace {

DiscreteMeasure make1d(std::initializer_list<double> atoms,
                       std::initializer_list<double> weights) {
  Mat a(static_cast<int>(atoms.size()), 1);
  Vec w(static_cast<int>(weights.size()));
  int i = 0;
  for (double x : atoms) a(i++, 0) = x;
  i = 0;
  for (double x : weights) w(i++) = x;
  return DiscreteMeasure(1, a, w);
}

constexpr double kSqrt2OverPi = 0.7978845608028654;

// Riemann-quantile oracle for MCov of a 1D discrete measure: simulate the
// comonotone coupling on a fine uniform grid of quantile levels
double mcov_oracle(const DiscreteMeasure& p, int grid = 400000) {
  std::vector<std::pair<double, double>> aw(p.size());
  for (int i = 0; i < p.size(); ++i)
    aw[i] = {p.atoms()(i, 0), p.weights()(i)};
  std::sort(aw.begin(), aw.end());
  double acc = 0.0;
  size_t idx = 0;
  double cum = aw[0].second;
  for (int k = 0; k < grid; ++k) {
    const double u = (k + 0.5) / grid;
    while (u > cum && idx + 1 < aw.size()) cum += aw[++idx].second;
    acc += aw[idx].first * norm_quantile(u);
  }
  return acc / grid;
}

}  // namespace

TEST_CASE("mcov_1d closed forms") {
  CHECK(mcov_1d(DiscreteMeasure::dirac1d(3.7)).value ==
        doctest::Approx(0.0).epsilon(1e-15));
  auto pm = make1d({-1, 1}, {0.5, 0.5});
  CHECK(mcov_1d(pm).value == doctest::Approx(kSqrt2OverPi).epsilon(1e-12));
  // midpoint quantiles truncate the tails, which costs covariance; the
  // tail-tapered rule used by the worked example recovers it
  auto ln = quantile_discretize("lognormal_pos", 200);
  CHECK(mcov_1d(ln).value == doctest::Approx(1.0).epsilon(3e-2));
  auto lt = examples::tapered_lognormal(200, 10, 0.75, false);
  CHECK(mcov_1d(lt).value == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("mcov_1d against the Riemann oracle on random measures") {
  RngStream rng(8, 0);
  for (int t = 0; t < 10; ++t) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 6);
    Mat a(n, 1);
    Vec w(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 3.0 * rng.normal();
      w(i) = 0.1 + rng.uniform();
    }
    DiscreteMeasure p(1, a, w / w.sum());
    CHECK(mcov_1d(p).value == doctest::Approx(mcov_oracle(p)).epsilon(2e-4));
  }
}

TEST_CASE("mcov_1d invariances") {
  RngStream rng(21, 0);
  auto p = make1d({-0.7, 0.2, 1.9}, {0.3, 0.3, 0.4});
  const double base = mcov_1d(p).value;
  // translation: exact
  Mat shifted = p.atoms().array() + 17.3;
  CHECK(mcov_1d(DiscreteMeasure(1, shifted, p.weights())).value ==
        doctest::Approx(base).epsilon(1e-12));
  // scaling: linear
  Mat scaled = p.atoms() * 2.5;
  CHECK(mcov_1d(DiscreteMeasure(1, scaled, p.weights())).value ==
        doctest::Approx(2.5 * base).epsilon(1e-12));
  // monotone refinement of a fixed law never decreases by more than
  // discretization error
  double prev = -1e9;
  for (int n : {25, 50, 100, 200, 400}) {
    const double v = mcov_1d(quantile_discretize("lognormal_pos", n)).value;
    CHECK(v >= prev - 1e-9);
    prev = v;
  }
}

TEST_CASE("mcov dual weights support the value (strong duality check)") {
  auto p = make1d({-1.5, -0.2, 0.4, 2.0}, {0.25, 0.25, 0.3, 0.2});
  McovResult r = mcov_1d(p);
  // F(phi) = <p,phi> + E max_j (Z y_j - phi_j) evaluated by quadrature
  // must equal the value at the optimal duals
  const int grid = 200000;
  double emax = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double z = norm_quantile((k + 0.5) / grid);
    double best = -1e300;
    for (int j = 0; j < p.size(); ++j)
      best = std::max(best, z * p.atoms()(j, 0) - r.dual_weights(j));
    emax += best;
  }
  emax /= grid;
  CHECK(p.weights().dot(r.dual_weights) + emax ==
        doctest::Approx(r.value).epsilon(5e-4));
}

TEST_CASE("mcov_semidiscrete: collinear reduction is exact") {
  Mat a(2, 2);
  a << -1, 0, 1, 0;
  DiscreteMeasure p(2, a, Vec::Constant(2, 0.5));
  McConfig mc;
  mc.seed = 3;
  McovResult r = mcov_semidiscrete(p, mc);
  CHECK(r.error_estimate == 0.0);
  CHECK(r.value == doctest::Approx(kSqrt2OverPi).epsilon(1e-12));
  // rotated antipodal pair reduces the same way
  Mat b(2, 2);
  const double c = std::cos(0.7), s = std::sin(0.7);
  b << -c, -s, c, s;
  DiscreteMeasure p2(2, b, Vec::Constant(2, 0.5));
  CHECK(mcov_semidiscrete(p2, mc).value ==
        doctest::Approx(kSqrt2OverPi).epsilon(1e-12));
}

TEST_CASE("mcov_semidiscrete on the circle vs the radial oracle") {
  auto circ = quantile_discretize("circle", 24);
  McConfig mc;
  mc.seed = 19;
  mc.samples = 60000;
  mc.max_iter = 1200;  // 12000 sgd steps
  McovResult r = mcov_semidiscrete(circ, mc);
  // radial comonotone oracle: r * E chi_2 = sqrt(pi/2), discretization slack
  const double oracle = 1.2533141373155003;
  CHECK(std::fabs(r.value - oracle) <= 3.0 * r.error_estimate + 2e-2);
  CHECK(r.error_estimate > 0.0);
  CHECK(r.dual_weights(0) == 0.0);  // gauge
}

TEST_CASE("mcov dispatch and translation invariance in 2D") {
  Mat a(1, 2);
  a << 3.0, -4.0;
  DiscreteMeasure dirac(2, a, Vec::Ones(1));
  McConfig mc;
  mc.seed = 5;
  auto r = mcov(dirac, mc);
  CHECK(std::fabs(r.value) <= 3.0 * r.error_estimate + 1e-9);
}

TEST_CASE("mcov_row handles zero entries and singletons") {
  Mat atoms(3, 1);
  atoms << -1, 0, 1;
  Vec probs(3);
  probs << 0.5, 0.0, 0.5;
  CHECK(mcov_row(atoms, probs) == doctest::Approx(kSqrt2OverPi).epsilon(1e-12));
  Vec single(3);
  single << 0.0, 1.0, 0.0;
  CHECK(mcov_row(atoms, single) == 0.0);
}
