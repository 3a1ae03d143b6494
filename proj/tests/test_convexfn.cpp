#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sbmot/convexfn.hpp"
#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"
#include "sbmot/measures.hpp"

using namespace sbm;

namespace {

PwaPotential pwa1d(std::initializer_list<double> atoms,
                   std::initializer_list<double> values) {
  Mat a(static_cast<int>(atoms.size()), 1);
  Vec v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : atoms) a(i++, 0) = x;
  i = 0;
  for (double x : values) v(i++) = x;
  return PwaPotential(std::move(a), std::move(v));
}

Vec pt(double x) {
  Vec p(1);
  p << x;
  return p;
}

Vec pt2(double x, double y) {
  Vec p(2);
  p << x, y;
  return p;
}

constexpr double kPhi0 = 0.3989422804014327;  // phi(0) = 1/sqrt(2 pi)

// test-side oracle: brute-force lower envelope at atom j as the cheapest
// convex combination over all atom pairs
Vec brute_envelope_1d(const Mat& atoms, const Vec& vals) {
  const int n = static_cast<int>(atoms.rows());
  Vec env = vals;
  for (int j = 0; j < n; ++j) {
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double ya = atoms(a, 0), yb = atoms(b, 0), yj = atoms(j, 0);
        if (!(ya <= yj && yj <= yb) || ya == yb) continue;
        const double lam = (yj - ya) / (yb - ya);
        env(j) = std::min(env(j), (1 - lam) * vals(a) + lam * vals(b));
      }
  }
  return env;
}

}  // namespace

TEST_CASE("lower convex envelope, 1D") {
  auto p1 = lower_convex_envelope(pwa1d({-1, 0, 1}, {1, 0, 1}));
  CHECK(p1.values()(1) == 0.0);
  CHECK(p1.values()(0) == 1.0);
  CHECK(p1.envelope_flag());

  auto p2 = lower_convex_envelope(pwa1d({-1, 0, 1}, {0, 1, 0}));
  CHECK(p2.values()(1) == doctest::Approx(0.0).epsilon(1e-15));

  auto p3 = lower_convex_envelope(pwa1d({0, 1, 2, 3}, {0, 2, 1, 3}));
  CHECK(p3.values()(1) == doctest::Approx(0.5));
  CHECK(p3.values()(2) == 1.0);

  // idempotent and pointwise below; random cross-check vs brute force
  RngStream rng(5, 0);
  for (int t = 0; t < 50; ++t) {
    const int n = 3 + static_cast<int>(rng.next_u64() % 8);
    Mat a(n, 1);
    Vec v(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 4.0 * rng.uniform() - 2.0 + 1e-3 * i;
      v(i) = 2.0 * rng.normal();
    }
    PwaPotential p(a, v);
    auto env = lower_convex_envelope(p);
    auto env2 = lower_convex_envelope(env);
    CHECK((env.values() - env2.values()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(((env.values() - p.values()).array() <= 1e-12).all());
    const Vec brute = brute_envelope_1d(a, v);
    CHECK((env.values() - brute).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("conjugate max-affine with smallest-index ties") {
  auto p = pwa1d({-1, 1}, {0, 0});
  auto [v2, i2] = conjugate_maxaffine(p, pt(2.0));
  CHECK(v2 == doctest::Approx(2.0));
  CHECK(i2 == 1);
  auto [v0, i0] = conjugate_maxaffine(p, pt(0.0));
  CHECK(v0 == doctest::Approx(0.0));
  CHECK(i0 == 0);
}

TEST_CASE("smoothed value, exact 1D closed forms") {
  SmoothingKernel k{1.0, 1};
  // v(b) = max(0, b): atoms {0,1}, psi = 0
  auto relu = lower_convex_envelope(pwa1d({0, 1}, {0, 0}));
  CHECK(smoothed_value(relu, k, pt(0.0)).value ==
        doctest::Approx(kPhi0).epsilon(1e-12));
  // affine: single atom, smoothing leaves it fixed
  auto aff = lower_convex_envelope(pwa1d({2.0}, {0.7}));
  CHECK(smoothed_value(aff, k, pt(1.5)).value ==
        doctest::Approx(2.0 * 1.5 - 0.7).epsilon(1e-15));
  // v = |b|
  auto vabs = lower_convex_envelope(pwa1d({-1, 1}, {0, 0}));
  CHECK(smoothed_value(vabs, k, pt(0.0)).value ==
        doctest::Approx(2.0 * kPhi0).epsilon(1e-12));
  CHECK(smoothed_value(vabs, k, pt(0.0)).std_error == 0.0);
}

TEST_CASE("smoothed gradient, exact 1D") {
  SmoothingKernel k{1.0, 1};
  auto vabs = lower_convex_envelope(pwa1d({-1, 1}, {0, 0}));
  CHECK(smoothed_gradient(vabs, k, pt(0.0))(0) ==
        doctest::Approx(0.0).epsilon(1e-14));
  CHECK(smoothed_gradient(vabs, k, pt(40.0))(0) == doctest::Approx(1.0));
  auto relu = lower_convex_envelope(pwa1d({0, 1}, {0, 0}));
  CHECK(smoothed_gradient(relu, k, pt(0.0))(0) == doctest::Approx(0.5));

  // central finite differences of the smoothed value
  RngStream rng(17, 0);
  for (int t = 0; t < 20; ++t) {
    const int n = 4 + static_cast<int>(rng.next_u64() % 6);
    Mat a(n, 1);
    Vec v(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 3.0 * rng.normal();
      v(i) = rng.normal();
    }
    auto p = lower_convex_envelope(PwaPotential(a, v));
    const double b = 2.0 * rng.normal();
    const double h = 1e-5;
    const double fd = (smoothed_value(p, k, pt(b + h)).value -
                       smoothed_value(p, k, pt(b - h)).value) /
                      (2 * h);
    CHECK(smoothed_gradient(p, k, pt(b))(0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("laguerre masses") {
  SmoothingKernel k{1.0, 1};
  auto vabs = lower_convex_envelope(pwa1d({-1, 1}, {0, 0}));
  Vec m0 = laguerre_masses(vabs, k, pt(0.0));
  CHECK(m0(0) == doctest::Approx(0.5).epsilon(1e-12));
  Vec m1 = laguerre_masses(vabs, k, pt(1.0));
  CHECK(m1(0) == doctest::Approx(0.15865525393145707).epsilon(1e-10));
  CHECK(m1(1) == doctest::Approx(0.8413447460685429).epsilon(1e-10));
  auto single = lower_convex_envelope(pwa1d({0.3}, {0.1}));
  CHECK(laguerre_masses(single, k, pt(5.0))(0) == 1.0);
  // atoms strictly above the envelope get zero mass
  Vec mm = laguerre_masses(pwa1d({-1, 0, 1}, {0, 1, 0}), k, pt(0.2));
  CHECK(mm(1) == 0.0);
  CHECK(mm.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("smoothed conjugate, 1D") {
  SmoothingKernel k{1.0, 1};
  auto vabs = lower_convex_envelope(pwa1d({-1, 1}, {0, 0}));
  auto r = smoothed_conjugate(vabs, k, pt(0.0));
  // by symmetry b* = 0 and the value is -(v*gamma)(0) = -2 phi(0); with it
  // the dual of (delta_0, (delta_-1 + delta_1)/2) at psi = 0 equals the
  // primal MCov value exactly, as weak duality demands
  CHECK(r.value == doctest::Approx(-2.0 * kPhi0).epsilon(1e-12));
  CHECK(r.argpoint(0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(r.masses(0) == doctest::Approx(0.5).epsilon(1e-12));

  // quadratic on a gaussian grid: continuum conjugate value -1/2 at x = 0
  auto grid = quantile_discretize("gaussian", 200);
  Vec q = 0.5 * grid.atoms().col(0).array().square();
  auto p = lower_convex_envelope(PwaPotential(grid.atoms(), q));
  auto rq = smoothed_conjugate(p, k, pt(0.0));
  CHECK(rq.value == doctest::Approx(-0.5).epsilon(4e-2));

  CHECK_THROWS_AS(smoothed_conjugate(vabs, k, pt(1.0)), BoundaryAtomError);
  CHECK_THROWS_AS(smoothed_conjugate(vabs, k, pt(1.5)), BoundaryAtomError);
}

TEST_CASE("normalize_at, 1D") {
  auto flat = pwa1d({-1, 1}, {0, 0});
  auto n0 = normalize_at(flat, pt(0.0), 1e-6);
  CHECK(n0.subgradient(0) == doctest::Approx(0.0));
  CHECK(n0.normalized_values().cwiseAbs().maxCoeff() < 1e-12);
  auto nh = normalize_at(flat, pt(0.5), 1e-6);
  CHECK(nh.normalized_values().cwiseAbs().maxCoeff() < 1e-12);

  auto vee = pwa1d({-1, 0, 1}, {2, 0, 2});
  auto n1 = normalize_at(vee, pt(1.0), 1e-6);
  CHECK(n1.subgradient(0) == doctest::Approx(2.0));
  const Vec nv = n1.normalized_values();
  CHECK(nv(0) == doctest::Approx(4.0));
  CHECK(nv(1) == doctest::Approx(0.0));
  CHECK(nv(2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nv.minCoeff() > -1e-10);

  CHECK_THROWS_AS(normalize_at(vee, pt(2.0), 1e-6), InvalidInputError);
}

TEST_CASE("affine shift: cells translate covariantly") {
  SmoothingKernel k{1.0, 1};
  RngStream rng(31, 0);
  for (int t = 0; t < 25; ++t) {
    const int n = 5;
    Mat a(n, 1);
    Vec v(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 2.5 * rng.normal();
      v(i) = rng.normal();
    }
    const double g = rng.normal(), c = rng.normal();
    Vec v_shift = v + c * Vec::Ones(n) + g * a.col(0);
    auto p = lower_convex_envelope(PwaPotential(a, v));
    auto ps = lower_convex_envelope(PwaPotential(a, v_shift));
    const double b = 1.5 * rng.normal();
    CHECK(conjugate_maxaffine(p, pt(b)).second ==
          conjugate_maxaffine(ps, pt(b + g)).second);
    const Vec m = laguerre_masses(p, k, pt(b));
    const Vec ms = laguerre_masses(ps, k, pt(b + g));
    CHECK((m - ms).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("smoothed value is convex in b (1D midpoint inequality)") {
  SmoothingKernel k{1.0, 1};
  RngStream rng(77, 0);
  for (int t = 0; t < 30; ++t) {
    Mat a(6, 1);
    Vec v(6);
    for (int i = 0; i < 6; ++i) {
      a(i, 0) = 2.0 * rng.normal();
      v(i) = rng.normal();
    }
    auto p = lower_convex_envelope(PwaPotential(a, v));
    const double b1 = 2 * rng.normal(), b2 = 2 * rng.normal();
    const double vmid = smoothed_value(p, k, pt(0.5 * (b1 + b2))).value;
    const double vavg = 0.5 * (smoothed_value(p, k, pt(b1)).value +
                               smoothed_value(p, k, pt(b2)).value);
    CHECK(vmid <= vavg + 1e-10);
  }
}

TEST_CASE("Fenchel-Moreau round trip on envelope potentials") {
  RngStream rng(13, 0);
  for (int t = 0; t < 25; ++t) {
    const int n = 4 + static_cast<int>(rng.next_u64() % 5);
    Mat a(n, 1);
    Vec v(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = 3.0 * rng.normal();
      v(i) = rng.normal();
    }
    auto p = lower_convex_envelope(PwaPotential(a, v));
    // test-side breakpoints of v = psi^*, from sorted atoms
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return a(x, 0) < a(y, 0); });
    std::vector<double> bps;
    for (int i = 0; i + 1 < n; ++i) {
      const int j0 = order[i], j1 = order[i + 1];
      bps.push_back((p.values()(j1) - p.values()(j0)) / (a(j1, 0) - a(j0, 0)));
    }
    // psi**(y_j) = max over breakpoints b of (y_j b - v(b))
    for (int j = 0; j < n; ++j) {
      double best = -1e300;
      for (double b : bps) {
        const double vb = conjugate_maxaffine(p, pt(b)).first;
        best = std::max(best, a(j, 0) * b - vb);
      }
      CHECK(best == doctest::Approx(p.values()(j)).epsilon(1e-9));
    }
  }
}

TEST_CASE("collinear 2D supports reduce exactly") {
  SmoothingKernel k2{1.0, 2};
  SmoothingKernel k1{1.0, 1};
  Mat a2(2, 2);
  a2 << 0.5, 0.0, 1.5, 0.0;
  auto p2 = lower_convex_envelope(PwaPotential(a2, Vec::Zero(2)));
  Mat a1(2, 1);
  a1 << 0.5, 1.5;
  auto p1 = lower_convex_envelope(PwaPotential(a1, Vec::Zero(2)));
  const Vec b2 = pt2(0.3, 0.0);
  CHECK(smoothed_value(p2, k2, b2).value ==
        doctest::Approx(smoothed_value(p1, k1, pt(0.3)).value).epsilon(1e-12));
  CHECK(smoothed_value(p2, k2, b2).std_error == 0.0);
  const Vec g = smoothed_gradient(p2, k2, b2);
  CHECK(g(1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(g(0) == doctest::Approx(smoothed_gradient(p1, k1, pt(0.3))(0)));
  auto cr = smoothed_conjugate(p2, k2, pt2(1.0, 0.0));
  auto cr1 = smoothed_conjugate(p1, k1, pt(1.0));
  CHECK(cr.value == doctest::Approx(cr1.value).epsilon(1e-12));
  CHECK(cr.masses(0) == doctest::Approx(cr1.masses(0)).epsilon(1e-12));
  CHECK_THROWS_AS(smoothed_conjugate(p2, k2, pt2(1.0, 0.5)),
                  BoundaryAtomError);
}

TEST_CASE("2D Monte Carlo smoothing sanity") {
  SmoothingKernel k{1.0, 2};
  McConfig mc;
  mc.seed = 11;
  mc.samples = 40000;
  Mat a(4, 2);
  a << 1, 0, 0, 1, -1, 0, 0, -1;
  auto p = lower_convex_envelope(PwaPotential(a, Vec::Zero(4)));
  const Vec g0 = smoothed_gradient(p, k, pt2(0.0, 0.0), mc);
  CHECK(g0.norm() < 0.02);
  const Vec m = laguerre_masses(p, k, pt2(0.0, 0.0), mc);
  CHECK(m.sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (int j = 0; j < 4; ++j) CHECK(m(j) == doctest::Approx(0.25).epsilon(0.1));
  auto cr = smoothed_conjugate(p, k, pt2(0.0, 0.0), mc);
  CHECK(cr.converged);
  CHECK(cr.argpoint.norm() < 0.05);
  CHECK_THROWS_AS(smoothed_conjugate(p, k, pt2(1.0, 0.0), mc),
                  BoundaryAtomError);
}
