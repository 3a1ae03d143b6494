#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sbmot/bassim.hpp"
#include "sbmot/errors.hpp"
#include "sbmot/examples.hpp"
#include "sbmot/gauss.hpp"
#include "sbmot/measures.hpp"
#include "sbmot/paving.hpp"

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

BassModel two_point_model() {
  // v = |b|, alpha = delta_0: the Bass martingale of (delta_0, (d_-1+d_1)/2)
  Mat a(2, 1);
  a << -1.0, 1.0;
  return BassModel{PwaPotential(a, Vec::Zero(2), true),
                   DiscreteMeasure::dirac1d(0.0), 1};
}

}  // namespace

TEST_CASE("single-atom model gives constant paths") {
  Mat a(1, 1);
  a << 0.7;
  BassModel m{PwaPotential(a, Vec::Zero(1), true),
              DiscreteMeasure::dirac1d(0.0), 1};
  SimulateConfig sc;
  sc.n_paths = 200;
  sc.steps = 16;
  sc.seed = 5;
  PathBundle pb = simulate(m, sc);
  for (const auto& st : pb.states)
    CHECK((st.array() - 0.7).abs().maxCoeff() < 1e-14);
  CHECK(pb.trace_estimates.cwiseAbs().maxCoeff() < 1e-14);
  auto vr = verify_value(pb, 0.0);
  CHECK(vr.pass);
}

TEST_CASE("two-point model: marginals, martingale property, trace value") {
  BassModel m = two_point_model();
  SimulateConfig sc;
  sc.n_paths = 60000;
  sc.steps = 64;
  sc.seed = 11;
  PathBundle pb = simulate(m, sc);

  // terminal law (1/2, 1/2), exact atom hits
  auto nu = make1d({-1.0, 1.0}, {0.5, 0.5});
  auto term = verify_terminal_marginal(pb, nu);
  CHECK(term.pass);
  CHECK(term.max_atom_miss < 1e-12);

  // initial law: M_0 = 0 (= grad(v*gamma)(0)), matching mu = delta_0
  auto mu = DiscreteMeasure::dirac1d(0.0);
  auto init = verify_initial_marginal(pb, mu);
  CHECK(init.pass);

  // E M_{1/2} = 0 within 3 sigma
  const Mat& mid = pb.states[32];
  const double mean_mid = mid.col(0).mean();
  const double sd_mid = std::sqrt(
      (mid.col(0).array() - mean_mid).square().sum() / sc.n_paths);
  CHECK(std::fabs(mean_mid) <= 3.0 * sd_mid / std::sqrt(1.0 * sc.n_paths));

  // support confinement: inside the closed hull of the nu-atoms
  for (const auto& st : pb.states) {
    CHECK(st.minCoeff() >= -1.0 - 1e-12);
    CHECK(st.maxCoeff() <= 1.0 + 1e-12);
  }

  auto mart = verify_martingale(pb);
  CHECK(mart.pass);
  CHECK(!mart.inconclusive);
  CHECK(mart.tests > 0);

  auto val = verify_value(pb, kSqrt2OverPi);
  CHECK(val.pass);
  CHECK(val.mean == doctest::Approx(kSqrt2OverPi).epsilon(3e-2));
}

TEST_CASE("planted drift fails the martingale check") {
  BassModel m = two_point_model();
  SimulateConfig sc;
  sc.n_paths = 20000;
  sc.steps = 16;
  sc.seed = 3;
  PathBundle pb = simulate(m, sc);
  for (size_t k = 0; k < pb.states.size(); ++k)
    pb.states[k].array() += 0.1 * pb.times(k);  // drift injection
  auto mart = verify_martingale(pb);
  CHECK(!mart.pass);
  CHECK(mart.max_abs_z > 10.0);
}

TEST_CASE("tower property: E[M_1 | M_t] = M_t via binned regression") {
  BassModel m = two_point_model();
  SimulateConfig sc;
  sc.n_paths = 40000;
  sc.steps = 8;
  sc.seed = 21;
  PathBundle pb = simulate(m, sc);
  const int K = static_cast<int>(pb.times.size()) - 1;
  for (int k = 1; k < K; ++k) {
    // bin on M_t, compare bin means of M_1 - M_t against zero
    std::vector<int> order(sc.n_paths);
    std::iota(order.begin(), order.end(), 0);
    const Mat& cur = pb.states[k];
    const Mat& fin = pb.states[K];
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return cur(a, 0) < cur(b, 0); });
    const int bins = 6, per = sc.n_paths / bins;
    for (int bin = 0; bin < bins; ++bin) {
      double s = 0.0, ss = 0.0;
      for (int idx = bin * per; idx < (bin + 1) * per; ++idx) {
        const double inc = fin(order[idx], 0) - cur(order[idx], 0);
        s += inc;
        ss += inc * inc;
      }
      const double mean = s / per;
      const double se =
          std::sqrt(std::max(1e-300, (ss / per - mean * mean) / per));
      CHECK(std::fabs(mean) <= 4.5 * se);  // family-corrected 3-sigma level
    }
  }
}

TEST_CASE("time consistency: path sampling matches direct pushforward") {
  BassModel m = two_point_model();
  SimulateConfig sc;
  sc.n_paths = 1500;
  sc.steps = 8;
  sc.seed = 33;
  PathBundle pb = simulate(m, sc);
  // direct route: B_t ~ alpha * gamma^t, M_t = grad(v * gamma^{1-t})(B_t)
  const double t = 0.5;
  RngStream rng(777, 0);
  Mat direct(sc.n_paths, 1);
  const SmoothingKernel k{1.0 - t, 1};
  for (int p = 0; p < sc.n_paths; ++p) {
    Vec b(1);
    b << std::sqrt(t) * rng.normal();
    direct(p, 0) = smoothed_gradient(m.v_potential, k, b)(0);
  }
  auto rep = energy_two_sample_test(pb.states[4], direct, 99, 150);
  CHECK(rep.pass);
  // sanity: the test does reject a wrong law
  Mat shifted = direct.array() + 0.2;
  auto rep2 = energy_two_sample_test(pb.states[4], shifted, 99, 150);
  CHECK(!rep2.pass);
}

TEST_CASE("collinear 2D model stays on its segment") {
  Mat a(2, 2);
  a << 0.5, 0.0, 1.5, 0.0;
  Mat alpha_atoms(1, 2);
  alpha_atoms << 0.0, 0.0;
  BassModel m{PwaPotential(a, Vec::Zero(2), true),
              DiscreteMeasure(2, alpha_atoms, Vec::Ones(1)), 2};
  SimulateConfig sc;
  sc.n_paths = 4000;
  sc.steps = 16;
  sc.seed = 9;
  PathBundle pb = simulate(m, sc);
  for (const auto& st : pb.states) {
    CHECK(st.col(1).cwiseAbs().maxCoeff() < 1e-12);  // on the x-axis
    CHECK(st.col(0).minCoeff() >= 0.5 - 1e-12);
    CHECK(st.col(0).maxCoeff() <= 1.5 + 1e-12);
  }
  // terminal law concentrates on the two atoms with equal-ish masses:
  // grad(v*gamma)(0 on the segment param scale)... masses from the cell split
  auto nu2 = DiscreteMeasure(2, a, Vec::Constant(2, 0.5));
  auto term = verify_terminal_marginal(pb, nu2);
  // the model was not fitted to nu2, so only check the atom hits are exact
  CHECK(term.max_atom_miss < 1e-12);
}

TEST_CASE("fitted ex61 component model simulates to its own marginals") {
  DiscreteMeasure pos = examples::tapered_lognormal(50, 6, 0.75, false);
  auto mu = DiscreteMeasure::dirac1d(1.0);
  DecomposeResult dec = decompose(mu, pos);
  REQUIRE(dec.paving.components.size() == 1);
  const auto& c = dec.paving.components[0];
  SimulateConfig sc;
  sc.n_paths = 60000;
  sc.steps = 64;
  sc.seed = 17;
  PathBundle pb = simulate(*c.bass->model, sc);
  auto term = verify_terminal_marginal(pb, *c.nu_local);
  CHECK(term.pass);
  auto init = verify_initial_marginal(pb, *c.mu_local);
  CHECK(init.pass);
  auto mart = verify_martingale(pb);
  CHECK(mart.pass);
  auto val = verify_value(pb, c.bass->local_primal);
  CHECK(val.pass);
}

TEST_CASE("verify_value rejects a coarse grid") {
  BassModel m = two_point_model();
  SimulateConfig sc;
  sc.n_paths = 100;
  sc.steps = 8;
  PathBundle pb = simulate(m, sc);
  CHECK_THROWS_AS(verify_value(pb, 0.5), InvalidInputError);
}

TEST_CASE("path bundle CSV export") {
  BassModel m = two_point_model();
  SimulateConfig sc;
  sc.n_paths = 10;
  sc.steps = 4;
  PathBundle pb = simulate(m, sc);
  const std::string csv = path_bundle_to_csv(pb, 5);
  CHECK(csv.find("time,path,m0,b0") == 0);
}
