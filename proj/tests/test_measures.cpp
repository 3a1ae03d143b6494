#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "sbmot/errors.hpp"
#include "sbmot/gauss.hpp"
#include "sbmot/measures.hpp"
#include "sbmot/serialize.hpp"

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

}  // namespace

TEST_CASE("construction canonicalizes") {
  auto m = make1d({1.0, -1.0, 1.0 + 1e-15}, {0.25, 0.5, 0.25});
  CHECK(m.size() == 2);  // duplicates merged
  CHECK(m.atoms()(0, 0) == -1.0);
  CHECK(m.weights()(1) == doctest::Approx(0.5));
  CHECK(m.weights().sum() == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(make1d({0.0, 1.0}, {0.5, 0.6}), InvalidInputError);
  CHECK_THROWS_AS(make1d({0.0}, {-1.0}), InvalidInputError);
}

TEST_CASE("zero-weight atoms are dropped") {
  auto m = make1d({0.0, 1.0, 2.0}, {0.5, 0.0, 0.5});
  CHECK(m.size() == 2);
}

TEST_CASE("potential function") {
  auto d0 = DiscreteMeasure::dirac1d(0.0);
  CHECK(potential_function(d0, 2.0) == doctest::Approx(2.0));
  auto pm = make1d({-1.0, 1.0}, {0.5, 0.5});
  CHECK(potential_function(pm, 0.0) == doctest::Approx(1.0));
  // 200-atom lognormal discretization: E|e^{Z-1/2}| = 1 within 5e-3
  auto ln = quantile_discretize("lognormal_pos", 200);
  CHECK(potential_function(ln, 0.0) == doctest::Approx(1.0).epsilon(5e-3));
}

TEST_CASE("quantile discretizations") {
  auto g2 = quantile_discretize("gaussian", 2);
  CHECK(g2.atoms()(1, 0) ==
        doctest::Approx(norm_quantile(0.75)).epsilon(1e-15));
  CHECK(g2.weights()(0) == doctest::Approx(0.5));

  auto c4 = quantile_discretize("circle", 4);
  CHECK(c4.size() == 4);
  CHECK(c4.atoms().row(0).norm() == doctest::Approx(1.0));
  // mean preserved exactly for symmetric specs
  CHECK(c4.barycenter().norm() < 1e-12);
  auto g100 = quantile_discretize("gaussian", 100);
  CHECK(std::fabs(g100.barycenter()(0)) < 1e-12);

  auto ln = quantile_discretize("lognormal_pos", 200);
  CHECK(ln.barycenter()(0) > 0.99);
  CHECK(ln.barycenter()(0) < 1.01);

  CHECK_THROWS_AS(quantile_discretize("cauchy", 10), InvalidInputError);
  CHECK_THROWS_AS(quantile_discretize("gaussian", 1), InvalidInputError);
}

TEST_CASE("measure JSON round trip is bit exact") {
  auto ln = quantile_discretize("lognormal_pos", 37);
  const std::string text = measure_to_json(ln);
  auto back = measure_from_json(text);
  REQUIRE(back.size() == ln.size());
  for (int i = 0; i < ln.size(); ++i) {
    CHECK(back.atoms()(i, 0) == ln.atoms()(i, 0));
    CHECK(back.weights()(i) == ln.weights()(i));
  }
}

TEST_CASE("malformed JSON is rejected") {
  CHECK_THROWS_AS(measure_from_json("{"), InvalidInputError);
  CHECK_THROWS_AS(measure_from_json("{\"dim\":1,\"atoms\":[[0]]}"),
                  InvalidInputError);
  CHECK_THROWS_AS(
      measure_from_json(
          "{\"dim\":1,\"atoms\":[[0.0]],\"weights\":[\"x\"]}"),
      InvalidInputError);
  // weight sum off by more than 1e-9
  CHECK_THROWS_AS(
      measure_from_json(
          "{\"dim\":1,\"atoms\":[[0.0],[1.0]],\"weights\":[0.5,0.6]}"),
      InvalidInputError);
  // duplicate atoms merge
  auto m = measure_from_json(
      "{\"dim\":1,\"atoms\":[[1.0],[1.0]],\"weights\":[0.5,0.5]}");
  CHECK(m.size() == 1);
}

TEST_CASE("coupling invariants") {
  Mat mass(1, 2);
  mass << 0.5, 0.5;
  Coupling c(1, 2, mass);
  CHECK(c.row_sums()(0) == doctest::Approx(1.0));
  auto mu = DiscreteMeasure::dirac1d(0.0);
  auto nu = make1d({-1.0, 1.0}, {0.5, 0.5});
  CHECK(c.barycenter_defect(mu, nu) < 1e-12);
  CHECK(c.marginal_defect(mu, nu) < 1e-12);
  const std::string text = coupling_to_json(c);
  auto back = coupling_from_json(text);
  CHECK(back.mass()(0, 1) == 0.5);
}
