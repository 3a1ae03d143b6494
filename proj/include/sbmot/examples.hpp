#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sbmot/paving.hpp"

namespace sbm::examples {

/// Mirrored geometric-Brownian-motion pair: mu = (delta_{-1} + delta_1)/2,
/// nu = the two mirrored lognormal laws, discretized per side by midpoint
/// quantiles over equal-mass bins whose outermost masses taper geometrically
/// (depth/ratio below), atoms rescaled to unit barycenter. The taper keeps
/// both the maximal covariance and the dual-potential shape of the
/// discretization close to the continuum at moderate n.
DiscreteMeasure tapered_lognormal(int n, int taper_depth, double taper_ratio,
                                  bool negative);

struct Ex61Config {
  int n_per_side = 200;
  int taper_depth = 10;
  double taper_ratio = 0.75;
  DecomposeConfig decompose;
  std::uint64_t seed = 1;
};

struct Ex61Result {
  DiscreteMeasure mu, nu;
  DecomposeResult dec;
  double max_secdiff_error = 0.0;  // fitted vs analytic psi, affine-free
  std::vector<double> component_primal;

  Ex61Result(DiscreteMeasure m, DiscreteMeasure n, DecomposeResult d)
      : mu(std::move(m)), nu(std::move(n)), dec(std::move(d)) {}
};

Ex61Result run_ex61(const Ex61Config& cfg = {});

/// Analytic dual potential of the positive lognormal component,
/// psi(y) = y (log y - 1/2), mirrored for y < 0.
double ex61_analytic_psi(double y);

/// Slope jumps of values on a sorted 1D grid (affine-invariant shape).
Vec second_differences(const Vec& y_sorted, const Vec& values);

// --- circles ---

DiscreteMeasure circle_measure(int n, double r, double phase = 0.0);
DiscreteMeasure two_ring_measure(int n, double r_inner, double r_outer,
                                 double phase = 0.0);

/// Median of |rho e + Z|, Z standard 2D normal (the kink position of the
/// radial Brenier profile).
double circles_k(double rho);

/// The outer radius R(rho) solving the Bass barycenter condition
/// E[(1/2 1_{|X|<k} + R 1_{|X|>=k}) X_2/|X|] = 1 with X ~ N(rho e_2, I_2).
double circles_R(double rho);

/// Monte Carlo estimates of the same two quantities, for cross-checking.
void circles_kR_mc(double rho, int samples, std::uint64_t seed, double* k_out,
                   double* R_out);

struct CirclesConfig {
  std::vector<double> rho_grid{1.0, 2.0, 4.0};
  int n_angles = 24;
  int mc_samples = 100000;
  std::uint64_t seed = 1;
  bool run_decompose_threshold = true;  // R = 3/2 aligned
  bool run_decompose_above = true;      // R = R(max rho), one component
  int sim_paths = 20000;
  DecomposeConfig decompose_above;

  CirclesConfig() {
    decompose_above.component_gap_tol = 0.05;
    decompose_above.global.grad_tol = 2e-3;
    decompose_above.global.max_iter = 400;
    decompose_above.global.mc.samples = 4096;
    decompose_above.global.mc.max_iter = 200;
    decompose_above.local = decompose_above.global;
  }
};

struct CirclesResult {
  std::vector<double> rho, k_values, r_values, k_mc, r_mc;
  bool feasible_at_threshold = false;  // R = 1.5
  bool feasible_below = true;          // R = 1.4, expected false
  int components_at_threshold = 0;     // expected n_angles
  bool threshold_cells_radial = false; // cells are the (x/2, 3x/2) segments
  int components_above = 0;            // expected 1
  bool sim_pass = false;
  std::string summary;
};

CirclesResult run_circles(const CirclesConfig& cfg = {});

}  // namespace sbm::examples
