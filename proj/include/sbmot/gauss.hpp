#pragma once

#include <cstdint>
#include <random>

namespace sbm {

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal CDF, accurate to ~1e-16 via erfc.
double norm_cdf(double x);

/// Inverse standard normal CDF (Wichura's AS241, double precision).
/// p must lie in (0,1); p of 0 or 1 returns -+inf.
double norm_quantile(double p);

/// SplitMix64 step, used for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic random stream. Independent streams are derived from a
/// master seed and a stream index, so parallel consumers can draw without
/// sharing state: stream k of seed s is mt19937_64 seeded with
/// splitmix64(s + k * 0x9e3779b97f4a7c15).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  /// Uniform on (0,1), never returning an exact endpoint.
  double uniform();

  /// Standard normal via the inverse CDF (keeps the draw comonotone in
  /// the underlying uniform, which the tests rely on).
  double normal();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sbm
