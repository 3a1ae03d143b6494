#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "sbmot/measures.hpp"

namespace sbm {

/// Centered Gaussian kernel gamma^s with covariance s * Identity.
struct SmoothingKernel {
  double variance = 1.0;
  int dim = 1;
};

/// Monte Carlo controls for the 2D paths. All randomness is derived from
/// `seed`; identical configs give identical results.
struct McConfig {
  std::uint64_t seed = 0;
  int samples = 8192;    // common-random-number batch size
  int max_iter = 600;    // ascent iterations for the 2D conjugate
  double tol = 1e-8;     // convergence tolerance on exact (1D/collinear) paths
};

/// Piecewise-affine convex potential: values psi_j on the support atoms of
/// a discrete measure. The function represented is the max-affine conjugate
/// v(b) = max_j <b, y_j> - psi_j; psi itself is +infinity off the atoms.
class PwaPotential {
 public:
  PwaPotential(Mat atoms, Vec values, bool envelope_flag = false);
  PwaPotential(const DiscreteMeasure& support, Vec values,
               bool envelope_flag = false);

  int dim() const { return static_cast<int>(atoms_.cols()); }
  int size() const { return static_cast<int>(values_.size()); }
  const Mat& atoms() const { return atoms_; }
  const Vec& values() const { return values_; }
  bool envelope_flag() const { return envelope_flag_; }

 private:
  Mat atoms_;
  Vec values_;
  bool envelope_flag_;
};

struct SmoothedValue {
  double value = 0.0;
  double std_error = 0.0;  // 0 on exact paths
};

struct ConjugateResult {
  double value = 0.0;
  Vec argpoint;       // the maximizing b* (Bass point preimage)
  Vec masses;         // Laguerre masses at b*, one per atom
  double std_error = 0.0;
  bool converged = true;
};

/// Anchored affine normalization [psi]^{x,eps}: the canonical representative
/// psi_j - offset - <g, y_j - x> with g a subgradient of the envelope at x
/// and offset the envelope value there, so the result is >= 0 on all atoms
/// and < eps at the anchor.
struct NormalizedPotential {
  PwaPotential base;
  Vec anchor;
  Vec subgradient;
  double offset = 0.0;
  double eps = 0.0;

  Vec normalized_values() const;
};

/// Largest convex function below the given values; idempotent; 1D by
/// monotone chain, 2D by per-atom interpolation LPs over the lifted points.
PwaPotential lower_convex_envelope(const PwaPotential& p);

/// v(b) = max_j <b, y_j> - psi_j with the smallest attaining index.
std::pair<double, int> conjugate_maxaffine(const PwaPotential& p, const Vec& b);

/// (v * gamma^s)(b) for v = psi^*. Exact via Phi/phi in 1D and for
/// collinear 2D supports; seeded Monte Carlo otherwise.
SmoothedValue smoothed_value(const PwaPotential& p, const SmoothingKernel& k,
                             const Vec& b, const McConfig& mc = {});

/// grad (v * gamma^s)(b) = sum_j y_j P(b + sqrt(s) Z in L_j); always a
/// convex combination of the atoms.
Vec smoothed_gradient(const PwaPotential& p, const SmoothingKernel& k,
                      const Vec& b, const McConfig& mc = {});

/// Laplacian of (v * gamma^s) at b (trace of the Hessian). Exact in 1D /
/// collinear 2D; central differences of the gradient otherwise.
double smoothed_laplacian(const PwaPotential& p, const SmoothingKernel& k,
                          const Vec& b, const McConfig& mc = {});

/// Cell masses P(b + sqrt(s) Z in L_j); atoms strictly above the envelope
/// get mass zero.
Vec laguerre_masses(const PwaPotential& p, const SmoothingKernel& k,
                    const Vec& b, const McConfig& mc = {});

/// (psi^* * gamma^s)^*(x) = sup_b <x,b> - (v * gamma^s)(b), with the
/// maximizer. Throws BoundaryAtomError when x is not strictly inside the
/// relative interior of the support hull. `warm` seeds the 2D ascent.
ConjugateResult smoothed_conjugate(const PwaPotential& p,
                                   const SmoothingKernel& k, const Vec& x,
                                   const McConfig& mc = {},
                                   const Vec* warm = nullptr);

NormalizedPotential normalize_at(const PwaPotential& p, const Vec& x,
                                 double eps);

}  // namespace sbm
