#pragma once

#include <stdexcept>

namespace sbm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed files, bad parameters, dimension mismatches.
struct InvalidInputError : Error {
  using Error::Error;
};

/// A source atom sits on the relative boundary of the target support hull;
/// the smoothed conjugate is only attained at infinity there.
struct BoundaryAtomError : Error {
  using Error::Error;
};

/// A coupling moves more mass across paving components than the tolerance
/// allows; usually means the dual solve was stopped too early.
struct CrossLeakError : Error {
  using Error::Error;
};

struct NonConvergenceError : Error {
  using Error::Error;
};

/// The marginals are not in convex order (no martingale transport exists).
struct ConvexOrderError : Error {
  using Error::Error;
};

}  // namespace sbm
