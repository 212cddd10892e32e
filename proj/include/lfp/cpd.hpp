#pragma once

#include "lfp/covariance.hpp"

namespace lfp {

/// Alternating-least-squares CP decomposition of a dense tensor.
struct CpdFit {
  FactorSet factors;   // unit-norm columns
  Vector weights;      // absorbed column scales
  std::vector<double> objective_trace;  // squared Frobenius misfit per sweep
  int iterations = 0;
  bool converged = false;
};

CpdFit cpd_als(const DenseTensor& t, int rank, int max_iter, double tol, std::uint64_t seed);

/// Warm start for the functional solver, built from a CP decomposition of the
/// per-sample smoothed and centered grid tensor (samples x grid x entries).
struct CpdInit {
  Matrix phi0;                  // G x R, unit quadrature norm columns
  std::vector<Matrix> factors0; // p_d x R, unit columns
  Matrix lambda0;               // R x R score second moment
  int mean_fallbacks = 0;       // sample-entries smoothed from the mean curve
};

CpdInit cpd_init_from_dataset(const Dataset& d, const MeanField& mean, int rank,
                              const QuadratureRule& quad, std::uint64_t seed);

}  // namespace lfp
