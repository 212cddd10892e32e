#pragma once

#include "lfp/model.hpp"

namespace lfp {

struct SimConfig {
  Index n = 100;                    // samples
  int rank = 3;                     // latent components
  std::vector<Index> dims = {10};   // tabular mode sizes p_1..p_D
  int grid_size = 30;               // generator sampling grid K
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  int fourier_size = 5;             // basis functions behind each component
  Vector lambda_diag;               // empty = diag(R^2, ..., 1)
  double sigma2 = 1.0;              // measurement noise variance
  double snr = 0.0;                 // 0 = leave signal scale alone
  double sparsity = 0.0;            // proportion of cells removed, in [0, 1)
  std::uint64_t seed = 1;
  bool low_rank = true;             // false = unstructured per-entry curves
  int misspec_order = 3;            // Fourier order of the unstructured curves
};

struct GroundTruth {
  Vector grid;                      // K generator nodes
  Matrix phi;                       // K x R sampled component functions
  Matrix phi_coeff;                 // fourier_size x R basis coefficients
  std::vector<Matrix> factors;      // p_d x R
  Matrix lambda;                    // R x R diagonal
  Matrix scores;                    // n x R drawn latent scores
  std::vector<Matrix> trajectories; // per sample, K x P noiseless signal
  bool low_rank = true;
};

/// Orthonormal Fourier basis on [lo, hi] sampled at the given nodes:
/// constant, then sin/cos pairs of increasing frequency, `size` columns.
Matrix fourier_basis(const Vector& nodes, double lo, double hi, int size);

/// Draw a synthetic dataset and the exact truth behind it. Observations sit
/// on the regular generator grid; sparsity then removes cells at random.
std::pair<Dataset, GroundTruth> generate(const SimConfig& cfg);

/// Root mean squared deviation over all samples, nodes and entries.
double rmse(const std::vector<Matrix>& truth, const std::vector<Matrix>& estimate);

/// Largest canonical angle between the spans of u and v under the quadrature
/// inner product, in [0, pi/2].
double max_principal_angle(const Matrix& u, const Matrix& v, const QuadratureRule& quad);

struct BenchmarkCell {
  int rank = 3;
  double sparsity = 0.0;
  double snr = 0.0;
};

struct BenchmarkConfig {
  SimConfig base;                    // everything but rank/sparsity/snr/seed
  std::vector<BenchmarkCell> cells;
  int repeats = 1;
  std::uint64_t seed = 1;
  int workers = 0;                   // 0 = hardware count
  FitConfig fit;
};

struct BenchmarkRow {
  std::string method;   // "lf-parafac" or "cpd"
  int rank = 0;
  double sparsity = 0.0;
  double snr = 0.0;
  int repeat = 0;
  std::string metric;   // "rmse" or "angle"
  double value = 0.0;
  std::string status;   // "ok" or "failed: <reason>"
};

/// Generate-fit-score every (cell, repeat) pair with both the functional
/// solver and the mean-imputed grid CPD baseline. Failures become explicit
/// "failed" rows. Per-job RNG streams depend only on (seed, cell, repeat), so
/// worker count never changes the table.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& cfg);

}  // namespace lfp
