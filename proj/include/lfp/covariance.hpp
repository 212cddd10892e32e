#pragma once

#include "lfp/smoothing.hpp"

namespace lfp {

/// Trapezoidal quadrature over [lo, hi] on an evenly spaced grid.
struct QuadratureRule {
  Vector nodes;
  Vector weights;

  static QuadratureRule trapezoid(double lo, double hi, int size);
  static QuadratureRule trapezoid(const Vector& grid);
};

struct CovarianceConfig {
  int grid_size = 51;
  double bandwidth_mean = 0.0;  // 0 = per-entry default
  double bandwidth_cov = 0.0;   // 0 = pooled default
  int min_pair_count = 10;
  int workers = 0;              // 0 = hardware count
};

/// Smoothed second-moment field of the centered vector process x(t) (the
/// vectorized tensor). `full` is a symmetric (G*P) x (G*P) matrix whose
/// (g*P + j, h*P + k) element estimates E[x_j(s_g) x_k(s_h)]; symmetry of the
/// whole matrix encodes cov(j at s, k at t) == cov(k at t, j at s).
struct CovarianceField {
  Vector grid;
  Matrix full;
  double sigma2 = 0.0;
  MeanField mean;
  std::vector<Index> tensor_shape;

  Index num_entries() const { return shape_size(tensor_shape); }
  Index grid_size() const { return grid.size(); }

  /// P x P block at grid-node pair (g, h): first argument s_g on rows.
  Eigen::Block<const Matrix> slab(Index g, Index h) const;
};

/// Full pipeline: mean, centering, all pairwise surfaces, noise variance.
CovarianceField assemble(const Dataset& d, const CovarianceConfig& cfg);

/// 1 x P^2 row collapse at (g, h): element (j*P + k) is slab(g,h)(j, k).
/// Right-multiplied by Khatri-Rao columns a_r (x) k_r it contracts both
/// tensor-entry arguments at once.
RowVector collapse_f(const CovarianceField& cov, Index g, Index h);

/// p_d x (p_(-d) * P) collapse at (g, h) for 1-based mode d: element
/// (i, m*P + k) is the covariance between the unfolded entry X_(d)(s_g)[i, m]
/// and x_k(s_h).
Matrix collapse_d(const CovarianceField& cov, int mode, Index g, Index h);

/// Binary cache of the assembled field so repeated fits skip the smoothing.
void save_field(const CovarianceField& cov, const std::string& path);
CovarianceField load_field(const std::string& path);

}  // namespace lfp
