#pragma once

#include "lfp/dataset.hpp"

namespace lfp {

/// Smoothed per-entry mean curves on a shared evaluation grid.
/// values(g, j) is the mean of entry j at grid[g].
struct MeanField {
  Vector grid;
  Matrix values;     // G x P
  double bandwidth = 0.0;

  /// Linear interpolation in t (clamped to the grid ends) for entry j.
  double value_at(double t, Index entry) const;
};

/// One smoothed surface on grid x grid; values(g, h) pairs the first argument
/// with the row index.
struct SurfaceEstimate {
  Vector grid;
  Matrix values;     // G x G
  double bandwidth = 0.0;
};

/// Weighted local-linear smoother with an Epanechnikov kernel. Points are
/// (x[i], y[i]) with multiplicity weight w[i] (callers pre-aggregate duplicate
/// abscissae). A window whose design is degenerate is widened by doubling the
/// bandwidth up to three times before DegenerateDataError is thrown.
Vector local_linear_1d(const Vector& x, const Vector& y, const Vector& w, double bandwidth,
                       const Vector& grid);

/// Two-dimensional local plane fit with a product Epanechnikov kernel, same
/// widening rule; returns the fit on grid x grid.
Matrix local_linear_2d(const Vector& xs, const Vector& xt, const Vector& y, const Vector& w,
                       double bandwidth, const Vector& grid);

/// 1.5 times the mean gap of the distinct sorted values; the default bandwidth.
double default_bandwidth(const std::vector<double>& pooled_times);

/// Evenly spaced evaluation grid over the dataset's domain.
Vector make_grid(double lo, double hi, int size);

/// Pooled local-linear mean curve per tensor entry. bandwidth 0 picks the
/// default from each entry's own pooled observation times. Throws
/// InsufficientDataError naming any entry with no usable data.
MeanField estimate_mean(const Dataset& d, double bandwidth, const Vector& grid);

/// Smoothed covariance surface between vectorized entries j and k (0-based)
/// of a centered dataset. Products pool over all ordered within-sample time
/// pairs; same-time pairs are excluded only when j == k (their expectation
/// carries the noise variance). The j == k surface is symmetrized. Fewer than
/// min_pairs raw products raise InsufficientDataError naming the pair.
SurfaceEstimate estimate_pair_covariance(const Dataset& centered, Index j, Index k,
                                         double bandwidth, const Vector& grid, int min_pairs);

/// Noise variance: per entry, smooth the same-time squared residuals into a
/// diagonal curve and average its excess over the smoothed covariance
/// diagonal; then average entries and floor at 1e-12.
double estimate_sigma2(const Dataset& centered, const std::vector<SurfaceEstimate>& auto_covs,
                       double bandwidth, const Vector& grid);

/// Dump a surface as grid,grid,value triplets for outside inspection.
void dump_surface_csv(const SurfaceEstimate& s, const std::string& path);

}  // namespace lfp
