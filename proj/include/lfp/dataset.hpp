#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfp/tensor.hpp"

namespace lfp {

using BoolGrid = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct MeanField;  // smoothing.hpp

/// One subject's irregular observations. Row k of `values` holds the
/// vectorized tensor slice at times[k] (first tensor index fastest);
/// mask(k, j) says whether entry j was actually observed there.
struct LongitudinalSample {
  std::string id;
  std::vector<double> times;  // strictly increasing
  Matrix values;              // N_i x P
  BoolGrid mask;              // N_i x P

  Index num_times() const { return static_cast<Index>(times.size()); }
  Index observed_count() const;
};

/// A collection of samples sharing one tensor shape and one time domain.
struct Dataset {
  std::vector<LongitudinalSample> samples;
  std::vector<Index> tensor_shape;  // p_1 ... p_D
  double domain_lo = 0.0;
  double domain_hi = 1.0;

  Index num_samples() const { return static_cast<Index>(samples.size()); }
  Index num_entries() const { return shape_size(tensor_shape); }
  Index total_observed() const;

  /// Enforce structural invariants; throws DataError on violation.
  void validate() const;
};

/// Column label for vectorized entry j (0-based): 1-based multi-index joined
/// with dots, e.g. "2.3" for (j1=2, j2=3).
std::string entry_label(Index j, const std::vector<Index>& shape);

/// Long-format CSV reader: header `sample_id,time,<entry>...` where entry
/// columns are dot-joined 1-based multi-indices and empty cells mean missing.
/// A sidecar `<path>.json` ({"domain":[a,b],"shape":[p1,...]}) fixes domain and
/// shape; otherwise both are inferred. Any defect raises DataError naming the
/// row/column.
Dataset load_csv(const std::string& path);

/// Writer matching load_csv, with the sidecar. Doubles are printed with 17
/// significant digits so a round trip reproduces them bit for bit.
void save_csv(const Dataset& d, const std::string& path);

/// Remove exactly floor(proportion * total observed entries) observations,
/// chosen by a seeded shuffle that skips removals which would leave a sample
/// with fewer than two occupied time points. proportion must be in [0, 1).
Dataset sparsify(const Dataset& d, double proportion, std::uint64_t seed);

/// Subtract the mean surface, interpolated at each observation time, from
/// every observed entry.
Dataset center(const Dataset& d, const MeanField& mean);

}  // namespace lfp
