#include "lfp/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace lfp {

double MeanField::value_at(double t, Index entry) const {
  const Index G = grid.size();
  if (t <= grid[0]) return values(0, entry);
  if (t >= grid[G - 1]) return values(G - 1, entry);
  // grid is sorted; find the bracketing cell
  Index hi = static_cast<Index>(std::lower_bound(grid.data(), grid.data() + G, t) - grid.data());
  if (hi == 0) return values(0, entry);
  const Index lo = hi - 1;
  const double a = (t - grid[lo]) / (grid[hi] - grid[lo]);
  return (1.0 - a) * values(lo, entry) + a * values(hi, entry);
}

namespace {

inline double epanechnikov(double u) {
  const double a = std::abs(u);
  return a < 1.0 ? 0.75 * (1.0 - a * a) : 0.0;
}

constexpr int kMaxWidenings = 3;

}  // namespace

Vector local_linear_1d(const Vector& x, const Vector& y, const Vector& w, double bandwidth,
                       const Vector& grid) {
  if (x.size() != y.size() || x.size() != w.size())
    throw ConfigError("local_linear_1d: point arrays must have equal length");
  if (x.size() == 0) throw InsufficientDataError("local_linear_1d: no points");
  if (!(bandwidth > 0.0)) throw ConfigError("local_linear_1d: bandwidth must be positive");

  Vector out(grid.size());
  for (Index g = 0; g < grid.size(); ++g) {
    const double s = grid[g];
    bool done = false;
    for (int attempt = 0; attempt <= kMaxWidenings && !done; ++attempt) {
      const double h = bandwidth * static_cast<double>(1 << attempt);
      double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
      double first_x = 0;
      int distinct = 0;
      for (Index i = 0; i < x.size(); ++i) {
        const double dx = x[i] - s;
        const double k = epanechnikov(dx / h) * w[i];
        if (k <= 0.0) continue;
        if (distinct == 0) {
          first_x = x[i];
          distinct = 1;
        } else if (distinct == 1 && x[i] != first_x) {
          distinct = 2;
        }
        s0 += k;
        s1 += k * dx;
        s2 += k * dx * dx;
        t0 += k * y[i];
        t1 += k * dx * y[i];
      }
      if (distinct < 2) continue;
      const double det = s0 * s2 - s1 * s1;
      if (!(det > 1e-12 * std::max(s0 * s2, s1 * s1))) continue;
      out[g] = (s2 * t0 - s1 * t1) / det;
      done = true;
    }
    if (!done)
      throw DegenerateDataError("local_linear_1d: degenerate window at grid point " +
                                std::to_string(s) + " after local widening");
  }
  return out;
}

Matrix local_linear_2d(const Vector& xs, const Vector& xt, const Vector& y, const Vector& w,
                       double bandwidth, const Vector& grid) {
  if (xs.size() != xt.size() || xs.size() != y.size() || xs.size() != w.size())
    throw ConfigError("local_linear_2d: point arrays must have equal length");
  if (xs.size() == 0) throw InsufficientDataError("local_linear_2d: no points");
  if (!(bandwidth > 0.0)) throw ConfigError("local_linear_2d: bandwidth must be positive");

  const Index G = grid.size();
  Matrix out(G, G);
  for (Index g = 0; g < G; ++g) {
    for (Index hcol = 0; hcol < G; ++hcol) {
      const double s = grid[g];
      const double t = grid[hcol];
      bool done = false;
      for (int attempt = 0; attempt <= kMaxWidenings && !done; ++attempt) {
        const double h = bandwidth * static_cast<double>(1 << attempt);
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
        int live = 0;
        for (Index i = 0; i < xs.size(); ++i) {
          const double ds = xs[i] - s;
          const double dt = xt[i] - t;
          const double k = epanechnikov(ds / h) * epanechnikov(dt / h) * w[i];
          if (k <= 0.0) continue;
          ++live;
          const Eigen::Vector3d row(1.0, ds, dt);
          m.noalias() += k * row * row.transpose();
          rhs.noalias() += k * y[i] * row;
        }
        if (live < 3) continue;
        Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
        if (!lu.isInvertible()) continue;
        out(g, hcol) = lu.solve(rhs)[0];
        done = true;
      }
      if (!done)
        throw DegenerateDataError("local_linear_2d: degenerate window at grid point (" +
                                  std::to_string(s) + ", " + std::to_string(t) +
                                  ") after local widening");
    }
  }
  return out;
}

double default_bandwidth(const std::vector<double>& pooled_times) {
  std::vector<double> t = pooled_times;
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  if (t.size() < 2)
    throw InsufficientDataError("default bandwidth needs at least two distinct time points");
  const double mean_gap = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  return 1.5 * mean_gap;
}

Vector make_grid(double lo, double hi, int size) {
  if (size < 2) throw ConfigError("grid size must be at least 2");
  if (!(lo < hi)) throw ConfigError("grid domain must have positive length");
  return Vector::LinSpaced(size, lo, hi);
}

namespace {

// bit-exact keying of observation times, which repeat verbatim across samples
struct TimeKeyHash {
  size_t operator()(std::uint64_t k) const { return std::hash<std::uint64_t>{}(k); }
};

inline std::uint64_t key1(double t) {
  std::uint64_t k;
  std::memcpy(&k, &t, sizeof(k));
  return k;
}

struct Accum {
  double sum = 0.0;
  double count = 0.0;
};

}  // namespace

MeanField estimate_mean(const Dataset& d, double bandwidth, const Vector& grid) {
  const Index P = d.num_entries();
  MeanField mean;
  mean.grid = grid;
  mean.values = Matrix::Zero(grid.size(), P);
  double bw_sum = 0.0;

  for (Index j = 0; j < P; ++j) {
    std::unordered_map<std::uint64_t, Accum, TimeKeyHash> agg;
    std::vector<double> pooled;
    for (const auto& s : d.samples) {
      for (Index k = 0; k < s.num_times(); ++k) {
        if (!s.mask(k, j)) continue;
        const double t = s.times[static_cast<size_t>(k)];
        auto& a = agg[key1(t)];
        if (a.count == 0.0) pooled.push_back(t);
        a.sum += s.values(k, j);
        a.count += 1.0;
      }
    }
    if (pooled.empty())
      throw InsufficientDataError("mean estimation: entry " + entry_label(j, d.tensor_shape) +
                                  " has no observations");
    if (pooled.size() < 2)
      throw InsufficientDataError("mean estimation: entry " + entry_label(j, d.tensor_shape) +
                                  " has a single distinct time point");
    const double h = bandwidth > 0.0 ? bandwidth : default_bandwidth(pooled);
    bw_sum += h;
    std::sort(pooled.begin(), pooled.end());
    Vector x(static_cast<Index>(pooled.size())), y(x.size()), w(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const Accum& a = agg[key1(pooled[static_cast<size_t>(i)])];
      x[i] = pooled[static_cast<size_t>(i)];
      y[i] = a.sum / a.count;
      w[i] = a.count;
    }
    mean.values.col(j) = local_linear_1d(x, y, w, h, grid);
  }
  mean.bandwidth = bw_sum / static_cast<double>(P);
  return mean;
}

namespace {

using TimePair = std::pair<std::uint64_t, std::uint64_t>;

struct TimePairHash {
  size_t operator()(const TimePair& p) const {
    std::uint64_t a = p.first;
    a ^= p.second + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2);
    return std::hash<std::uint64_t>{}(a);
  }
};

struct PairAccum {
  double s = 0, t = 0, sum = 0, count = 0;
};

}  // namespace

SurfaceEstimate estimate_pair_covariance(const Dataset& centered, Index j, Index k,
                                         double bandwidth, const Vector& grid, int min_pairs) {
  const Index P = centered.num_entries();
  if (j < 0 || j >= P || k < 0 || k >= P)
    throw ConfigError("estimate_pair_covariance: entry index out of range");

  std::unordered_map<TimePair, PairAccum, TimePairHash> agg;
  std::vector<double> pooled;
  long raw = 0;
  for (const auto& s : centered.samples) {
    const Index N = s.num_times();
    for (Index a = 0; a < N; ++a) {
      if (!s.mask(a, j)) continue;
      const double ta = s.times[static_cast<size_t>(a)];
      for (Index b = 0; b < N; ++b) {
        if (j == k && a == b) continue;  // same-time products carry the noise
        if (!s.mask(b, k)) continue;
        const double tb = s.times[static_cast<size_t>(b)];
        auto& acc = agg[TimePair(key1(ta), key1(tb))];
        if (acc.count == 0.0) {
          acc.s = ta;
          acc.t = tb;
        }
        acc.sum += s.values(a, j) * s.values(b, k);
        acc.count += 1.0;
        ++raw;
      }
      pooled.push_back(ta);
    }
  }
  if (raw < min_pairs)
    throw InsufficientDataError("covariance pair (" + entry_label(j, centered.tensor_shape) +
                                ", " + entry_label(k, centered.tensor_shape) + "): only " +
                                std::to_string(raw) + " raw products, need " +
                                std::to_string(min_pairs));

  const double h = bandwidth > 0.0 ? bandwidth : default_bandwidth(pooled);
  Vector xs(static_cast<Index>(agg.size())), xt(xs.size()), y(xs.size()), w(xs.size());
  Index i = 0;
  for (const auto& [key, acc] : agg) {
    (void)key;
    xs[i] = acc.s;
    xt[i] = acc.t;
    y[i] = acc.sum / acc.count;
    w[i] = acc.count;
    ++i;
  }
  SurfaceEstimate est;
  est.grid = grid;
  est.bandwidth = h;
  est.values = local_linear_2d(xs, xt, y, w, h, grid);
  if (j == k) est.values = 0.5 * (est.values + est.values.transpose()).eval();
  return est;
}

double estimate_sigma2(const Dataset& centered, const std::vector<SurfaceEstimate>& auto_covs,
                       double bandwidth, const Vector& grid) {
  const Index P = centered.num_entries();
  if (static_cast<Index>(auto_covs.size()) != P)
    throw ConfigError("estimate_sigma2: need one auto-covariance surface per entry");
  double total = 0.0;
  for (Index j = 0; j < P; ++j) {
    std::unordered_map<std::uint64_t, Accum, TimeKeyHash> agg;
    std::vector<double> pooled;
    for (const auto& s : centered.samples) {
      for (Index a = 0; a < s.num_times(); ++a) {
        if (!s.mask(a, j)) continue;
        const double t = s.times[static_cast<size_t>(a)];
        auto& acc = agg[key1(t)];
        if (acc.count == 0.0) pooled.push_back(t);
        acc.sum += s.values(a, j) * s.values(a, j);
        acc.count += 1.0;
      }
    }
    if (pooled.size() < 2)
      throw InsufficientDataError("noise variance: entry " + entry_label(j, centered.tensor_shape) +
                                  " has under two distinct time points");
    const double h = bandwidth > 0.0 ? bandwidth : default_bandwidth(pooled);
    std::sort(pooled.begin(), pooled.end());
    Vector x(static_cast<Index>(pooled.size())), y(x.size()), w(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const Accum& a = agg[key1(pooled[static_cast<size_t>(i)])];
      x[i] = pooled[static_cast<size_t>(i)];
      y[i] = a.sum / a.count;
      w[i] = a.count;
    }
    const Vector vj = local_linear_1d(x, y, w, h, grid);
    total += (vj - auto_covs[static_cast<size_t>(j)].values.diagonal()).mean();
  }
  return std::max(total / static_cast<double>(P), 1e-12);
}

void dump_surface_csv(const SurfaceEstimate& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "s,t,value\n";
  char buf[128];
  for (Index g = 0; g < s.grid.size(); ++g)
    for (Index h = 0; h < s.grid.size(); ++h) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", s.grid[g], s.grid[h], s.values(g, h));
      out << buf;
    }
}

}  // namespace lfp
