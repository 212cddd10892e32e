#include "lfp/covariance.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "lfp/parallel.hpp"

namespace lfp {

QuadratureRule QuadratureRule::trapezoid(double lo, double hi, int size) {
  return trapezoid(make_grid(lo, hi, size));
}

QuadratureRule QuadratureRule::trapezoid(const Vector& grid) {
  const Index G = grid.size();
  if (G < 2) throw ConfigError("quadrature needs at least two nodes");
  QuadratureRule q;
  q.nodes = grid;
  q.weights = Vector::Zero(G);
  for (Index g = 0; g + 1 < G; ++g) {
    const double half = 0.5 * (grid[g + 1] - grid[g]);
    q.weights[g] += half;
    q.weights[g + 1] += half;
  }
  return q;
}

Eigen::Block<const Matrix> CovarianceField::slab(Index g, Index h) const {
  const Index P = num_entries();
  return full.block(g * P, h * P, P, P);
}

CovarianceField assemble(const Dataset& d, const CovarianceConfig& cfg) {
  d.validate();
  CovarianceField cov;
  cov.tensor_shape = d.tensor_shape;
  cov.grid = make_grid(d.domain_lo, d.domain_hi, cfg.grid_size);
  cov.mean = estimate_mean(d, cfg.bandwidth_mean, cov.grid);
  const Dataset centered = center(d, cov.mean);

  const Index P = d.num_entries();
  const Index G = cov.grid.size();

  // upper-triangle pairs (j <= k), smoothed independently and in parallel
  std::vector<std::pair<Index, Index>> pairs;
  for (Index j = 0; j < P; ++j)
    for (Index k = j; k < P; ++k) pairs.emplace_back(j, k);
  std::vector<SurfaceEstimate> surf(pairs.size());
  parallel_for(static_cast<long>(pairs.size()), cfg.workers, [&](long i) {
    surf[static_cast<size_t>(i)] =
        estimate_pair_covariance(centered, pairs[static_cast<size_t>(i)].first,
                                 pairs[static_cast<size_t>(i)].second, cfg.bandwidth_cov,
                                 cov.grid, cfg.min_pair_count);
  });

  // mirror each surface into the big symmetric matrix:
  // entry (g*P + j, h*P + k) = S_jk(s_g, s_h), and S_kj(s, t) = S_jk(t, s)
  cov.full = Matrix::Zero(G * P, G * P);
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto [j, k] = pairs[i];
    const Matrix& s = surf[i].values;
    for (Index g = 0; g < G; ++g)
      for (Index h = 0; h < G; ++h) {
        cov.full(g * P + j, h * P + k) = s(g, h);
        cov.full(g * P + k, h * P + j) = s(h, g);
      }
  }

  std::vector<SurfaceEstimate> autos;
  autos.reserve(static_cast<size_t>(P));
  for (Index j = 0; j < P; ++j) {
    // pair (j, j) sits at offset j*P + j - j*(j+1)/2 in the triangle walk
    const size_t at = static_cast<size_t>(j) * static_cast<size_t>(P) -
                      static_cast<size_t>(j) * static_cast<size_t>(j - 1) / 2;
    autos.push_back(surf[at]);
  }
  cov.sigma2 = estimate_sigma2(centered, autos, cfg.bandwidth_cov, cov.grid);
  return cov;
}

RowVector collapse_f(const CovarianceField& cov, Index g, Index h) {
  const Index P = cov.num_entries();
  RowVector row(P * P);
  const auto s = cov.slab(g, h);
  for (Index j = 0; j < P; ++j)
    for (Index k = 0; k < P; ++k) row[j * P + k] = s(j, k);
  return row;
}

Matrix collapse_d(const CovarianceField& cov, int mode, Index g, Index h) {
  const std::vector<Index>& shape = cov.tensor_shape;
  if (mode < 1 || mode > static_cast<int>(shape.size()))
    throw ConfigError("collapse mode out of range");
  const Index P = cov.num_entries();
  const Index pd = shape[static_cast<size_t>(mode - 1)];
  const Index rest = P / pd;
  Index row_stride = 1;  // flat-buffer stride of the mode-d coordinate
  for (int d = 1; d < mode; ++d) row_stride *= shape[static_cast<size_t>(d - 1)];
  Matrix out(pd, rest * P);
  const auto s = cov.slab(g, h);
  for (Index j = 0; j < P; ++j) {
    // split flat index j into the mode-d coordinate and the unfolding column
    const Index i_d = (j / row_stride) % pd;
    const Index m = j % row_stride + (j / (row_stride * pd)) * row_stride;
    for (Index k = 0; k < P; ++k) out(i_d, m * P + k) = s(j, k);
  }
  return out;
}

namespace {
constexpr char kMagic[8] = {'l', 'f', 'p', 'c', 'o', 'v', '0', '1'};

void write_block(std::ofstream& out, const double* p, size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::ifstream& in, double* p, size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw DataError("covariance cache: truncated file");
}
}  // namespace

void save_field(const CovarianceField& cov, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::int64_t order = static_cast<std::int64_t>(cov.tensor_shape.size());
  const std::int64_t G = cov.grid_size();
  out.write(reinterpret_cast<const char*>(&order), sizeof(order));
  for (Index p : cov.tensor_shape) {
    const std::int64_t v = p;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  out.write(reinterpret_cast<const char*>(&G), sizeof(G));
  write_block(out, cov.grid.data(), static_cast<size_t>(G));
  write_block(out, &cov.sigma2, 1);
  write_block(out, &cov.mean.bandwidth, 1);
  write_block(out, cov.mean.values.data(), static_cast<size_t>(cov.mean.values.size()));
  write_block(out, cov.full.data(), static_cast<size_t>(cov.full.size()));
  if (!out) throw DataError("failed while writing '" + path + "'");
}

CovarianceField load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("'" + path + "' is not a covariance cache");
  std::int64_t order = 0;
  in.read(reinterpret_cast<char*>(&order), sizeof(order));
  if (!in || order < 1 || order > 16) throw DataError("covariance cache: bad tensor order");
  CovarianceField cov;
  for (std::int64_t d = 0; d < order; ++d) {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in || v < 1) throw DataError("covariance cache: bad shape");
    cov.tensor_shape.push_back(static_cast<Index>(v));
  }
  std::int64_t G = 0;
  in.read(reinterpret_cast<char*>(&G), sizeof(G));
  if (!in || G < 2) throw DataError("covariance cache: bad grid");
  const Index P = cov.num_entries();
  cov.grid = Vector::Zero(G);
  read_block(in, cov.grid.data(), static_cast<size_t>(G));
  read_block(in, &cov.sigma2, 1);
  cov.mean.grid = cov.grid;
  read_block(in, &cov.mean.bandwidth, 1);
  cov.mean.values = Matrix::Zero(G, P);
  read_block(in, cov.mean.values.data(), static_cast<size_t>(cov.mean.values.size()));
  cov.full = Matrix::Zero(G * P, G * P);
  read_block(in, cov.full.data(), static_cast<size_t>(cov.full.size()));
  return cov;
}

}  // namespace lfp
