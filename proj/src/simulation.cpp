#include "lfp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "detail.hpp"
#include "lfp/inference.hpp"
#include "lfp/parallel.hpp"

namespace lfp {

using detail::mix_seed;

namespace {

void validate(const SimConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("generate: need at least one sample");
  if (cfg.rank < 1) throw ConfigError("generate: rank must be positive");
  if (cfg.dims.empty()) throw ConfigError("generate: at least one tabular mode required");
  for (Index p : cfg.dims)
    if (p < 1) throw ConfigError("generate: tabular dims must be positive");
  if (cfg.grid_size < 2) throw ConfigError("generate: grid needs at least two nodes");
  if (!(cfg.domain_hi > cfg.domain_lo)) throw ConfigError("generate: empty time domain");
  if (cfg.fourier_size < 1) throw ConfigError("generate: fourier_size must be positive");
  if (cfg.sigma2 < 0.0) throw ConfigError("generate: sigma2 must be non-negative");
  if (cfg.snr < 0.0) throw ConfigError("generate: snr must be non-negative");
  if (cfg.sparsity < 0.0 || cfg.sparsity >= 1.0)
    throw ConfigError("generate: sparsity must lie in [0, 1)");
  if (cfg.misspec_order < 1) throw ConfigError("generate: misspec_order must be positive");
  if (cfg.lambda_diag.size() != 0) {
    if (cfg.lambda_diag.size() != cfg.rank)
      throw ConfigError("generate: lambda_diag length must equal the rank");
    for (Index r = 0; r < cfg.lambda_diag.size(); ++r) {
      if (!(cfg.lambda_diag(r) > 0.0))
        throw ConfigError("generate: lambda_diag entries must be positive");
      if (r > 0 && !(cfg.lambda_diag(r - 1) > cfg.lambda_diag(r)))
        throw ConfigError("generate: lambda_diag must be strictly descending");
    }
  }
}

std::string sample_name(Index i, Index n) {
  int width = 1;
  for (Index v = n; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(i + 1);
  return "s" + std::string(static_cast<size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0') + digits;
}

// Index of the generator grid node equal to t (observations sit on the grid).
Index grid_node(double t, const Vector& grid) {
  const double step = (grid(grid.size() - 1) - grid(0)) / static_cast<double>(grid.size() - 1);
  const Index k = static_cast<Index>(std::llround((t - grid(0)) / step));
  if (k < 0 || k >= grid.size() || std::abs(grid(k) - t) > 1e-9 * std::max(1.0, std::abs(t)))
    throw DataError("benchmark: observation time off the generator grid");
  return k;
}

struct MethodScores {
  double rmse_value = std::numeric_limits<double>::quiet_NaN();
  double angle_value = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

MethodScores score_lf(const Dataset& data, const GroundTruth& truth, int rank,
                      const FitConfig& base_fit, std::uint64_t seed) {
  MethodScores out;
  try {
    FitConfig fc = base_fit;
    fc.seed = seed;
    auto [model, report] = fit(data, rank, fc);

    std::vector<double> times(truth.grid.data(), truth.grid.data() + truth.grid.size());
    std::vector<Matrix> recons;
    recons.reserve(data.samples.size());
    for (const auto& s : data.samples) {
      const ScorePrediction p = predict_scores(model, s);
      recons.push_back(reconstruct(model, p.u_hat, times));
    }
    out.rmse_value = rmse(truth.trajectories, recons);
    if (truth.low_rank) {
      const QuadratureRule quad = QuadratureRule::trapezoid(truth.grid);
      out.angle_value = max_principal_angle(truth.phi, model.phi_at(times), quad);
    }
  } catch (const Error& e) {
    out.status = std::string("failed: ") + e.what();
  }
  return out;
}

MethodScores score_cpd(const Dataset& data, const GroundTruth& truth, int rank,
                       std::uint64_t seed) {
  MethodScores out;
  try {
    const Index n = data.num_samples();
    const Index k_nodes = truth.grid.size();
    const Index p = data.num_entries();

    // Mean-imputed grid tensor (samples x nodes x tabular dims): observed
    // cells first, then the per-(node, entry) observed mean, then the entry
    // mean, then zero.
    Matrix cell_sum = Matrix::Zero(k_nodes, p);
    Matrix cell_count = Matrix::Zero(k_nodes, p);
    Vector entry_sum = Vector::Zero(p);
    Vector entry_count = Vector::Zero(p);
    for (const auto& s : data.samples) {
      for (Index row = 0; row < s.num_times(); ++row) {
        const Index k = grid_node(s.times[static_cast<size_t>(row)], truth.grid);
        for (Index j = 0; j < p; ++j) {
          if (!s.mask(row, j)) continue;
          cell_sum(k, j) += s.values(row, j);
          cell_count(k, j) += 1.0;
          entry_sum(j) += s.values(row, j);
          entry_count(j) += 1.0;
        }
      }
    }

    std::vector<Index> shape;
    shape.push_back(n);
    shape.push_back(k_nodes);
    for (Index pd : data.tensor_shape) shape.push_back(pd);
    DenseTensor grid_tensor(shape);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < k_nodes; ++k)
        for (Index j = 0; j < p; ++j) {
          double v = 0.0;
          if (cell_count(k, j) > 0.0)
            v = cell_sum(k, j) / cell_count(k, j);
          else if (entry_count(j) > 0.0)
            v = entry_sum(j) / entry_count(j);
          grid_tensor.data[i + n * (k + k_nodes * j)] = v;
        }
    for (Index i = 0; i < n; ++i) {
      const auto& s = data.samples[static_cast<size_t>(i)];
      for (Index row = 0; row < s.num_times(); ++row) {
        const Index k = grid_node(s.times[static_cast<size_t>(row)], truth.grid);
        for (Index j = 0; j < p; ++j)
          if (s.mask(row, j)) grid_tensor.data[i + n * (k + k_nodes * j)] = s.values(row, j);
      }
    }

    const CpdFit cpd = cpd_als(grid_tensor, rank, 100, 1e-8, seed);
    const DenseTensor approx = cp_reconstruct(cpd.factors, &cpd.weights);

    std::vector<Matrix> recons(static_cast<size_t>(n), Matrix(k_nodes, p));
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < k_nodes; ++k)
        for (Index j = 0; j < p; ++j)
          recons[static_cast<size_t>(i)](k, j) = approx.data[i + n * (k + k_nodes * j)];
    out.rmse_value = rmse(truth.trajectories, recons);
    if (truth.low_rank) {
      const QuadratureRule quad = QuadratureRule::trapezoid(truth.grid);
      out.angle_value = max_principal_angle(truth.phi, cpd.factors.factors[1], quad);
    }
  } catch (const Error& e) {
    out.status = std::string("failed: ") + e.what();
  }
  return out;
}

}  // namespace

Matrix fourier_basis(const Vector& nodes, double lo, double hi, int size) {
  if (size < 1) throw ConfigError("fourier_basis: size must be positive");
  if (!(hi > lo)) throw ConfigError("fourier_basis: empty domain");
  const double span = hi - lo;
  Matrix b(nodes.size(), size);
  b.col(0).setConstant(1.0 / std::sqrt(span));
  const double amp = std::sqrt(2.0 / span);
  for (int c = 1; c < size; ++c) {
    const int pair = (c + 1) / 2;  // frequency index 1, 1, 2, 2, ...
    const double freq = 2.0 * std::numbers::pi * pair;
    for (Index g = 0; g < nodes.size(); ++g) {
      const double u = (nodes(g) - lo) / span;
      b(g, c) = amp * (c % 2 == 1 ? std::sin(freq * u) : std::cos(freq * u));
    }
  }
  return b;
}

std::pair<Dataset, GroundTruth> generate(const SimConfig& cfg) {
  validate(cfg);
  const Index n = cfg.n;
  const Index p = shape_size(cfg.dims);
  const Index k_nodes = cfg.grid_size;
  const Vector grid = make_grid(cfg.domain_lo, cfg.domain_hi, cfg.grid_size);
  const int rank = cfg.rank;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  GroundTruth truth;
  truth.grid = grid;
  truth.low_rank = cfg.low_rank;
  truth.trajectories.assign(static_cast<size_t>(n), Matrix::Zero(k_nodes, p));

  if (cfg.low_rank) {
    const Matrix basis = fourier_basis(grid, cfg.domain_lo, cfg.domain_hi, cfg.fourier_size);
    truth.phi_coeff.resize(cfg.fourier_size, rank);
    for (Index r = 0; r < rank; ++r) {
      for (Index mth = 0; mth < cfg.fourier_size; ++mth) truth.phi_coeff(mth, r) = gauss(rng);
      truth.phi_coeff.col(r).normalize();  // exact unit L2 norm (orthonormal basis)
    }
    truth.phi = basis * truth.phi_coeff;
    for (Index r = 0; r < rank; ++r) {
      for (Index g = 0; g < k_nodes; ++g) {
        if (truth.phi(g, r) == 0.0) continue;
        if (truth.phi(g, r) < 0.0) {
          truth.phi_coeff.col(r) *= -1.0;
          truth.phi.col(r) *= -1.0;
        }
        break;
      }
    }

    for (Index pd : cfg.dims) {
      Matrix a(pd, rank);
      for (Index i = 0; i < pd; ++i)
        for (Index r = 0; r < rank; ++r) a(i, r) = unif(rng);
      for (Index r = 0; r < rank; ++r) a.col(r).normalize();
      truth.factors.push_back(std::move(a));
    }

    Vector lam = cfg.lambda_diag;
    if (lam.size() == 0) {
      lam.resize(rank);
      for (Index r = 0; r < rank; ++r) {
        const double v = static_cast<double>(rank - r);
        lam(r) = v * v;
      }
    }
    truth.lambda = lam.asDiagonal();

    truth.scores.resize(n, rank);
    for (Index i = 0; i < n; ++i)
      for (Index r = 0; r < rank; ++r) truth.scores(i, r) = std::sqrt(lam(r)) * gauss(rng);

    const Matrix ad = khatri_rao_chain(truth.factors);
    for (Index i = 0; i < n; ++i)
      truth.trajectories[static_cast<size_t>(i)] =
          (truth.phi * truth.scores.row(i).asDiagonal()) * ad.transpose();
  } else {
    const int msize = 2 * cfg.misspec_order + 1;
    const Matrix basis = fourier_basis(grid, cfg.domain_lo, cfg.domain_hi, msize);
    truth.phi.resize(k_nodes, 0);
    truth.phi_coeff.resize(msize, 0);
    truth.lambda.resize(0, 0);
    truth.scores.resize(n, 0);
    Vector coeff(msize);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < p; ++j) {
        for (int c = 0; c < msize; ++c) coeff(c) = gauss(rng);
        truth.trajectories[static_cast<size_t>(i)].col(j) = basis * coeff;
      }
  }

  if (cfg.snr > 0.0) {
    double ss = 0.0;
    for (const auto& x : truth.trajectories) ss += x.squaredNorm();
    const double rms = std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(k_nodes) *
                                       static_cast<double>(p)));
    if (!(rms > 0.0)) throw NumericError("generate: zero-signal draw, cannot scale to the SNR");
    const double c = cfg.snr * std::sqrt(cfg.sigma2) / rms;
    for (auto& x : truth.trajectories) x *= c;
    if (cfg.low_rank) {
      truth.scores *= c;
      truth.lambda *= c * c;
    }
  }

  Dataset data;
  data.tensor_shape = cfg.dims;
  data.domain_lo = cfg.domain_lo;
  data.domain_hi = cfg.domain_hi;
  data.samples.resize(static_cast<size_t>(n));
  const double noise_sd = std::sqrt(cfg.sigma2);
  for (Index i = 0; i < n; ++i) {
    LongitudinalSample& s = data.samples[static_cast<size_t>(i)];
    s.id = sample_name(i, n);
    s.times.assign(grid.data(), grid.data() + grid.size());
    s.values = truth.trajectories[static_cast<size_t>(i)];
    if (noise_sd > 0.0)
      for (Index k = 0; k < k_nodes; ++k)
        for (Index j = 0; j < p; ++j) s.values(k, j) += noise_sd * gauss(rng);
    s.mask = BoolGrid::Constant(k_nodes, p, true);
  }
  data.validate();

  if (cfg.sparsity > 0.0) data = sparsify(data, cfg.sparsity, mix_seed(cfg.seed, 0x5aULL));
  return {std::move(data), std::move(truth)};
}

double rmse(const std::vector<Matrix>& truth, const std::vector<Matrix>& estimate) {
  if (truth.size() != estimate.size())
    throw ConfigError("rmse: sample counts differ");
  if (truth.empty()) throw ConfigError("rmse: no samples");
  double ss = 0.0;
  double count = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].rows() != estimate[i].rows() || truth[i].cols() != estimate[i].cols())
      throw ConfigError("rmse: shape mismatch at sample " + std::to_string(i + 1));
    ss += (truth[i] - estimate[i]).squaredNorm();
    count += static_cast<double>(truth[i].size());
  }
  return std::sqrt(ss / count);
}

double max_principal_angle(const Matrix& u, const Matrix& v, const QuadratureRule& quad) {
  if (u.cols() == 0 || v.cols() == 0)
    throw ConfigError("max_principal_angle: empty basis");
  if (u.rows() != quad.nodes.size() || v.rows() != quad.nodes.size())
    throw ConfigError("max_principal_angle: basis rows must match the quadrature nodes");
  const Vector wsqrt = quad.weights.cwiseSqrt();
  auto orthonormalize = [&](const Matrix& b) {
    const Matrix wb = wsqrt.asDiagonal() * b;
    Eigen::HouseholderQR<Matrix> qr(wb);
    return Matrix(qr.householderQ() * Matrix::Identity(wb.rows(), wb.cols()));
  };
  const Matrix qu = orthonormalize(u);
  const Matrix qv = orthonormalize(v);
  Eigen::JacobiSVD<Matrix> svd(qu.transpose() * qv);
  const double smin = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smin, 0.0, 1.0));
}

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.cells.empty()) throw ConfigError("run_benchmark: no cells");
  if (cfg.repeats < 1) throw ConfigError("run_benchmark: repeats must be positive");
  const size_t jobs = cfg.cells.size() * static_cast<size_t>(cfg.repeats);
  std::vector<std::vector<BenchmarkRow>> per_job(jobs);

  parallel_for(static_cast<long>(jobs), cfg.workers, [&](long job_index) {
    const size_t job = static_cast<size_t>(job_index);
    const size_t cell_idx = job / static_cast<size_t>(cfg.repeats);
    const int repeat = static_cast<int>(job % static_cast<size_t>(cfg.repeats));
    const BenchmarkCell& cell = cfg.cells[cell_idx];

    SimConfig sim = cfg.base;
    sim.rank = cell.rank;
    sim.sparsity = cell.sparsity;
    sim.snr = cell.snr;
    sim.seed = mix_seed(mix_seed(cfg.seed, cell_idx), static_cast<std::uint64_t>(repeat));
    auto [data, truth] = generate(sim);

    auto push = [&](const std::string& method, const std::string& metric, double value,
                    const std::string& status) {
      BenchmarkRow row;
      row.method = method;
      row.rank = cell.rank;
      row.sparsity = cell.sparsity;
      row.snr = cell.snr;
      row.repeat = repeat;
      row.metric = metric;
      row.value = value;
      row.status = status;
      per_job[job].push_back(std::move(row));
    };

    const MethodScores lf = score_lf(data, truth, cell.rank, cfg.fit, mix_seed(sim.seed, 1));
    push("lf-parafac", "rmse", lf.rmse_value, lf.status);
    if (truth.low_rank) push("lf-parafac", "angle", lf.angle_value, lf.status);

    const MethodScores cp = score_cpd(data, truth, cell.rank, mix_seed(sim.seed, 2));
    push("cpd", "rmse", cp.rmse_value, cp.status);
    if (truth.low_rank) push("cpd", "angle", cp.angle_value, cp.status);
  });

  std::vector<BenchmarkRow> rows;
  rows.reserve(jobs * 4);
  for (auto& chunk : per_job)
    for (auto& row : chunk) rows.push_back(std::move(row));
  return rows;
}

}  // namespace lfp
