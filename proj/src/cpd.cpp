#include "lfp/cpd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "detail.hpp"

namespace lfp {

using detail::solve_normal;

CpdFit cpd_als(const DenseTensor& t, int rank, int max_iter, double tol, std::uint64_t seed) {
  if (rank < 1) throw ConfigError("cpd_als: rank must be positive");
  if (max_iter < 1) throw ConfigError("cpd_als: max_iter must be positive");
  const int D = static_cast<int>(t.shape.size());
  if (D < 2) throw ConfigError("cpd_als: tensor order must be at least 2");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CpdFit fit;
  fit.factors.factors.resize(static_cast<size_t>(D));
  for (int d = 0; d < D; ++d) {
    Matrix a(t.shape[static_cast<size_t>(d)], rank);
    for (Index c = 0; c < a.cols(); ++c) {
      for (Index r = 0; r < a.rows(); ++r) a(r, c) = gauss(rng);
      a.col(c).normalize();
    }
    fit.factors.factors[static_cast<size_t>(d)] = a;
  }
  fit.weights = Vector::Ones(rank);

  std::vector<Matrix> unfoldings;
  unfoldings.reserve(static_cast<size_t>(D));
  for (int d = 1; d <= D; ++d) unfoldings.push_back(matricize(t, d));

  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    for (int d = 1; d <= D; ++d) {
      // gram of the omitted-mode Khatri-Rao via the Hadamard identity
      Matrix gram = Matrix::Ones(rank, rank);
      for (int e = 1; e <= D; ++e) {
        if (e == d) continue;
        const Matrix& a = fit.factors.factors[static_cast<size_t>(e - 1)];
        gram = gram.cwiseProduct((a.transpose() * a).eval());
      }
      const Matrix kr = khatri_rao_chain(fit.factors.factors, d);
      Matrix b = solve_normal(gram, unfoldings[static_cast<size_t>(d - 1)] * kr, "cpd_als");
      for (Index r = 0; r < b.cols(); ++r) {
        const double norm = b.col(r).norm();
        fit.weights[r] = norm;
        if (norm > 0.0)
          b.col(r) /= norm;
        else
          b.col(r).setConstant(1.0 / std::sqrt(static_cast<double>(b.rows())));
      }
      fit.factors.factors[static_cast<size_t>(d - 1)] = b;
    }
    const DenseTensor recon = cp_reconstruct(fit.factors, &fit.weights);
    const double err = (t.data - recon.data).squaredNorm();
    fit.objective_trace.push_back(err);
    fit.iterations = it + 1;
    if (!std::isfinite(err)) throw NumericError("cpd_als: non-finite objective");
    if (std::abs(prev - err) < tol * (1.0 + err)) {
      fit.converged = true;
      break;
    }
    prev = err;
  }
  return fit;
}

CpdInit cpd_init_from_dataset(const Dataset& d, const MeanField& mean, int rank,
                              const QuadratureRule& quad, std::uint64_t seed) {
  if (rank < 1) throw ConfigError("cpd_init: rank must be positive");
  const Index n = d.num_samples();
  const Index G = quad.nodes.size();
  const Index P = d.num_entries();

  // samples x grid x entry modes, smoothed per sample-entry and centered
  std::vector<Index> shape;
  shape.push_back(n);
  shape.push_back(G);
  for (Index p : d.tensor_shape) shape.push_back(p);
  DenseTensor grid_tensor(shape);

  CpdInit init;
  for (Index i = 0; i < n; ++i) {
    const auto& s = d.samples[static_cast<size_t>(i)];
    for (Index j = 0; j < P; ++j) {
      std::vector<double> ts;
      std::vector<double> ys;
      for (Index k = 0; k < s.num_times(); ++k)
        if (s.mask(k, j)) {
          ts.push_back(s.times[static_cast<size_t>(k)]);
          ys.push_back(s.values(k, j));
        }
      Vector curve;
      bool smoothed = false;
      if (ts.size() >= 2 && ts.front() != ts.back()) {
        Vector x = Eigen::Map<Vector>(ts.data(), static_cast<Index>(ts.size()));
        Vector y = Eigen::Map<Vector>(ys.data(), static_cast<Index>(ys.size()));
        Vector w = Vector::Ones(x.size());
        try {
          curve = local_linear_1d(x, y, w, default_bandwidth(ts), quad.nodes);
          curve -= mean.values.col(j);
          smoothed = true;
        } catch (const DegenerateDataError&) {
          // observations cluster too far from part of the grid to support a
          // local fit even after widening; treat like the too-few-points case
        }
      }
      if (!smoothed) {
        curve = Vector::Zero(G);  // mean curve, centered away
        ++init.mean_fallbacks;
      }
      for (Index g = 0; g < G; ++g) grid_tensor.data[i + n * (g + G * j)] = curve[g];
    }
  }

  CpdFit fit = cpd_als(grid_tensor, rank, 100, 1e-8, seed);

  // unit-norm conventions: quadrature norm for the grid mode, 2-norm for the
  // tabular modes, first-coordinate sign rule, all scale pushed to the scores
  Matrix scores = fit.factors.factors[0];
  Matrix phi = fit.factors.factors[1];
  std::vector<Matrix> tab(fit.factors.factors.begin() + 2, fit.factors.factors.end());
  for (Index r = 0; r < rank; ++r) {
    double scale = fit.weights[r];
    const double qn = std::sqrt(phi.col(r).transpose() * quad.weights.asDiagonal() * phi.col(r));
    if (qn <= 0.0) throw DegenerateComponentError("cpd_init: component " + std::to_string(r + 1) +
                                                  " has a zero grid profile");
    phi.col(r) /= qn;
    scale *= qn;
    Index nz = 0;
    while (nz < phi.rows() && phi(nz, r) == 0.0) ++nz;
    if (nz < phi.rows() && phi(nz, r) < 0.0) {
      phi.col(r) = -phi.col(r);
      scale = -scale;
    }
    for (auto& a : tab) {
      const double an = a.col(r).norm();
      if (an <= 0.0)
        throw DegenerateComponentError("cpd_init: component " + std::to_string(r + 1) +
                                       " has a zero tabular factor");
      a.col(r) /= an;
      scale *= an;
      nz = 0;
      while (nz < a.rows() && a(nz, r) == 0.0) ++nz;
      if (nz < a.rows() && a(nz, r) < 0.0) {
        a.col(r) = -a.col(r);
        scale = -scale;
      }
    }
    scores.col(r) *= scale;
  }

  init.lambda0 = n >= 2 ? Matrix((scores.transpose() * scores) / static_cast<double>(n))
                        : Matrix(Matrix::Identity(rank, rank));

  // order components by decreasing score energy
  std::vector<Index> order(static_cast<size_t>(rank));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return init.lambda0(a, a) > init.lambda0(b, b); });
  Matrix perm = Matrix::Zero(rank, rank);
  for (Index r = 0; r < rank; ++r) perm(order[static_cast<size_t>(r)], r) = 1.0;
  init.phi0 = phi * perm;
  init.lambda0 = (perm.transpose() * init.lambda0 * perm).eval();
  init.factors0.clear();
  for (auto& a : tab) init.factors0.push_back(a * perm);
  return init;
}

}  // namespace lfp
