#include "lfp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "detail.hpp"

namespace lfp {

using detail::solve_normal;

SampleDesign sample_design(const LfParafacModel& m, const LongitudinalSample& s) {
  const Index n_times = s.num_times();
  const Index p = m.num_entries();
  const Index r = m.rank;
  if (s.values.cols() != p)
    throw DataError("sample_design: sample " + s.id + " has " + std::to_string(s.values.cols()) +
                    " entries per time but the model expects " + std::to_string(p));
  const Matrix phi_rows = m.phi_at(s.times);       // n_times x R
  const Matrix ad = m.tabular_khatri_rao();        // P x R

  Index n_obs = 0;
  for (Index j = 0; j < p; ++j)
    for (Index k = 0; k < n_times; ++k) n_obs += s.mask(k, j) ? 1 : 0;

  SampleDesign out;
  out.f.resize(n_obs, r);
  out.y.resize(n_obs);
  Index row = 0;
  for (Index j = 0; j < p; ++j) {
    for (Index k = 0; k < n_times; ++k) {
      if (!s.mask(k, j)) continue;
      out.f.row(row) = phi_rows.row(k).cwiseProduct(ad.row(j));
      out.y(row) = s.values(k, j) - m.mean.value_at(s.times[static_cast<size_t>(k)], j);
      ++row;
    }
  }
  return out;
}

ScorePrediction predict_scores(const LfParafacModel& m, const LongitudinalSample& s,
                               const PredictConfig& cfg) {
  const Index r = m.rank;
  Vector prior = cfg.prior_mean;
  if (prior.size() == 0) prior = Vector::Zero(r);
  if (prior.size() != r) throw ConfigError("predict_scores: prior mean has wrong length");

  const SampleDesign d = sample_design(m, s);
  if (d.f.rows() == 0)
    throw InsufficientDataError("predict_scores: sample " + s.id + " has no observed entries");

  // flam' * sigma_y^{-1} via one factorization; sigma_y = F lambda F' + s2 I
  const Matrix flam = d.f * m.lambda;  // n_obs x R
  Matrix sigma_y = flam * d.f.transpose();
  sigma_y.diagonal().array() += m.sigma2;
  Matrix gain;  // R x n_obs
  try {
    gain = solve_normal(sigma_y, flam.transpose(), "predict_scores");
  } catch (const NumericError&) {
    throw NumericError("predict_scores: observation covariance of sample " + s.id +
                       " stayed singular after ridge jitter");
  }

  ScorePrediction out;
  out.sample_id = s.id;
  out.n_observed = d.f.rows();
  out.u_hat = prior + gain * (d.y - d.f * prior);
  Matrix cov = m.lambda - gain * flam;
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

std::vector<ScorePrediction> predict_scores(const LfParafacModel& m, const Dataset& d,
                                            const PredictConfig& cfg) {
  std::vector<ScorePrediction> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) out.push_back(predict_scores(m, s, cfg));
  return out;
}

Matrix reconstruct(const LfParafacModel& m, const Vector& scores,
                   const std::vector<double>& times) {
  if (scores.size() != m.rank) throw ConfigError("reconstruct: score vector has wrong length");
  const Matrix phi_rows = m.phi_at(times);                       // T x R
  const Matrix ad = m.tabular_khatri_rao();                      // P x R
  Matrix out = (phi_rows * scores.asDiagonal()) * ad.transpose();  // T x P
  for (Index t = 0; t < out.rows(); ++t)
    for (Index j = 0; j < out.cols(); ++j)
      out(t, j) += m.mean.value_at(times[static_cast<size_t>(t)], j);
  return out;
}

Vector quadrature_scores(const LfParafacModel& m, const Matrix& grid_values) {
  const Index g_count = m.grid.size();
  const Index p = m.num_entries();
  if (grid_values.rows() != g_count || grid_values.cols() != p)
    throw ConfigError("quadrature_scores: field must be grid nodes x tensor entries");
  const QuadratureRule quad = m.quadrature();
  const Matrix ad = m.tabular_khatri_rao();

  Matrix centered = grid_values;
  for (Index g = 0; g < g_count; ++g)
    for (Index j = 0; j < p; ++j) centered(g, j) -= m.mean.value_at(m.grid(g), j);

  RowVector b = RowVector::Zero(m.rank);
  for (Index g = 0; g < g_count; ++g)
    b += quad.weights(g) * (centered.row(g) * ad).cwiseProduct(m.phi.row(g));
  const Matrix gram =
      (ad.transpose() * ad).cwiseProduct(m.phi.transpose() * quad.weights.asDiagonal() * m.phi);
  return solve_normal(gram, b, "quadrature_scores").transpose();
}

}  // namespace lfp
