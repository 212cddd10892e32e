#pragma once

#include "lfp/model.hpp"

namespace lfp {

struct PredictConfig {
  Vector prior_mean;  // size 0 = zero prior mean
};

struct ScorePrediction {
  std::string sample_id;
  Vector u_hat;        // R posterior mean
  Matrix covariance;   // R x R posterior covariance, symmetric PSD
  Index n_observed = 0;
};

/// Score design of one sample: one row per observed (time, entry) cell, in
/// entry-major order (entry index outer, observation index inner — the
/// column-major order of the sample's value matrix), paired with the
/// mean-centered responses in the same order. Row r-th column is the factor
/// weight of entry j times the component function at t_k (interpolated).
struct SampleDesign {
  Matrix f;  // n_obs x R
  Vector y;  // centered observed values
};
SampleDesign sample_design(const LfParafacModel& m, const LongitudinalSample& s);

/// Posterior mean and covariance of a sample's latent scores under the
/// Gaussian working model y = F u + noise, u ~ N(prior, lambda).
ScorePrediction predict_scores(const LfParafacModel& m, const LongitudinalSample& s,
                               const PredictConfig& cfg = {});
std::vector<ScorePrediction> predict_scores(const LfParafacModel& m, const Dataset& d,
                                            const PredictConfig& cfg = {});

/// Trajectories at the requested times for fixed scores: rows = times,
/// columns = tensor entries; the mean surface is added back.
Matrix reconstruct(const LfParafacModel& m, const Vector& scores,
                   const std::vector<double>& times);

/// Scores of one fully observed field sampled on the solver grid
/// (rows = grid nodes, columns = entries): the quadrature projection onto the
/// fitted components. The mean surface is subtracted internally. This is the
/// noise-free continuous-limit estimator the posterior mean degenerates to.
Vector quadrature_scores(const LfParafacModel& m, const Matrix& grid_values);

}  // namespace lfp
