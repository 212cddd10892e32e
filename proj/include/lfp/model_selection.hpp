#pragma once

#include "lfp/inference.hpp"

namespace lfp {

struct SelectionConfig {
  std::vector<int> ranks;  // candidate ranks, at least one
  int folds = 5;
  std::uint64_t seed = 1;
  // When set, the information-criterion penalty is the free-parameter count
  // (grid function values, factor entries, score covariance, noise variance)
  // instead of the rank alone.
  bool parameter_count_penalty = false;
  FitConfig fit;
};

struct RankScore {
  int rank = 0;
  double value = 0.0;               // criterion value (see each selector)
  std::vector<double> fold_values;  // per-fold test log-likelihoods (CV only)
  double wall_seconds = 0.0;
  bool ok = true;
  std::string note;  // failure reason when !ok
};

struct SelectionResult {
  std::vector<RankScore> scores;  // one per candidate, input order
  int selected_rank = 0;
};

/// Gaussian marginal log-likelihood of the observed cells:
/// -1/2 sum_i [ r_i' S_i^{-1} r_i + log|S_i| ] with S_i = F_i Lambda F_i' +
/// sigma2 I over the sample's observed rows and r_i the centered responses.
/// (No additive 2*pi constant; comparisons between models are unaffected.)
double log_likelihood(const LfParafacModel& m, const Dataset& d);

/// K-fold cross-validated test log-likelihood, averaged per candidate rank;
/// the selected rank maximizes the average. Each training fold re-runs the
/// full pipeline including covariance estimation.
SelectionResult select_rank_cv(const Dataset& d, const SelectionConfig& cfg);

/// Penalized in-sample criterion rank - log_likelihood (or parameter count -
/// log_likelihood with the config flag); the selected rank minimizes it.
SelectionResult select_rank_information(const Dataset& d, const SelectionConfig& cfg);

}  // namespace lfp
