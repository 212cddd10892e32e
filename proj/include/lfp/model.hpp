#pragma once

#include "lfp/cpd.hpp"

namespace lfp {

/// The fitted latent functional decomposition: grid-sampled component
/// functions phi (unit quadrature norm, positive at the first node), one
/// unit-column factor per tabular mode, the score covariance lambda with a
/// descending diagonal, the noise variance, and the mean surface.
struct LfParafacModel {
  int rank = 0;
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  Vector grid;                  // G solver nodes
  Matrix phi;                   // G x R
  std::vector<Matrix> factors;  // A_d, p_d x R
  Matrix lambda;                // R x R, symmetric PSD
  double sigma2 = 0.0;
  MeanField mean;
  std::vector<Index> tensor_shape;

  Index num_entries() const { return shape_size(tensor_shape); }
  QuadratureRule quadrature() const { return QuadratureRule::trapezoid(grid); }

  /// Khatri-Rao product of all tabular factors, highest mode first (P x R).
  Matrix tabular_khatri_rao() const { return khatri_rao_chain(factors); }

  /// Rows of phi at arbitrary times by linear interpolation (clamped).
  Matrix phi_at(const std::vector<double>& times) const;
};

struct FitConfig {
  int max_iter = 200;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  int restarts = 0;           // extra perturbed starts, best final objective wins
  CovarianceConfig cov;
};

struct FitReport {
  std::vector<double> objective_trace;       // one value per sweep
  std::vector<std::vector<double>> update_norms;  // per sweep: |dPhi|, |dA_1|, ...
  int iterations = 0;
  bool converged = false;
  double wall_seconds = 0.0;
  int init_mean_fallbacks = 0;
  std::vector<std::string> warnings;
};

/// Score-extractor matrix K(s_g) = (A (x) Phi(s_g)) * Gram^{-1}, P x R.
Matrix k_matrix(const LfParafacModel& m, const QuadratureRule& quad, Index g);

/// All K(s_g) stacked into (G*P) x R; row block g is K(s_g).
Matrix k_stack(const LfParafacModel& m, const QuadratureRule& quad);

/// Quadrature projection of the field through K: the score covariance update.
/// Symmetrized and eigenvalue-floored at zero.
Matrix update_lambda(const LfParafacModel& m, const CovarianceField& cov,
                     const QuadratureRule& quad);

/// Exact minimizer of the surrogate objective in the grid functions, holding
/// lambda, the factors, and K (from the model's current state) fixed.
Matrix update_phi(const LfParafacModel& m, const CovarianceField& cov,
                  const QuadratureRule& quad);

/// Exact minimizer in tabular factor `mode` (1-based), all else held fixed.
Matrix update_factor(const LfParafacModel& m, const CovarianceField& cov,
                     const QuadratureRule& quad, int mode);

/// Enforce the scaling/sign/order conventions in place: unit quadrature norm
/// phi columns positive at their first nonzero node, unit-norm factor columns
/// with positive leading entry, all scales and signs absorbed into lambda,
/// components sorted by descending lambda diagonal. The implied covariance
/// (A (x) Phi(s)) Lambda (A (x) Phi(t))' is untouched.
void normalize(LfParafacModel& m);

/// The population objective evaluated by quadrature, with the extractor K
/// rebuilt from the model's current phi and factors and the model's own
/// lambda used as-is.
double objective(const LfParafacModel& m, const CovarianceField& cov,
                 const QuadratureRule& quad);

/// Same objective as a quadratic in phi alone: K, lambda, factors frozen to
/// the supplied values. This is the function the phi update minimizes and the
/// one whose directional derivatives the gradient below matches.
double objective_frozen_k(const Matrix& phi, const std::vector<Matrix>& factors,
                          const Matrix& lambda, const Matrix& kstack,
                          const CovarianceField& cov, const QuadratureRule& quad);

/// Derivative of objective_frozen_k in phi, one row per grid node.
Matrix phi_gradient_frozen_k(const Matrix& phi, const std::vector<Matrix>& factors,
                             const Matrix& lambda, const Matrix& kstack,
                             const CovarianceField& cov, const QuadratureRule& quad);

/// phi_gradient_frozen_k at the model's own state (K rebuilt from it).
Matrix phi_gradient(const LfParafacModel& m, const CovarianceField& cov,
                    const QuadratureRule& quad);

/// Largest k such that every k-column subset of `a` has full rank.
int k_rank(const Matrix& a);

/// Full fit: assemble (or accept) the covariance field, warm-start from the
/// grid-tensor CP decomposition, and run the block-update sweeps.
std::pair<LfParafacModel, FitReport> fit(const Dataset& d, int rank, const FitConfig& cfg);
std::pair<LfParafacModel, FitReport> fit(const Dataset& d, const CovarianceField& cov, int rank,
                                         const FitConfig& cfg);

/// JSON round trip for fitted models. The digest string is embedded verbatim.
void save_model(const LfParafacModel& m, const std::string& path,
                const std::string& config_digest = "");
LfParafacModel load_model(const std::string& path);

}  // namespace lfp
