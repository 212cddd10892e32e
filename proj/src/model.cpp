#include "lfp/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "detail.hpp"

namespace lfp {

using detail::solve_normal;

namespace {

Matrix phi_gram(const Matrix& phi, const QuadratureRule& quad) {
  return phi.transpose() * quad.weights.asDiagonal() * phi;
}

// Gram of the combined columns a_r (x) phi_r under the quadrature measure.
Matrix design_gram(const Matrix& phi, const Matrix& ad, const QuadratureRule& quad) {
  return (ad.transpose() * ad).cwiseProduct(phi_gram(phi, quad));
}

// Row block g is (A (x) Phi(s_g)), i.e. the tabular Khatri-Rao with each
// column r scaled by phi(g, r).
Matrix design_stack(const Matrix& phi, const Matrix& ad) {
  const Index G = phi.rows();
  const Index P = ad.rows();
  const Index R = ad.cols();
  Matrix out(G * P, R);
  for (Index g = 0; g < G; ++g) out.block(g * P, 0, P, R) = ad * phi.row(g).asDiagonal();
  return out;
}

// Scale row block g by the quadrature weight w_g.
Matrix weight_rows(const Matrix& stack, const QuadratureRule& quad, Index P) {
  Matrix out = stack;
  for (Index g = 0; g < quad.nodes.size(); ++g) out.middleRows(g * P, P) *= quad.weights(g);
  return out;
}

// B * Gram^{-1}, reporting which component drives a rank-deficient Gram.
Matrix gram_solve(const Matrix& gram, const Matrix& b, const std::string& ctx) {
  try {
    return solve_normal(gram, b, ctx);
  } catch (const NumericError&) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    Index worst = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    throw NumericError(ctx + ": design Gram is rank-deficient (component " +
                       std::to_string(worst + 1) + " carries the null direction)");
  }
}

Matrix k_stack_impl(const Matrix& phi, const Matrix& ad, const QuadratureRule& quad) {
  return gram_solve(design_gram(phi, ad, quad), design_stack(phi, ad), "k_stack");
}

// Field contracted against the weighted extractor stack: column r of row
// block g is sum_h w_h * slab(g, h) * K(s_h) e_r. Every block update reads
// the field only through this matrix.
Matrix field_projection(const CovarianceField& cov, const Matrix& kstack,
                        const QuadratureRule& quad) {
  const Index P = cov.num_entries();
  return cov.full * weight_rows(kstack, quad, P);
}

// n(g, r) = a_r' * v(block g, column r): the data-facing linear term of the
// surrogate, one scalar per (node, component).
Matrix score_inner(const Matrix& ad, const Matrix& v, Index G) {
  const Index P = ad.rows();
  const Index R = ad.cols();
  Matrix n(G, R);
  for (Index g = 0; g < G; ++g)
    for (Index r = 0; r < R; ++r) n(g, r) = ad.col(r).dot(v.col(r).segment(g * P, P));
  return n;
}

Matrix lambda_from_kstack(const Matrix& kstack, const CovarianceField& cov,
                          const QuadratureRule& quad) {
  const Index P = cov.num_entries();
  const Matrix kw = weight_rows(kstack, quad, P);
  Matrix raw = kw.transpose() * cov.full * kw;
  raw = 0.5 * (raw + raw.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(raw);
  if (es.info() != Eigen::Success) throw NumericError("update_lambda: eigendecomposition failed");
  const Vector ev = es.eigenvalues().cwiseMax(0.0);
  Matrix out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose()).eval();
}

Matrix phi_update_impl(const Matrix& ad, const Matrix& lambda, const Matrix& v, Index G) {
  const Matrix q = (ad.transpose() * ad).cwiseProduct(lambda);
  const Matrix n = score_inner(ad, v, G);
  return solve_normal(q, n, "update_phi");
}

Matrix factor_update_impl(const std::vector<Matrix>& factors, const Matrix& phi,
                          const Matrix& lambda, const Matrix& v, const QuadratureRule& quad,
                          int mode, const std::vector<Index>& shape) {
  const Index G = quad.nodes.size();
  const Index P = shape_size(shape);
  const Index R = lambda.rows();
  const Matrix aminus = khatri_rao_chain(factors, mode);
  const Matrix q = (aminus.transpose() * aminus)
                       .cwiseProduct(phi_gram(phi, quad))
                       .cwiseProduct(lambda);
  Matrix n(shape[static_cast<size_t>(mode - 1)], R);
  for (Index r = 0; r < R; ++r) {
    Vector acc = Vector::Zero(P);
    for (Index g = 0; g < G; ++g) acc += quad.weights(g) * phi(g, r) * v.col(r).segment(g * P, P);
    n.col(r) = matricize_vector(acc, mode, shape) * aminus.col(r);
  }
  return solve_normal(q, n, "update_factor");
}

double objective_impl(const Matrix& phi, const Matrix& ad, const Matrix& lambda, const Matrix& v,
                      const QuadratureRule& quad) {
  const Index G = phi.rows();
  const double term1 = lambda.cwiseProduct(design_gram(phi, ad, quad)).sum();
  const Matrix n = score_inner(ad, v, G);
  const double term2 = (quad.weights.asDiagonal() * phi).cwiseProduct(n).sum();
  return term1 - 2.0 * term2;
}

// Permute components into descending lambda-diagonal order; scales untouched.
// An extractor stack aligned with the model can be permuted along with it.
void sort_components(LfParafacModel& m, Matrix* kstack = nullptr) {
  const Index R = m.rank;
  std::vector<Index> order(static_cast<size_t>(R));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return m.lambda(a, a) > m.lambda(b, b); });
  bool identity = true;
  for (Index r = 0; r < R; ++r) identity = identity && order[static_cast<size_t>(r)] == r;
  if (identity) return;

  auto permute_cols = [&](const Matrix& a) {
    Matrix out(a.rows(), R);
    for (Index r = 0; r < R; ++r) out.col(r) = a.col(order[static_cast<size_t>(r)]);
    return out;
  };
  m.phi = permute_cols(m.phi);
  for (auto& a : m.factors) a = permute_cols(a);
  if (kstack != nullptr) *kstack = permute_cols(*kstack);
  Matrix lam(R, R);
  for (Index r = 0; r < R; ++r)
    for (Index c = 0; c < R; ++c)
      lam(r, c) = m.lambda(order[static_cast<size_t>(r)], order[static_cast<size_t>(c)]);
  m.lambda = lam;
}

double leading_sign(const Vector& col) {
  for (Index i = 0; i < col.size(); ++i)
    if (col(i) != 0.0) return col(i) > 0.0 ? 1.0 : -1.0;
  return 1.0;
}

using detail::mix_seed;

struct SweepResult {
  LfParafacModel model;
  FitReport report;
  double final_objective = std::numeric_limits<double>::infinity();
};

SweepResult run_sweeps(LfParafacModel model, const CovarianceField& cov, const FitConfig& cfg) {
  const QuadratureRule quad = QuadratureRule::trapezoid(cov.grid);
  const int D = static_cast<int>(model.factors.size());
  SweepResult res;

  normalize(model);
  Matrix kstack = k_stack_impl(model.phi, model.tabular_khatri_rao(), quad);
  model.lambda = lambda_from_kstack(kstack, cov, quad);
  sort_components(model, &kstack);
  double c_prev = objective_impl(model.phi, model.tabular_khatri_rao(), model.lambda,
                                 field_projection(cov, kstack, quad), quad);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    const Matrix v = field_projection(cov, kstack, quad);
    const Matrix ad = khatri_rao_chain(model.factors);
    std::vector<double> norms;
    norms.reserve(static_cast<size_t>(D) + 1);

    Matrix phi_new = phi_update_impl(ad, model.lambda, v, model.grid.size());
    norms.push_back((phi_new - model.phi).norm());
    model.phi = std::move(phi_new);

    for (int d = 1; d <= D; ++d) {
      Matrix a_new = factor_update_impl(model.factors, model.phi, model.lambda, v, quad, d,
                                        model.tensor_shape);
      norms.push_back((a_new - model.factors[static_cast<size_t>(d - 1)]).norm());
      model.factors[static_cast<size_t>(d - 1)] = std::move(a_new);
    }

    normalize(model);
    kstack = k_stack_impl(model.phi, model.tabular_khatri_rao(), quad);
    model.lambda = lambda_from_kstack(kstack, cov, quad);
    sort_components(model, &kstack);
    const double c = objective_impl(model.phi, model.tabular_khatri_rao(), model.lambda,
                                    field_projection(cov, kstack, quad), quad);

    res.report.objective_trace.push_back(c);
    res.report.update_norms.push_back(std::move(norms));
    res.report.iterations = it;
    if (!std::isfinite(c))
      throw NumericError("fit: objective became non-finite at sweep " + std::to_string(it));
    if (std::abs(c - c_prev) < cfg.epsilon * (1.0 + std::abs(c))) {
      res.report.converged = true;
      break;
    }
    c_prev = c;
  }

  int krank_sum = 0;
  for (const auto& a : model.factors) krank_sum += k_rank(a);
  if (krank_sum < D - 1)
    res.report.warnings.push_back(
        "factor k-ranks sum to " + std::to_string(krank_sum) + " < " + std::to_string(D - 1) +
        "; the decomposition may not be identifiable");
  if (!res.report.converged)
    res.report.warnings.push_back("stopped at max_iter without meeting the tolerance");

  res.final_objective = res.report.objective_trace.empty()
                            ? std::numeric_limits<double>::infinity()
                            : res.report.objective_trace.back();
  res.model = std::move(model);
  return res;
}

nlohmann::json mat_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix mat_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw DataError("load_model: " + what + " must be a non-empty array of rows");
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.front().size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<size_t>(i));
    if (static_cast<Index>(row.size()) != cols)
      throw DataError("load_model: ragged rows in " + what);
    for (Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<size_t>(c)).get<double>();
  }
  return m;
}

Vector vec_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError("load_model: " + what + " must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<size_t>(i)).get<double>();
  return v;
}

}  // namespace

Matrix LfParafacModel::phi_at(const std::vector<double>& times) const {
  const Index G = grid.size();
  Matrix out(static_cast<Index>(times.size()), phi.cols());
  for (Index i = 0; i < out.rows(); ++i) {
    double t = times[static_cast<size_t>(i)];
    t = std::clamp(t, grid(0), grid(G - 1));
    Index hi = 1;
    while (hi < G - 1 && grid(hi) < t) ++hi;
    const Index lo = hi - 1;
    const double gap = grid(hi) - grid(lo);
    const double u = gap > 0.0 ? (t - grid(lo)) / gap : 0.0;
    out.row(i) = (1.0 - u) * phi.row(lo) + u * phi.row(hi);
  }
  return out;
}

Matrix k_matrix(const LfParafacModel& m, const QuadratureRule& quad, Index g) {
  if (g < 0 || g >= m.grid.size()) throw ConfigError("k_matrix: grid index out of range");
  const Matrix ad = m.tabular_khatri_rao();
  const Matrix mg = ad * m.phi.row(g).asDiagonal();
  return gram_solve(design_gram(m.phi, ad, quad), mg, "k_matrix");
}

Matrix k_stack(const LfParafacModel& m, const QuadratureRule& quad) {
  return k_stack_impl(m.phi, m.tabular_khatri_rao(), quad);
}

Matrix update_lambda(const LfParafacModel& m, const CovarianceField& cov,
                     const QuadratureRule& quad) {
  return lambda_from_kstack(k_stack(m, quad), cov, quad);
}

Matrix update_phi(const LfParafacModel& m, const CovarianceField& cov,
                  const QuadratureRule& quad) {
  const Matrix v = field_projection(cov, k_stack(m, quad), quad);
  return phi_update_impl(m.tabular_khatri_rao(), m.lambda, v, m.grid.size());
}

Matrix update_factor(const LfParafacModel& m, const CovarianceField& cov,
                     const QuadratureRule& quad, int mode) {
  if (mode < 1 || mode > static_cast<int>(m.factors.size()))
    throw ConfigError("update_factor: mode out of range");
  const Matrix v = field_projection(cov, k_stack(m, quad), quad);
  return factor_update_impl(m.factors, m.phi, m.lambda, v, quad, mode, m.tensor_shape);
}

void normalize(LfParafacModel& m) {
  const Index R = m.rank;
  const QuadratureRule quad = m.quadrature();
  Vector scale = Vector::Ones(R);
  for (Index r = 0; r < R; ++r) {
    const double qn = std::sqrt(m.phi.col(r).cwiseAbs2().dot(quad.weights));
    if (!(qn > 1e-150))
      throw DegenerateComponentError("component " + std::to_string(r + 1) +
                                     " has a vanishing function part");
    m.phi.col(r) /= qn;
    const double fsign = leading_sign(m.phi.col(r));
    m.phi.col(r) *= fsign;
    double s = qn * fsign;
    for (auto& a : m.factors) {
      const double n2 = a.col(r).norm();
      if (!(n2 > 1e-150))
        throw DegenerateComponentError("component " + std::to_string(r + 1) +
                                       " has a vanishing factor column");
      a.col(r) /= n2;
      const double asign = leading_sign(a.col(r));
      a.col(r) *= asign;
      s *= n2 * asign;
    }
    scale(r) = s;
  }
  m.lambda = scale.asDiagonal() * m.lambda * scale.asDiagonal();
  m.lambda = 0.5 * (m.lambda + m.lambda.transpose()).eval();
  sort_components(m);
}

double objective(const LfParafacModel& m, const CovarianceField& cov,
                 const QuadratureRule& quad) {
  const Matrix kstack = k_stack(m, quad);
  return objective_impl(m.phi, m.tabular_khatri_rao(), m.lambda,
                        field_projection(cov, kstack, quad), quad);
}

double objective_frozen_k(const Matrix& phi, const std::vector<Matrix>& factors,
                          const Matrix& lambda, const Matrix& kstack,
                          const CovarianceField& cov, const QuadratureRule& quad) {
  const Matrix ad = khatri_rao_chain(factors);
  return objective_impl(phi, ad, lambda, field_projection(cov, kstack, quad), quad);
}

Matrix phi_gradient_frozen_k(const Matrix& phi, const std::vector<Matrix>& factors,
                             const Matrix& lambda, const Matrix& kstack,
                             const CovarianceField& cov, const QuadratureRule& quad) {
  const Matrix ad = khatri_rao_chain(factors);
  const Matrix v = field_projection(cov, kstack, quad);
  const Matrix q = (ad.transpose() * ad).cwiseProduct(lambda);
  const Matrix n = score_inner(ad, v, phi.rows());
  return 2.0 * (phi * q - n);
}

Matrix phi_gradient(const LfParafacModel& m, const CovarianceField& cov,
                    const QuadratureRule& quad) {
  return phi_gradient_frozen_k(m.phi, m.factors, m.lambda, k_stack(m, quad), cov, quad);
}

int k_rank(const Matrix& a) {
  const Index R = a.cols();
  if (R == 0 || a.rows() == 0) return 0;
  auto all_full_rank = [&](Index k) {
    std::vector<Index> idx(static_cast<size_t>(k));
    std::iota(idx.begin(), idx.end(), Index{0});
    while (true) {
      Matrix sub(a.rows(), k);
      for (Index c = 0; c < k; ++c) sub.col(c) = a.col(idx[static_cast<size_t>(c)]);
      if (Eigen::ColPivHouseholderQR<Matrix>(sub).rank() < k) return false;
      Index i = k - 1;
      while (i >= 0 && idx[static_cast<size_t>(i)] == R - k + i) --i;
      if (i < 0) break;
      ++idx[static_cast<size_t>(i)];
      for (Index j = i + 1; j < k; ++j) idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
    }
    return true;
  };
  for (Index k = std::min(R, a.rows()); k >= 1; --k)
    if (all_full_rank(k)) return static_cast<int>(k);
  return 0;
}

std::pair<LfParafacModel, FitReport> fit(const Dataset& d, int rank, const FitConfig& cfg) {
  return fit(d, assemble(d, cfg.cov), rank, cfg);
}

std::pair<LfParafacModel, FitReport> fit(const Dataset& d, const CovarianceField& cov, int rank,
                                         const FitConfig& cfg) {
  if (rank < 1) throw ConfigError("fit: rank must be positive");
  if (cfg.max_iter < 1) throw ConfigError("fit: max_iter must be positive");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("fit: epsilon must be positive");
  d.validate();

  const auto t0 = std::chrono::steady_clock::now();
  const QuadratureRule quad = QuadratureRule::trapezoid(cov.grid);
  const CpdInit init = cpd_init_from_dataset(d, cov.mean, rank, quad, cfg.seed);

  LfParafacModel base;
  base.rank = rank;
  base.domain_lo = d.domain_lo;
  base.domain_hi = d.domain_hi;
  base.grid = cov.grid;
  base.phi = init.phi0;
  base.factors = init.factors0;
  base.lambda = init.lambda0;
  base.sigma2 = cov.sigma2;
  base.mean = cov.mean;
  base.tensor_shape = cov.tensor_shape;

  const int runs = cfg.restarts + 1;
  SweepResult best;
  bool have_best = false;
  std::vector<std::string> run_warnings;
  std::string first_error;
  for (int run = 0; run < runs; ++run) {
    LfParafacModel start = base;
    if (run > 0) {
      std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(run)));
      std::normal_distribution<double> gauss(0.0, 0.1);
      for (Index i = 0; i < start.phi.size(); ++i) start.phi.data()[i] += gauss(rng);
      for (auto& a : start.factors)
        for (Index i = 0; i < a.size(); ++i) a.data()[i] += gauss(rng);
    }
    try {
      SweepResult res = run_sweeps(std::move(start), cov, cfg);
      if (!have_best || res.final_objective < best.final_objective) {
        best = std::move(res);
        have_best = true;
      }
    } catch (const Error& e) {
      if (first_error.empty()) first_error = e.what();
      run_warnings.push_back("start " + std::to_string(run + 1) + " failed: " + e.what());
    }
  }
  if (!have_best) throw NumericError("fit: every start failed; first error: " + first_error);

  best.report.init_mean_fallbacks = init.mean_fallbacks;
  for (auto& w : run_warnings) best.report.warnings.push_back(std::move(w));
  best.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(best.model), std::move(best.report)};
}

void save_model(const LfParafacModel& m, const std::string& path,
                const std::string& config_digest) {
  nlohmann::json j;
  j["schema"] = "lf-parafac-model-v1";
  j["rank"] = m.rank;
  j["domain"] = {m.domain_lo, m.domain_hi};
  j["grid"] = std::vector<double>(m.grid.data(), m.grid.data() + m.grid.size());
  j["phi"] = mat_to_json(m.phi);
  nlohmann::json facs = nlohmann::json::array();
  for (const auto& a : m.factors) facs.push_back(mat_to_json(a));
  j["factors"] = std::move(facs);
  j["lambda"] = mat_to_json(m.lambda);
  j["sigma2"] = m.sigma2;
  j["tensor_shape"] = m.tensor_shape;
  j["mean"] = {{"bandwidth", m.mean.bandwidth},
               {"grid", std::vector<double>(m.mean.grid.data(),
                                            m.mean.grid.data() + m.mean.grid.size())},
               {"values", mat_to_json(m.mean.values)}};
  if (!config_digest.empty()) j["config_digest"] = config_digest;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_model: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("save_model: write failed for " + path);
}

LfParafacModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("load_model: " + path + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != "lf-parafac-model-v1")
      throw DataError("load_model: unrecognized schema in " + path);
    LfParafacModel m;
    m.rank = j.at("rank").get<int>();
    m.domain_lo = j.at("domain").at(0).get<double>();
    m.domain_hi = j.at("domain").at(1).get<double>();
    m.grid = vec_from_json(j.at("grid"), "grid");
    m.phi = mat_from_json(j.at("phi"), "phi");
    for (const auto& a : j.at("factors")) m.factors.push_back(mat_from_json(a, "factors"));
    m.lambda = mat_from_json(j.at("lambda"), "lambda");
    m.sigma2 = j.at("sigma2").get<double>();
    m.tensor_shape = j.at("tensor_shape").get<std::vector<Index>>();
    const auto& mean = j.at("mean");
    m.mean.bandwidth = mean.at("bandwidth").get<double>();
    m.mean.grid = vec_from_json(mean.at("grid"), "mean.grid");
    m.mean.values = mat_from_json(mean.at("values"), "mean.values");
    if (m.phi.cols() != m.rank || m.lambda.rows() != m.rank || m.lambda.cols() != m.rank)
      throw DataError("load_model: rank does not match phi/lambda shape");
    if (m.phi.rows() != m.grid.size())
      throw DataError("load_model: phi rows do not match grid size");
    if (static_cast<Index>(m.factors.size()) != static_cast<Index>(m.tensor_shape.size()))
      throw DataError("load_model: factor count does not match tensor shape");
    for (size_t dmode = 0; dmode < m.factors.size(); ++dmode)
      if (m.factors[dmode].rows() != m.tensor_shape[dmode] || m.factors[dmode].cols() != m.rank)
        throw DataError("load_model: factor " + std::to_string(dmode + 1) + " has wrong shape");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_model: " + path + " is missing or mistypes a field: " + e.what());
  }
}

}  // namespace lfp
