#include "lfp/model_selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "detail.hpp"

namespace lfp {

namespace {

double sample_log_likelihood(const LfParafacModel& m, const LongitudinalSample& s) {
  const SampleDesign d = sample_design(m, s);
  const Index n = d.f.rows();
  if (n == 0) return 0.0;
  Matrix sigma_y = d.f * m.lambda * d.f.transpose();
  sigma_y.diagonal().array() += m.sigma2;

  auto attempt = [&](const Matrix& sy, double* out) {
    Eigen::LDLT<Matrix> ldlt(sy);
    if (ldlt.info() != Eigen::Success) return false;
    const Vector diag = ldlt.vectorD();
    if ((diag.array() <= 0.0).any()) return false;
    const double logdet = diag.array().log().sum();
    const double quad = d.y.dot(ldlt.solve(d.y));
    if (!std::isfinite(logdet) || !std::isfinite(quad)) return false;
    *out = -0.5 * (quad + logdet);
    return true;
  };

  double ll = 0.0;
  if (attempt(sigma_y, &ll)) return ll;
  Matrix jittered = sigma_y;
  jittered.diagonal().array() +=
      std::max(1e-10 * sigma_y.trace() / static_cast<double>(n), 1e-300);
  if (attempt(jittered, &ll)) return ll;
  throw NumericError("log_likelihood: observation covariance of sample " + s.id +
                     " is not positive definite even after ridge jitter");
}

using detail::mix_seed;

double parameter_count(const LfParafacModel& m) {
  double p = 0.0;
  p += static_cast<double>(m.grid.size()) * m.rank;  // grid function values
  for (const auto& a : m.factors) p += static_cast<double>(a.rows()) * m.rank;
  p += 0.5 * static_cast<double>(m.rank) * (m.rank + 1);  // score covariance
  p += 1.0;                                               // noise variance
  return p;
}

void validate_common(const Dataset& d, const SelectionConfig& cfg) {
  if (cfg.ranks.empty()) throw ConfigError("rank selection: no candidate ranks given");
  for (int r : cfg.ranks)
    if (r < 1) throw ConfigError("rank selection: candidate ranks must be positive");
  d.validate();
}

void pick_best(SelectionResult& res, bool maximize) {
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  int best_rank = 0;
  for (const auto& sc : res.scores) {
    if (!sc.ok) continue;
    const bool better = maximize ? sc.value > best : sc.value < best;
    if (better) {
      best = sc.value;
      best_rank = sc.rank;
    }
  }
  if (best_rank == 0) throw NumericError("rank selection: every candidate failed");
  res.selected_rank = best_rank;
}

}  // namespace

double log_likelihood(const LfParafacModel& m, const Dataset& d) {
  double total = 0.0;
  for (const auto& s : d.samples) total += sample_log_likelihood(m, s);
  return total;
}

SelectionResult select_rank_cv(const Dataset& d, const SelectionConfig& cfg) {
  validate_common(d, cfg);
  if (cfg.folds < 2) throw ConfigError("select_rank_cv: need at least two folds");
  const Index n = d.num_samples();

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> folds(static_cast<size_t>(cfg.folds));
  for (Index i = 0; i < n; ++i)
    folds[static_cast<size_t>(i) % static_cast<size_t>(cfg.folds)].push_back(order[static_cast<size_t>(i)]);
  for (const auto& f : folds)
    if (f.size() < 2)
      throw ConfigError("select_rank_cv: a fold has fewer than two samples (" +
                        std::to_string(n) + " samples across " + std::to_string(cfg.folds) +
                        " folds)");

  SelectionResult res;
  res.scores.resize(cfg.ranks.size());
  for (size_t ri = 0; ri < cfg.ranks.size(); ++ri) {
    res.scores[ri].rank = cfg.ranks[ri];
    res.scores[ri].fold_values.assign(static_cast<size_t>(cfg.folds), 0.0);
  }

  for (int k = 0; k < cfg.folds; ++k) {
    Dataset train;
    Dataset test;
    train.tensor_shape = test.tensor_shape = d.tensor_shape;
    train.domain_lo = test.domain_lo = d.domain_lo;
    train.domain_hi = test.domain_hi = d.domain_hi;
    std::vector<bool> in_test(static_cast<size_t>(n), false);
    for (Index i : folds[static_cast<size_t>(k)]) in_test[static_cast<size_t>(i)] = true;
    for (Index i = 0; i < n; ++i)
      (in_test[static_cast<size_t>(i)] ? test : train)
          .samples.push_back(d.samples[static_cast<size_t>(i)]);

    CovarianceField field;
    bool field_ok = true;
    std::string field_note;
    try {
      field = assemble(train, cfg.fit.cov);
    } catch (const Error& e) {
      field_ok = false;
      field_note = e.what();
    }

    for (size_t ri = 0; ri < cfg.ranks.size(); ++ri) {
      RankScore& sc = res.scores[ri];
      if (!sc.ok) continue;
      if (!field_ok) {
        sc.ok = false;
        sc.note = "fold " + std::to_string(k + 1) + ": " + field_note;
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        FitConfig fit_cfg = cfg.fit;
        fit_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(ri) * 1000 +
                                              static_cast<std::uint64_t>(k));
        auto [model, report] = fit(train, field, sc.rank, fit_cfg);
        sc.fold_values[static_cast<size_t>(k)] = log_likelihood(model, test);
      } catch (const Error& e) {
        sc.ok = false;
        sc.note = "fold " + std::to_string(k + 1) + ": " + e.what();
      }
      sc.wall_seconds +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }

  for (auto& sc : res.scores)
    if (sc.ok)
      sc.value = std::accumulate(sc.fold_values.begin(), sc.fold_values.end(), 0.0) /
                 static_cast<double>(cfg.folds);
  pick_best(res, /*maximize=*/true);
  return res;
}

SelectionResult select_rank_information(const Dataset& d, const SelectionConfig& cfg) {
  validate_common(d, cfg);
  const CovarianceField field = assemble(d, cfg.fit.cov);

  SelectionResult res;
  res.scores.resize(cfg.ranks.size());
  for (size_t ri = 0; ri < cfg.ranks.size(); ++ri) {
    RankScore& sc = res.scores[ri];
    sc.rank = cfg.ranks[ri];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      FitConfig fit_cfg = cfg.fit;
      fit_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(ri));
      auto [model, report] = fit(d, field, sc.rank, fit_cfg);
      const double ll = log_likelihood(model, d);
      const double penalty =
          cfg.parameter_count_penalty ? parameter_count(model) : static_cast<double>(sc.rank);
      sc.value = penalty - ll;
    } catch (const Error& e) {
      sc.ok = false;
      sc.note = e.what();
    }
    sc.wall_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  pick_best(res, /*maximize=*/false);
  return res;
}

}  // namespace lfp
