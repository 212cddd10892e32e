#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "lfp/tensor.hpp"

namespace lfp::detail {

/// Deterministic stream splitting: one base seed plus a salt gives an
/// independent-looking engine seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// X = B * M^{-1} for symmetric M via LDLT, with a one-shot ridge retry.
/// A solve is rejected when it is non-finite or leaves a material residual
/// (semi-definite M can pass LDLT while producing garbage).
inline Matrix solve_normal(const Matrix& m, const Matrix& b, const std::string& ctx) {
  auto attempt = [&](const Matrix& lhs) -> Matrix {
    Eigen::LDLT<Matrix> ldlt(lhs);
    if (ldlt.info() != Eigen::Success) return Matrix();
    Matrix x = ldlt.solve(b.transpose()).transpose();
    if (!x.allFinite()) return Matrix();
    const double resid = (x * lhs - b).norm();
    if (resid > 1e-8 * (b.norm() + 1.0)) return Matrix();
    return x;
  };
  Matrix x = attempt(m);
  if (x.size() > 0 || b.size() == 0) return x;
  Matrix mj = m;
  mj.diagonal().array() += std::max(1e-10 * m.trace() / static_cast<double>(m.rows()), 1e-300);
  x = attempt(mj);
  if (x.size() > 0) return x;
  throw NumericError(ctx + ": normal equations stayed singular after ridge jitter");
}

}  // namespace lfp::detail
