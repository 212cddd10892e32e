#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lfp/errors.hpp"

namespace lfp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Dense order-D tensor. The flat buffer runs with the first index fastest,
/// so for shape (p1,...,pD) the element (j1,...,jD) sits at
/// j1 + p1*(j2 + p2*(j3 + ...)). Under this layout the mode-1 unfolding is a
/// plain column-major reshape of the buffer.
struct DenseTensor {
  std::vector<Index> shape;
  Vector data;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<Index> dims);

  Index order() const { return static_cast<Index>(shape.size()); }
  Index size() const { return data.size(); }

  Index flat_index(const std::vector<Index>& idx) const;
  double& at(const std::vector<Index>& idx) { return data[flat_index(idx)]; }
  double at(const std::vector<Index>& idx) const { return data[flat_index(idx)]; }
};

/// Number of elements of a shape; throws ConfigError on empty/non-positive dims.
Index shape_size(const std::vector<Index>& shape);

/// Mode-d unfolding of a vectorized tensor (first-index-fastest buffer).
/// Row index is the mode-d coordinate; the column index runs over the
/// remaining coordinates with lower modes fastest.
Matrix matricize_vector(const Vector& v, int mode, const std::vector<Index>& shape);

/// Mode-d unfolding X_(d), shape p_d x (prod of other dims). `mode` is 1-based.
Matrix matricize(const DenseTensor& t, int mode);

/// Inverse of matricize: fold a p_d x p_(-d) matrix back into a tensor.
DenseTensor inverse_matricize(const Matrix& m, int mode, const std::vector<Index>& shape);

/// Column-stacked vectorization of the mode-d unfolding. For mode 1 this is
/// the flat buffer itself.
Vector vectorize(const DenseTensor& t, int mode = 1);

/// Kronecker product, (m1*m2) x (n1*n2); the second factor's indices run fastest.
Matrix kronecker(const Matrix& a, const Matrix& b);

/// Column-wise Khatri-Rao product: column r is kron(a.col(r), b.col(r)).
/// Throws ConfigError on column-count mismatch.
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// Khatri-Rao chain A_D (*) A_{D-1} (*) ... (*) A_1 over a factor list stored
/// in ascending-mode order. `skip_mode` (1-based) omits one factor; 0 keeps all.
/// Column r of the result carries prod_d A_d(j_d, r) at flat index (j_1,...,j_D).
Matrix khatri_rao_chain(const std::vector<Matrix>& factors, int skip_mode = 0);

/// Element-wise (Hadamard) product; throws ConfigError on shape mismatch.
Matrix hadamard(const Matrix& a, const Matrix& b);

/// CP factor bundle: factors[d] is p_{d+1} x R.
struct FactorSet {
  std::vector<Matrix> factors;

  FactorSet() = default;
  explicit FactorSet(std::vector<Matrix> f);

  Index order() const { return static_cast<Index>(factors.size()); }
  Index rank() const { return factors.empty() ? 0 : factors.front().cols(); }
  std::vector<Index> dims() const;
};

/// Sum of weighted rank-one terms; weights default to all ones. Evaluated
/// entry by entry (independently of the Khatri-Rao identity it satisfies).
DenseTensor cp_reconstruct(const FactorSet& f, const Vector* weights = nullptr);

double frobenius_norm(const DenseTensor& t);

}  // namespace lfp
