#include "lfp/tensor.hpp"

#include <numeric>
#include <string>

namespace lfp {

Index shape_size(const std::vector<Index>& shape) {
  if (shape.empty()) throw ConfigError("tensor shape must have at least one mode");
  Index n = 1;
  for (Index p : shape) {
    if (p <= 0) throw ConfigError("tensor dimensions must be positive");
    n *= p;
  }
  return n;
}

DenseTensor::DenseTensor(std::vector<Index> dims) : shape(std::move(dims)) {
  data = Vector::Zero(shape_size(shape));
}

Index DenseTensor::flat_index(const std::vector<Index>& idx) const {
  if (idx.size() != shape.size()) throw ConfigError("index order mismatch");
  Index flat = 0, stride = 1;
  for (size_t d = 0; d < shape.size(); ++d) {
    if (idx[d] < 0 || idx[d] >= shape[d]) throw ConfigError("tensor index out of range");
    flat += idx[d] * stride;
    stride *= shape[d];
  }
  return flat;
}

static void check_mode(int mode, const std::vector<Index>& shape) {
  if (mode < 1 || mode > static_cast<int>(shape.size()))
    throw ConfigError("mode " + std::to_string(mode) + " out of range for order " +
                      std::to_string(shape.size()) + " tensor");
}

Matrix matricize_vector(const Vector& v, int mode, const std::vector<Index>& shape) {
  check_mode(mode, shape);
  const Index total = shape_size(shape);
  if (v.size() != total) throw ConfigError("buffer length does not match shape");
  const size_t d = static_cast<size_t>(mode - 1);
  const Index pd = shape[d];
  const Index cols = total / pd;
  if (mode == 1) return Eigen::Map<const Matrix>(v.data(), pd, cols);

  // stride of the mode-d coordinate in the flat buffer, and the stride each
  // remaining coordinate contributes to the unfolding's column index
  Index row_stride = 1;
  for (size_t k = 0; k < d; ++k) row_stride *= shape[k];

  Matrix out(pd, cols);
  std::vector<Index> idx(shape.size(), 0);
  for (Index flat = 0; flat < total; ++flat) {
    Index col = 0, cstride = 1;
    for (size_t k = 0; k < shape.size(); ++k) {
      if (k == d) continue;
      col += idx[k] * cstride;
      cstride *= shape[k];
    }
    out(idx[d], col) = v[flat];
    for (size_t k = 0; k < shape.size(); ++k) {  // odometer increment
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

Matrix matricize(const DenseTensor& t, int mode) {
  return matricize_vector(t.data, mode, t.shape);
}

DenseTensor inverse_matricize(const Matrix& m, int mode, const std::vector<Index>& shape) {
  check_mode(mode, shape);
  const size_t d = static_cast<size_t>(mode - 1);
  const Index total = shape_size(shape);
  if (m.rows() != shape[d] || m.cols() != total / shape[d])
    throw ConfigError("unfolding dimensions do not match target shape");
  DenseTensor t(shape);
  std::vector<Index> idx(shape.size(), 0);
  for (Index flat = 0; flat < total; ++flat) {
    Index col = 0, cstride = 1;
    for (size_t k = 0; k < shape.size(); ++k) {
      if (k == d) continue;
      col += idx[k] * cstride;
      cstride *= shape[k];
    }
    t.data[flat] = m(idx[d], col);
    for (size_t k = 0; k < shape.size(); ++k) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return t;
}

Vector vectorize(const DenseTensor& t, int mode) {
  if (mode == 1) {
    check_mode(mode, t.shape);
    return t.data;
  }
  Matrix m = matricize(t, mode);
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ConfigError("khatri_rao: column counts differ (" + std::to_string(a.cols()) +
                      " vs " + std::to_string(b.cols()) + ")");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Index r = 0; r < a.cols(); ++r)
    for (Index i = 0; i < a.rows(); ++i)
      out.col(r).segment(i * b.rows(), b.rows()) = a(i, r) * b.col(r);
  return out;
}

Matrix khatri_rao_chain(const std::vector<Matrix>& factors, int skip_mode) {
  if (factors.empty()) throw ConfigError("khatri_rao_chain: empty factor list");
  if (skip_mode < 0 || skip_mode > static_cast<int>(factors.size()))
    throw ConfigError("khatri_rao_chain: skip mode out of range");
  Matrix out;
  bool seeded = false;
  // highest mode first so the mode-1 index ends up fastest in each column
  for (int d = static_cast<int>(factors.size()); d >= 1; --d) {
    if (d == skip_mode) continue;
    const Matrix& f = factors[static_cast<size_t>(d - 1)];
    out = seeded ? khatri_rao(out, f) : f;
    seeded = true;
  }
  // skipping the only factor leaves the product's neutral element
  if (!seeded) return Matrix::Ones(1, factors.front().cols());
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError("hadamard: shape mismatch");
  return a.cwiseProduct(b);
}

FactorSet::FactorSet(std::vector<Matrix> f) : factors(std::move(f)) {
  const Index r = rank();
  for (const Matrix& a : factors)
    if (a.cols() != r) throw ConfigError("factor set: inconsistent ranks");
}

std::vector<Index> FactorSet::dims() const {
  std::vector<Index> d;
  d.reserve(factors.size());
  for (const Matrix& a : factors) d.push_back(a.rows());
  return d;
}

DenseTensor cp_reconstruct(const FactorSet& f, const Vector* weights) {
  if (f.factors.empty()) throw ConfigError("cp_reconstruct: empty factor set");
  const Index rank = f.rank();
  if (weights && weights->size() != rank)
    throw ConfigError("cp_reconstruct: weight length does not match rank");
  DenseTensor t(f.dims());
  std::vector<Index> idx(f.factors.size(), 0);
  for (Index flat = 0; flat < t.size(); ++flat) {
    double v = 0.0;
    for (Index r = 0; r < rank; ++r) {
      double prod = weights ? (*weights)[r] : 1.0;
      for (size_t d = 0; d < f.factors.size(); ++d) prod *= f.factors[d](idx[d], r);
      v += prod;
    }
    t.data[flat] = v;
    for (size_t d = 0; d < f.factors.size(); ++d) {
      if (++idx[d] < t.shape[d]) break;
      idx[d] = 0;
    }
  }
  return t;
}

double frobenius_norm(const DenseTensor& t) { return t.data.norm(); }

}  // namespace lfp
