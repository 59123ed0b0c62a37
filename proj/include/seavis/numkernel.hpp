#pragma once

// Minimal dense numeric kernel shared by every other module: row-major
// N-dimensional arrays of doubles, matrix product, masked row softmax and
// L2 normalization. No BLAS, no SIMD; correctness at desk scale.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "seavis/errors.hpp"

namespace seavis {

// "-inf" mask entries are encoded as a large negative finite sentinel so
// that mask arithmetic never produces NaN. Any combined logit at or below
// kMaskExcluded is treated as excluded from the softmax support.
inline constexpr double kMaskNegInf = -std::numeric_limits<double>::max() / 2.0;
inline constexpr double kMaskExcluded = kMaskNegInf / 2.0;

inline std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

struct DenseArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  DenseArray() = default;

  explicit DenseArray(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel(shape), 0.0) {}

  DenseArray(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
      throw DimensionError("DenseArray: shape/data size mismatch");
  }

  static DenseArray vector(std::initializer_list<double> values) {
    return DenseArray({values.size()}, std::vector<double>(values));
  }

  static DenseArray from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c)
        throw DimensionError("DenseArray::from_rows: ragged rows");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return DenseArray({r, c}, std::move(flat));
  }

  std::size_t ndim() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }

  double& operator()(std::size_t a, std::size_t b, std::size_t c) {
    return data[(a * shape[1] + b) * shape[2] + c];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const {
    return data[(a * shape[1] + b) * shape[2] + c];
  }

  double& operator()(std::size_t a, std::size_t b, std::size_t c,
                     std::size_t d) {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c,
                    std::size_t d) const {
    return data[((a * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }

  bool same_shape(const DenseArray& other) const {
    return shape == other.shape;
  }
};

// Additive attention mask: entries are 0 (visible) or kMaskNegInf (excluded).
// Invariant: every row keeps at least one visible entry.
struct AdditiveMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;

  AdditiveMask() = default;
  AdditiveMask(std::size_t r, std::size_t c)
      : rows(r), cols(c), entries(r * c, 0.0) {}

  double at(std::size_t i, std::size_t j) const {
    return entries[i * cols + j];
  }
  void exclude(std::size_t i, std::size_t j) {
    entries[i * cols + j] = kMaskNegInf;
  }
  bool excluded(std::size_t i, std::size_t j) const {
    return at(i, j) <= kMaskExcluded;
  }
};

inline double dot(const DenseArray& a, const DenseArray& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double l2_norm(const DenseArray& v) {
  double s = 0.0;
  for (double x : v.data) s += x * x;
  return std::sqrt(s);
}

inline DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul: operands must be 2-D");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  DenseArray out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * b(p, j);
    }
  }
  return out;
}

// Row-wise softmax with optional additive mask. Excluded positions get an
// exact 0.0 in the output so downstream products cannot leak their values.
inline DenseArray softmax_rows(const DenseArray& logits,
                               const AdditiveMask* mask = nullptr) {
  if (logits.ndim() != 2)
    throw DimensionError("softmax_rows: logits must be 2-D");
  const std::size_t r = logits.rows(), c = logits.cols();
  if (mask != nullptr && (mask->rows != r || mask->cols != c))
    throw DimensionError("softmax_rows: mask shape mismatch");

  DenseArray out({r, c});
  std::vector<double> combined(c);
  for (std::size_t i = 0; i < r; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      double z = logits(i, j);
      if (mask != nullptr) z += mask->at(i, j);
      combined[j] = z;
      if (z > kMaskExcluded) {
        any = true;
        if (z > row_max) row_max = z;
      }
    }
    if (!any)
      throw NumericError("softmax_rows: fully masked row " +
                         std::to_string(i));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (combined[j] > kMaskExcluded) {
        out(i, j) = std::exp(combined[j] - row_max);
        denom += out(i, j);
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      if (combined[j] > kMaskExcluded) out(i, j) /= denom;
    }
  }
  return out;
}

// x / (||x||_2 + eps); the epsilon keeps the zero vector at zero.
inline DenseArray l2_normalize(const DenseArray& v, double eps = 1e-12) {
  const double inv = 1.0 / (l2_norm(v) + eps);
  DenseArray out = v;
  for (double& x : out.data) x *= inv;
  return out;
}

}  // namespace seavis
