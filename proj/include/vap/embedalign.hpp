#pragma once

// Alignment metrics between two token-embedding matrices whose rows are in
// correspondence: row-wise cosine, linear CKA and nearest-neighbour top-1.

#include <cmath>
#include <cstddef>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vap/error.hpp"

namespace vap {

/// Row-major real matrix, one token embedding per row.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows_ == 0 || cols_ == 0) throw DimensionMismatch("embedding matrix must be non-empty");
    if (values_.size() != rows_ * cols_) throw DimensionMismatch("embedding matrix value count != rows * cols");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidEmbedding("embedding matrix has a non-finite entry");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> values() const noexcept { return values_; }

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> as_eigen() const {
    return {values_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct AlignmentReport {
  double mean_cosine = 0.0;
  double std_cosine = 0.0;
  double cka = 0.0;
  double knn_top1 = 0.0;
};

namespace detail {

inline double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

inline std::vector<double> row_norms(const EmbeddingMatrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out[i] = row_norm(m.row(i));
    if (out[i] == 0.0) throw UndefinedMetric("zero row " + std::to_string(i) + " has no direction");
  }
  return out;
}

inline double row_cosine(std::span<const double> a, double na, std::span<const double> b, double nb) {
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot / (na * nb);
}

inline void require_same_shape(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionMismatch("embedding matrices differ in shape");
}

}  // namespace detail

/// Mean and population standard deviation of cos(A_i, B_i).
inline std::pair<double, double> rowwise_cosine(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  detail::require_same_shape(a, b);
  const auto na = detail::row_norms(a);
  const auto nb = detail::row_norms(b);
  std::vector<double> cos(a.rows());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    cos[i] = detail::row_cosine(a.row(i), na[i], b.row(i), nb[i]);
    sum += cos[i];
  }
  const double mean = sum / static_cast<double>(a.rows());
  double var = 0.0;
  for (double c : cos) var += (c - mean) * (c - mean);
  return {mean, std::sqrt(var / static_cast<double>(a.rows()))};
}

/// Linear CKA in feature space: ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F)
/// with column-centred inputs. Column counts may differ.
inline double linear_cka(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("CKA needs equal row counts");
  if (a.rows() < 2) throw UndefinedMetric("CKA needs at least two rows");
  const Eigen::MatrixXd x = a.as_eigen();
  const Eigen::MatrixXd y = b.as_eigen();
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double self_x = (xc.transpose() * xc).norm();
  const double self_y = (yc.transpose() * yc).norm();
  if (self_x == 0.0 || self_y == 0.0) throw UndefinedMetric("CKA undefined: a matrix has identical rows");
  return cross / (self_x * self_y);
}

/// Fraction of rows whose cosine nearest neighbour in B is their own
/// counterpart. Ties go to the lowest index.
inline double knn_top1(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  detail::require_same_shape(a, b);
  const auto na = detail::row_norms(a);
  const auto nb = detail::row_norms(b);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t best = 0;
    double best_cos = detail::row_cosine(a.row(i), na[i], b.row(0), nb[0]);
    for (std::size_t j = 1; j < b.rows(); ++j) {
      const double c = detail::row_cosine(a.row(i), na[i], b.row(j), nb[j]);
      if (c > best_cos) {
        best_cos = c;
        best = j;
      }
    }
    hits += best == i;
  }
  return static_cast<double>(hits) / static_cast<double>(a.rows());
}

inline AlignmentReport align(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  AlignmentReport r;
  std::tie(r.mean_cosine, r.std_cosine) = rowwise_cosine(a, b);
  r.cka = linear_cka(a, b);
  r.knn_top1 = knn_top1(a, b);
  return r;
}

}  // namespace vap
