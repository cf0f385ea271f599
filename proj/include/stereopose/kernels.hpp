#pragma once

// Dense numeric kernels in two flavours: `serial` holds straightforward
// reference loops used by the tests, `parallel` holds the OpenMP versions used
// everywhere else. Every parallel kernel assigns each output element to exactly
// one thread and sums in the same order as its serial twin, so results do not
// depend on the thread count.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "stereopose/geometry.hpp"

namespace stereopose::kernels {

/// Row-major view with contiguous rows.
struct MatrixRef {
  double* data = nullptr;
  std::size_t rows = 0, cols = 0;
  double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct ConstMatrixRef {
  const double* data = nullptr;
  std::size_t rows = 0, cols = 0;
  ConstMatrixRef() = default;
  ConstMatrixRef(const double* d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {}
  ConstMatrixRef(MatrixRef m) : data(m.data), rows(m.rows), cols(m.cols) {}  // NOLINT
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Owning row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  MatrixRef ref() { return {data_.data(), rows_, cols_}; }
  ConstMatrixRef ref() const { return {data_.data(), rows_, cols_}; }
  ConstMatrixRef cref() const { return ref(); }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

namespace serial {

/// c = a b  (or c += a b when `accumulate`)
void gemm_nn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate = false);
/// c = a b^T
void gemm_nt(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate = false);
/// c = a^T b
void gemm_tn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate = false);
/// out[j] (+)= sum_i a(i, j)
void column_sums(ConstMatrixRef a, std::span<double> out, bool accumulate = false);

double max_pairwise_distance(std::span<const Vec3> points);
/// Mean over `from` of the distance to the nearest point of `to`.
double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to);
/// Mean distance between corresponding points.
double mean_paired_distance(std::span<const Vec3> a, std::span<const Vec3> b);

}  // namespace serial

namespace parallel {

void gemm_nn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate = false);
void gemm_nt(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate = false);
void gemm_tn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate = false);
void column_sums(ConstMatrixRef a, std::span<double> out, bool accumulate = false);

double max_pairwise_distance(std::span<const Vec3> points);
double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to);
double mean_paired_distance(std::span<const Vec3> a, std::span<const Vec3> b);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use.
int thread_count();
void set_thread_count(int n);

}  // namespace stereopose::kernels
