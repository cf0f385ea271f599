#include "stereopose/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace stereopose::kernels {

namespace {

void check_nn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) throw ShapeMismatch("gemm_nn shapes");
}

Matrix transposed(ConstMatrixRef m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

constexpr std::size_t kTileRows = 6;
constexpr std::size_t kTileCols = 32;
// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

// Eight doubles, unaligned. Keeps the full-width accumulators in registers.
typedef double Lane __attribute__((vector_size(64), aligned(8)));
constexpr std::size_t kLanes = kTileCols / 8;

// Register-blocked tile: rows [i, i+MR) x cols [j, j+width) of c, width <= kTileCols.
template <std::size_t MR>
inline void tile(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc, std::size_t k, std::size_t width, bool accumulate) {
  if (width == kTileCols) {
    Lane acc[MR][kLanes] = {};
    for (std::size_t p = 0; p < k; ++p) {
      const Lane* brow = reinterpret_cast<const Lane*>(b + p * ldb);
      const Lane b0 = brow[0], b1 = brow[1], b2 = brow[2], b3 = brow[3];
      for (std::size_t r = 0; r < MR; ++r) {
        const double av = a[r * lda + p];
        acc[r][0] += av * b0;
        acc[r][1] += av * b1;
        acc[r][2] += av * b2;
        acc[r][3] += av * b3;
      }
    }
    for (std::size_t r = 0; r < MR; ++r) {
      Lane* crow = reinterpret_cast<Lane*>(c + r * ldc);
      for (std::size_t q = 0; q < kLanes; ++q) crow[q] = accumulate ? crow[q] + acc[r][q] : acc[r][q];
    }
    return;
  }
  static_assert(kLanes == 4);
  double acc[MR][kTileCols] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    for (std::size_t r = 0; r < MR; ++r) {
      const double av = a[r * lda + p];
      for (std::size_t j = 0; j < width; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    double* crow = c + r * ldc;
    if (accumulate) {
      for (std::size_t j = 0; j < width; ++j) crow[j] += acc[r][j];
    } else {
      for (std::size_t j = 0; j < width; ++j) crow[j] = acc[r][j];
    }
  }
}

void row_block(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, std::size_t i0, std::size_t rows,
               bool accumulate) {
  const std::size_t k = a.cols, n = b.cols;
  for (std::size_t j = 0; j < n; j += kTileCols) {
    const std::size_t width = std::min(kTileCols, n - j);
    const double* ap = a.data + i0 * k;
    double* cp = c.data + i0 * n + j;
    switch (rows) {
      case 6: tile<6>(ap, k, b.data + j, n, cp, n, k, width, accumulate); break;
      case 5: tile<5>(ap, k, b.data + j, n, cp, n, k, width, accumulate); break;
      case 4: tile<4>(ap, k, b.data + j, n, cp, n, k, width, accumulate); break;
      case 3: tile<3>(ap, k, b.data + j, n, cp, n, k, width, accumulate); break;
      case 2: tile<2>(ap, k, b.data + j, n, cp, n, k, width, accumulate); break;
      default: tile<1>(ap, k, b.data + j, n, cp, n, k, width, accumulate); break;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

namespace serial {

void gemm_nn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate) {
  check_nn(a, b, c);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
      c(i, j) = accumulate ? c(i, j) + s : s;
    }
}

void gemm_nt(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows) throw ShapeMismatch("gemm_nt shapes");
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(j, p);
      c(i, j) = accumulate ? c(i, j) + s : s;
    }
}

void gemm_tn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) throw ShapeMismatch("gemm_tn shapes");
  for (std::size_t i = 0; i < a.cols; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows; ++p) s += a(p, i) * b(p, j);
      c(i, j) = accumulate ? c(i, j) + s : s;
    }
}

void column_sums(ConstMatrixRef a, std::span<double> out, bool accumulate) {
  if (out.size() != a.cols) throw ShapeMismatch("column_sums size");
  for (std::size_t j = 0; j < a.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += a(i, j);
    out[j] = accumulate ? out[j] + s : s;
  }
}

double max_pairwise_distance(std::span<const Vec3> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::max(best, (points[i] - points[j]).norm());
  return best;
}

double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.empty() || to.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.size());
}

double mean_paired_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) throw ShapeMismatch("paired point sets differ in size");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

}  // namespace serial

// ---------------------------------------------------------------------------

namespace parallel {

void gemm_nn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate) {
  check_nn(a, b, c);
  const std::size_t m = a.rows;
  const std::size_t tiles = (m + kTileRows - 1) / kTileRows;
  const bool fork = m * b.cols * a.cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (fork)
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t i0 = t * kTileRows;
    row_block(a, b, c, i0, std::min(kTileRows, m - i0), accumulate);
  }
}

void gemm_nt(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows) throw ShapeMismatch("gemm_nt shapes");
  const Matrix bt = transposed(b);
  gemm_nn(a, bt.cref(), c, accumulate);
}

void gemm_tn(ConstMatrixRef a, ConstMatrixRef b, MatrixRef c, bool accumulate) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) throw ShapeMismatch("gemm_tn shapes");
  const Matrix at = transposed(a);
  gemm_nn(at.cref(), b, c, accumulate);
}

void column_sums(ConstMatrixRef a, std::span<double> out, bool accumulate) {
  if (out.size() != a.cols) throw ShapeMismatch("column_sums size");
  // Row-major friendly: each thread owns a band of columns and walks rows in order.
  constexpr std::size_t kBand = 64;
  const std::size_t bands = (a.cols + kBand - 1) / kBand;
  const bool fork = a.rows * a.cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (fork)
  for (std::size_t band = 0; band < bands; ++band) {
    const std::size_t j0 = band * kBand, j1 = std::min(a.cols, j0 + kBand);
    double acc[kBand] = {};
    for (std::size_t i = 0; i < a.rows; ++i) {
      const double* row = a.data + i * a.cols;
      for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += row[j];
    }
    for (std::size_t j = j0; j < j1; ++j) out[j] = accumulate ? out[j] + acc[j - j0] : acc[j - j0];
  }
}

double max_pairwise_distance(std::span<const Vec3> points) {
  const std::size_t n = points.size();
  double best = 0.0;
#pragma omp parallel for schedule(dynamic, 16) reduction(max : best)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) best = std::max(best, (points[i] - points[j]).norm());
  return best;
}

double mean_nearest_distance(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.empty() || to.empty()) return 0.0;
  std::vector<double> nearest(from.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (from[i] - q).squaredNorm());
    nearest[i] = std::sqrt(best);
  }
  double sum = 0.0;
  for (double d : nearest) sum += d;
  return sum / static_cast<double>(from.size());
}

double mean_paired_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) throw ShapeMismatch("paired point sets differ in size");
  if (a.empty()) return 0.0;
  std::vector<double> d(a.size());
#pragma omp parallel for schedule(static) if (a.size() >= 4096)
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = (a[i] - b[i]).norm();
  double sum = 0.0;
  for (double x : d) sum += x;
  return sum / static_cast<double>(a.size());
}

}  // namespace parallel

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace stereopose::kernels
