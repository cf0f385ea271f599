#include <gtest/gtest.h>

#include <vector>

#include "oracles.hpp"
#include "stereopose/kernels.hpp"
#include "stereopose/rng.hpp"

namespace stereopose::kernels {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

struct Shape {
  std::size_t m, k, n;
};

class Gemm : public ::testing::TestWithParam<Shape> {};

TEST_P(Gemm, ParallelMatchesSerialAndIsThreadIndependent) {
  const auto [m, k, n] = GetParam();
  Rng rng(m * 131 + k * 17 + n);
  const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
  const Matrix bt = random_matrix(n, k, rng), at = random_matrix(k, m, rng);
  const Matrix seed = random_matrix(m, n, rng);

  for (int variant = 0; variant < 3; ++variant) {
    for (bool acc : {false, true}) {
      Matrix ref = seed, out = seed;
      auto run = [&](auto&& fn, Matrix& c) {
        if (variant == 0) fn.nn(a.cref(), b.cref(), c.ref(), acc);
        if (variant == 1) fn.nt(a.cref(), bt.cref(), c.ref(), acc);
        if (variant == 2) fn.tn(at.cref(), b.cref(), c.ref(), acc);
      };
      struct S {
        void nn(ConstMatrixRef x, ConstMatrixRef y, MatrixRef z, bool q) { serial::gemm_nn(x, y, z, q); }
        void nt(ConstMatrixRef x, ConstMatrixRef y, MatrixRef z, bool q) { serial::gemm_nt(x, y, z, q); }
        void tn(ConstMatrixRef x, ConstMatrixRef y, MatrixRef z, bool q) { serial::gemm_tn(x, y, z, q); }
      };
      struct P {
        void nn(ConstMatrixRef x, ConstMatrixRef y, MatrixRef z, bool q) { parallel::gemm_nn(x, y, z, q); }
        void nt(ConstMatrixRef x, ConstMatrixRef y, MatrixRef z, bool q) { parallel::gemm_nt(x, y, z, q); }
        void tn(ConstMatrixRef x, ConstMatrixRef y, MatrixRef z, bool q) { parallel::gemm_tn(x, y, z, q); }
      };
      run(S{}, ref);
      const int saved = thread_count();
      set_thread_count(1);
      run(P{}, out);
      Matrix out4 = seed;
      set_thread_count(4);
      run(P{}, out4);
      set_thread_count(saved);
      EXPECT_LT(max_abs_diff(ref, out), 1e-12 * static_cast<double>(k)) << "variant " << variant;
      EXPECT_EQ(max_abs_diff(out, out4), 0.0) << "variant " << variant;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, Gemm,
                         ::testing::Values(Shape{1, 1, 1}, Shape{5, 3, 7}, Shape{13, 128, 128}, Shape{65, 37, 31},
                                           Shape{130, 128, 512}, Shape{7, 512, 33}));

TEST(Gemm, RejectsMismatchedShapes) {
  Matrix a(2, 3), b(4, 2), c(2, 2);
  EXPECT_THROW(parallel::gemm_nn(a.cref(), b.cref(), c.ref()), ShapeMismatch);
  EXPECT_THROW(serial::gemm_nn(a.cref(), b.cref(), c.ref()), ShapeMismatch);
}

TEST(Reductions, ColumnSums) {
  Rng rng(3);
  const Matrix a = random_matrix(300, 70, rng);
  std::vector<double> s(70), p(70);
  serial::column_sums(a.cref(), s);
  parallel::column_sums(a.cref(), p);
  for (std::size_t j = 0; j < 70; ++j) {
    double brute = 0.0;
    for (std::size_t i = 0; i < 300; ++i) brute += a(i, j);
    EXPECT_NEAR(s[j], brute, 1e-12);
    EXPECT_EQ(s[j], p[j]);
  }
}

TEST(Reductions, PointSetDistancesMatchBruteForce) {
  Rng rng(4);
  std::vector<Vec3> a(517), b(517);
  for (auto& v : a) v = Vec3(rng.normal(), rng.normal(), rng.normal()) * 50.0;
  for (auto& v : b) v = Vec3(rng.normal(), rng.normal(), rng.normal()) * 50.0;
  for (int threads : {1, 3}) {
    const int saved = thread_count();
    set_thread_count(threads);
    EXPECT_NEAR(parallel::mean_paired_distance(a, b), test::mean_of_norms(a, b), 1e-9);
    EXPECT_NEAR(parallel::mean_nearest_distance(a, b), test::mean_nearest(a, b), 1e-9);
    EXPECT_NEAR(parallel::max_pairwise_distance(a), test::max_pairwise(a), 1e-12);
    EXPECT_EQ(parallel::mean_paired_distance(a, b), serial::mean_paired_distance(a, b));
    EXPECT_EQ(parallel::mean_nearest_distance(a, b), serial::mean_nearest_distance(a, b));
    set_thread_count(saved);
  }
}

}  // namespace
}  // namespace stereopose::kernels
