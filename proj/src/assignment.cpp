#include "stereopose/assignment.hpp"

#include <algorithm>
#include <limits>

#include "stereopose/errors.hpp"

namespace stereopose {

std::vector<std::pair<std::size_t, std::size_t>> max_weight_matching(std::span<const double> weights,
                                                                     std::size_t rows,
                                                                     std::size_t cols) {
  if (weights.size() != rows * cols) throw ShapeMismatch("weight matrix size does not match rows*cols");
  std::vector<std::pair<std::size_t, std::size_t>> result;
  if (rows == 0 || cols == 0) return result;

  // Square cost matrix, 1-based potentials (classic Kuhn-Munkres with potentials).
  const std::size_t n = std::max(rows, cols);
  auto cost = [&](std::size_t i, std::size_t j) -> double {
    if (i >= rows || j >= cols) return 0.0;
    const double w = weights[i * cols + j];
    return w > 0.0 ? -w : 0.0;
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1;
    const std::size_t col = j - 1;
    if (i < rows && col < cols && weights[i * cols + col] > 0.0) result.emplace_back(i, col);
  }
  std::sort(result.begin(), result.end());
  return result;
}

}  // namespace stereopose
