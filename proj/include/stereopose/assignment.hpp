#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace stereopose {

/// Maximum-weight partial matching on a rows x cols weight matrix (row-major).
/// Entries <= 0 are treated as forbidden, so the result only contains pairs with
/// positive weight. Hungarian algorithm, O(n^3) with n = max(rows, cols).
/// Pairs are returned sorted by row.
std::vector<std::pair<std::size_t, std::size_t>> max_weight_matching(std::span<const double> weights,
                                                                     std::size_t rows,
                                                                     std::size_t cols);

}  // namespace stereopose
