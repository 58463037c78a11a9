#include "afa/neighbors.hpp"

#include <limits>
#include <numeric>

namespace afa {

NeighborIndex::NeighborIndex(const Matrix& features)
    : rows_(features.rows()), cols_(features.cols()), columns_(rows_ * cols_) {
  if (rows_ == 0) throw Error("cannot build a neighbor index over an empty dataset");
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) columns_[j * rows_ + i] = features(i, j);
}

NeighborIndex build_index(const Dataset& data) { return NeighborIndex(data.features); }

std::vector<std::size_t> NeighborIndex::query(std::span<const int> observed,
                                              std::span<const double> values, std::size_t k,
                                              const RowExclusion& exclude) const {
  if (k == 0) throw Error("neighbor query needs k >= 1");
  if (observed.size() != values.size()) throw Error("neighbor query: |x_o| != |o|");
  for (int j : observed)
    if (j < 0 || static_cast<std::size_t>(j) >= cols_)
      throw Error("neighbor query: feature index " + std::to_string(j) + " out of range");

  const std::size_t available = rows_ - std::min(rows_, exclude.count());
  const std::size_t want = std::min(k, available);
  std::vector<std::size_t> result;
  if (want == 0) return result;

  if (observed.empty()) {
    for (std::size_t i = 0; i < rows_ && result.size() < want; ++i)
      if (!exclude.contains(i)) result.push_back(i);
    return result;
  }

  auto ordered = [](double da, std::size_t a, double db, std::size_t b) {
    return da < db || (da == db && a < b);
  };

  // Distances are accumulated one row block at a time so the partial sums
  // stay in cache; per-row summation order matches a plain column scan.
  constexpr std::size_t kBlock = 256;
  double block[kBlock];
  std::vector<double> best_dist;
  result.reserve(want + 1);
  best_dist.reserve(want + 1);
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start < rows_; start += kBlock) {
    const std::size_t len = std::min(kBlock, rows_ - start);
    std::fill(block, block + len, 0.0);
    for (std::size_t c = 0; c < observed.size(); ++c) {
      const double* __restrict col = columns_.data() + static_cast<std::size_t>(observed[c]) * rows_ + start;
      const double q = values[c];
      for (std::size_t t = 0; t < len; ++t) {
        const double diff = col[t] - q;
        block[t] += diff * diff;
      }
    }
    for (std::size_t t = 0; t < len; ++t) {
      const double dt = block[t];
      if (result.size() == want && !(dt < worst)) continue;
      const std::size_t i = start + t;
      if (exclude.count() && exclude.contains(i)) continue;
      // Rows arrive in ascending id order, so an equal distance never
      // displaces an earlier row.
      std::size_t pos = result.size();
      while (pos > 0 && ordered(dt, i, best_dist[pos - 1], result[pos - 1])) --pos;
      result.insert(result.begin() + static_cast<std::ptrdiff_t>(pos), i);
      best_dist.insert(best_dist.begin() + static_cast<std::ptrdiff_t>(pos), dt);
      if (result.size() > want) {
        result.pop_back();
        best_dist.pop_back();
      }
      if (result.size() == want) worst = best_dist.back();
    }
  }
  return result;
}

std::vector<std::size_t> neighbors(const NeighborIndex& index, std::span<const double> x_o,
                                   std::span<const int> o, std::size_t k,
                                   std::optional<std::size_t> exclude) {
  return index.query(o, x_o, k, RowExclusion(exclude));
}

}  // namespace afa
