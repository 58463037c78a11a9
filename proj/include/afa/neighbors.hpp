#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "afa/common.hpp"
#include "afa/data.hpp"

namespace afa {

/// Exact partial-observation nearest-neighbor search over a standardized
/// dataset. Distances are squared Euclidean restricted to the queried
/// features; ties are broken by ascending row id, so an empty query returns
/// rows 0..k-1.
///
/// Read-only after construction and safe for concurrent queries.
class NeighborIndex {
 public:
  explicit NeighborIndex(const Matrix& features);

  std::size_t size() const { return rows_; }
  std::size_t dim() const { return cols_; }

  /// `observed` lists feature indices; `values` holds their query values in
  /// the same order. Returns up to k row ids, nearest first. Fewer than k are
  /// returned only when exclusions leave fewer rows.
  std::vector<std::size_t> query(std::span<const int> observed, std::span<const double> values,
                                 std::size_t k, const RowExclusion& exclude = {}) const;

  /// Column-major view of feature j.
  std::span<const double> column(std::size_t j) const { return {columns_.data() + j * rows_, rows_}; }
  double value(std::size_t row, std::size_t j) const { return columns_[j * rows_ + row]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> columns_;
};

NeighborIndex build_index(const Dataset& data);

std::vector<std::size_t> neighbors(const NeighborIndex& index, std::span<const double> x_o,
                                   std::span<const int> o, std::size_t k,
                                   std::optional<std::size_t> exclude = std::nullopt);

}  // namespace afa
