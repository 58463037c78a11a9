#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace afa {

/// Runtime failure inside the library (bad data, contract violation, numeric blowup).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class TaskKind { kClassification, kRegression };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent per-instance streams.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

inline Rng make_rng(std::uint64_t master, std::uint64_t stream = 0) {
  return Rng(mix_seed(master, stream));
}

/// Sorted, duplicate-free set of feature indices.
///
/// Ordering (operator<) is the canonical subset order used for every
/// deterministic tie-break: smaller cardinality first, then lexicographic.
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(std::initializer_list<int> items);
  explicit FeatureSet(std::vector<int> items);

  static FeatureSet range(int begin, int end);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(int j) const;
  void insert(int j);

  const std::vector<int>& items() const { return items_; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  int operator[](std::size_t i) const { return items_[i]; }

  FeatureSet united(const FeatureSet& other) const;
  bool disjoint(const FeatureSet& other) const;

  std::string to_string() const;

  friend bool operator==(const FeatureSet& a, const FeatureSet& b) { return a.items_ == b.items_; }
  friend bool operator<(const FeatureSet& a, const FeatureSet& b) {
    if (a.items_.size() != b.items_.size()) return a.items_.size() < b.items_.size();
    return a.items_ < b.items_;
  }

 private:
  std::vector<int> items_;
};

struct FeatureSetHash {
  std::size_t operator()(const FeatureSet& s) const noexcept;
};

/// Up to two training-row ids removed from a neighbor query: the episode's own
/// row (when the instance comes from the training set) and, inside the
/// expected-loss estimate, the neighbor whose values complete the query.
class RowExclusion {
 public:
  RowExclusion() = default;
  explicit RowExclusion(std::optional<std::size_t> row) {
    if (row) add(*row);
  }
  void add(std::size_t row) {
    if (contains(row)) return;
    if (count_ == ids_.size()) throw Error("RowExclusion holds at most two rows");
    ids_[count_++] = row;
  }
  bool contains(std::size_t row) const {
    for (std::size_t i = 0; i < count_; ++i)
      if (ids_[i] == row) return true;
    return false;
  }
  std::size_t count() const { return count_; }
  std::size_t operator[](std::size_t t) const { return ids_[t]; }
  RowExclusion with(std::size_t row) const {
    RowExclusion copy = *this;
    copy.add(row);
    return copy;
  }

 private:
  std::array<std::size_t, 2> ids_{};
  std::size_t count_ = 0;
};

}  // namespace afa
