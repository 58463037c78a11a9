#include "afa/common.hpp"

#include <sstream>

namespace afa {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "regression";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "classification") return TaskKind::kClassification;
  if (name == "regression") return TaskKind::kRegression;
  throw ConfigError("unknown task kind '" + name + "'");
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

FeatureSet::FeatureSet(std::initializer_list<int> items) : FeatureSet(std::vector<int>(items)) {}

FeatureSet::FeatureSet(std::vector<int> items) : items_(std::move(items)) {
  std::sort(items_.begin(), items_.end());
  items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
}

FeatureSet FeatureSet::range(int begin, int end) {
  FeatureSet s;
  for (int j = begin; j < end; ++j) s.items_.push_back(j);
  return s;
}

bool FeatureSet::contains(int j) const {
  return std::binary_search(items_.begin(), items_.end(), j);
}

void FeatureSet::insert(int j) {
  auto it = std::lower_bound(items_.begin(), items_.end(), j);
  if (it == items_.end() || *it != j) items_.insert(it, j);
}

FeatureSet FeatureSet::united(const FeatureSet& other) const {
  FeatureSet out;
  out.items_.reserve(items_.size() + other.items_.size());
  std::set_union(items_.begin(), items_.end(), other.items_.begin(), other.items_.end(),
                 std::back_inserter(out.items_));
  return out;
}

bool FeatureSet::disjoint(const FeatureSet& other) const {
  auto a = items_.begin();
  auto b = other.items_.begin();
  while (a != items_.end() && b != other.items_.end()) {
    if (*a == *b) return false;
    if (*a < *b) ++a; else ++b;
  }
  return true;
}

std::string FeatureSet::to_string() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < items_.size(); ++i) os << (i ? "," : "") << items_[i];
  os << '}';
  return os.str();
}

std::size_t FeatureSetHash::operator()(const FeatureSet& s) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int j : s) {
    h ^= static_cast<std::uint64_t>(j) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

}  // namespace afa
