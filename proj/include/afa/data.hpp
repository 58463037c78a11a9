#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afa/common.hpp"

namespace afa {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& storage() const { return data_; }

  void append_row(std::span<const double> values);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-feature affine transform z = (x - mean) / scale.
struct StandardizationParams {
  std::vector<double> means;
  std::vector<double> scales;

  double apply(std::size_t j, double raw) const { return (raw - means[j]) / scales[j]; }
  double invert(std::size_t j, double z) const { return z * scales[j] + means[j]; }
};

/// Complete-feature tabular data. When `standardization` is set the stored
/// features are already in standardized units and the params map them back.
struct Dataset {
  Matrix features;
  std::vector<double> labels;
  std::vector<std::string> feature_names;
  std::optional<StandardizationParams> standardization;
  TaskKind task = TaskKind::kClassification;
  int num_classes = 0;  // 0 for regression

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  int label_index(std::size_t i) const { return static_cast<int>(labels[i]); }

  /// Raw-unit value of feature j on row i.
  double raw_value(std::size_t i, std::size_t j) const {
    return standardization ? standardization->invert(j, features(i, j)) : features(i, j);
  }

  /// Throws Error when an invariant is broken (empty, label out of range, non-finite cell).
  void validate() const;

  /// Rows listed in `rows`, in that order.
  Dataset subset_rows(std::span<const std::size_t> rows) const;
  /// Only the listed columns (standardization params are narrowed accordingly).
  Dataset subset_columns(const FeatureSet& columns) const;
};

std::vector<std::string> default_feature_names(std::size_t d);

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column, TaskKind task);
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "label");

/// Raw CSV table, all cells numeric. Shared by both dataset loaders.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t column(const std::string& name) const;
};
NumericTable read_numeric_csv(const std::filesystem::path& path);

/// Fits params on `data` (population variance; constant columns keep scale 1)
/// and returns the standardized copy.
std::pair<Dataset, StandardizationParams> standardize(const Dataset& data);
/// Applies existing params (e.g. fitted on the training split) to raw data.
Dataset apply_standardization(const Dataset& raw, const StandardizationParams& params);
Dataset unstandardize(const Dataset& standardized);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train, val, test;
  std::vector<std::size_t> train_rows, val_rows, test_rows;
};

DatasetSplit split(const Dataset& data, SplitFractions fractions, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic generators

inline constexpr int kCubeDim = 20;
inline constexpr int kCubeClasses = 8;

/// Class k places normal features on positions k, k+1, k+2 with the means in
/// row k; every other position is Uniform[0,1]. Default rows are the 3-bit
/// binary encoding of k (corners of the unit cube).
using CubeMeanTable = std::array<std::array<double, 3>, kCubeClasses>;
CubeMeanTable default_cube_means();

struct CubeConfig {
  std::size_t n = 1000;
  double sigma = 0.3;
  std::uint64_t seed = 0;
  CubeMeanTable means = default_cube_means();
};

Dataset generate_cube(const CubeConfig& config);

/// d-1 independent Uniform[0,1] features plus a guide (last column) whose
/// range r in d-1 equal bins selects the label rule y = 1{x_r > 0.5}.
Dataset generate_guide(std::size_t n, std::size_t d, std::uint64_t seed);
int guide_range(double guide, std::size_t d);

struct DecisionEnvConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::array<double, 4> probit_coeffs{0.5, 0.5, 0.5, 0.5};
  double probit_intercept = 0.0;
  double outcome_noise_sd = 1.0;
  bool randomized_treatment = false;
  double correlation = 0.3;
};

struct DecisionGroundTruth {
  double mu0 = 0.0;
  double mu1 = 0.0;
  int optimal_action = 0;
  FeatureSet minimal_set;
};

struct DecisionDataset {
  Matrix features;  // raw units
  std::vector<int> action;
  std::vector<double> outcome;
  std::vector<std::string> feature_names;
  std::optional<std::vector<DecisionGroundTruth>> ground_truth;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

DecisionDataset generate_decision_env(const DecisionEnvConfig& config);

/// The bracketed treatment effect of the synthetic decision environment.
double decision_bracket(std::span<const double> x);
DecisionGroundTruth decision_ground_truth(std::span<const double> x);

}  // namespace afa
