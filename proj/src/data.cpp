#include "afa/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace afa {

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw Error("Matrix::append_row: width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void Dataset::validate() const {
  if (size() == 0) throw Error("dataset has no rows");
  if (dim() == 0) throw Error("dataset has no features");
  if (labels.size() != size()) throw Error("dataset label count does not match row count");
  if (!feature_names.empty() && feature_names.size() != dim())
    throw Error("dataset feature name count does not match feature count");
  for (double v : features.storage())
    if (!std::isfinite(v)) throw Error("dataset contains a non-finite feature value");
  if (task == TaskKind::kClassification) {
    if (num_classes < 1) throw Error("classification dataset needs num_classes >= 1");
    for (std::size_t i = 0; i < size(); ++i) {
      double y = labels[i];
      if (y != std::floor(y) || y < 0 || y >= num_classes)
        throw Error("label " + std::to_string(y) + " on row " + std::to_string(i) +
                    " outside [0, " + std::to_string(num_classes) + ")");
    }
  } else {
    for (double y : labels)
      if (!std::isfinite(y)) throw Error("dataset contains a non-finite label");
  }
}

Dataset Dataset::subset_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = Matrix(rows.size(), dim());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = features.row(rows[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(labels[rows[r]]);
  }
  out.feature_names = feature_names;
  out.standardization = standardization;
  out.task = task;
  out.num_classes = num_classes;
  return out;
}

Dataset Dataset::subset_columns(const FeatureSet& columns) const {
  Dataset out;
  out.features = Matrix(size(), columns.size());
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t c = 0; c < columns.size(); ++c) out.features(i, c) = features(i, columns[c]);
  out.labels = labels;
  for (int j : columns)
    if (!feature_names.empty()) out.feature_names.push_back(feature_names[j]);
  if (standardization) {
    StandardizationParams p;
    for (int j : columns) {
      p.means.push_back(standardization->means[j]);
      p.scales.push_back(standardization->scales[j]);
    }
    out.standardization = std::move(p);
  }
  out.task = task;
  out.num_classes = num_classes;
  return out;
}

std::vector<std::string> default_feature_names(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos
                                                                    ? std::string::npos
                                                                    : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

}  // namespace

std::size_t NumericTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("unknown column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file " + path.string());
  NumericTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error("CSV file " + path.string() + " has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_line(line);
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row_number;
    auto cells = split_line(line);
    if (cells.size() != table.header.size())
      throw Error("row " + std::to_string(row_number) + " has " + std::to_string(cells.size()) +
                  " cells, expected " + std::to_string(table.header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      if (cell.empty())
        throw Error("missing value row " + std::to_string(row_number) + " column '" +
                    table.header[c] + "'");
      const char* first = cell.data();
      if (*first == '+') ++first;
      auto res = std::from_chars(first, cell.data() + cell.size(), values[c]);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(values[c]))
        throw Error("non-numeric value '" + cell + "' row " + std::to_string(row_number) +
                    " column '" + table.header[c] + "'");
    }
    table.rows.push_back(std::move(values));
  }
  return table;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column, TaskKind task) {
  NumericTable table = read_numeric_csv(path);
  auto it = std::find(table.header.begin(), table.header.end(), label_column);
  if (it == table.header.end()) throw Error("label column '" + label_column + "' not found");
  std::size_t label_col = static_cast<std::size_t>(it - table.header.begin());
  if (table.header.size() < 2) throw Error("CSV needs at least one feature column");
  if (table.rows.empty()) throw Error("CSV file " + path.string() + " has no data rows");

  Dataset data;
  data.task = task;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != label_col) data.feature_names.push_back(table.header[c]);
  data.features = Matrix(table.rows.size(), data.feature_names.size());
  int max_label = -1;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == label_col) continue;
      data.features(r, out_c++) = table.rows[r][c];
    }
    double y = table.rows[r][label_col];
    if (task == TaskKind::kClassification) {
      if (y != std::floor(y) || y < 0)
        throw Error("label '" + format_double(y) + "' row " + std::to_string(r + 1) +
                    " is not a non-negative integer");
      max_label = std::max(max_label, static_cast<int>(y));
    }
    data.labels.push_back(y);
  }
  data.num_classes = task == TaskKind::kClassification ? max_label + 1 : 0;
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write CSV file " + path.string());
  auto names = data.feature_names.empty() ? default_feature_names(data.dim()) : data.feature_names;
  for (const auto& name : names) out << name << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) out << format_double(data.features(i, j)) << ',';
    out << format_double(data.labels[i]) << '\n';
  }
  if (!out) throw Error("failed writing CSV file " + path.string());
}

std::pair<Dataset, StandardizationParams> standardize(const Dataset& data) {
  const std::size_t n = data.size(), d = data.dim();
  StandardizationParams params;
  params.means.assign(d, 0.0);
  params.scales.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data.features(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double dv = data.features(i, j) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(n);
    params.means[j] = mean;
    params.scales[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return {apply_standardization(data, params), params};
}

Dataset apply_standardization(const Dataset& raw, const StandardizationParams& params) {
  if (raw.standardization) throw Error("dataset is already standardized");
  if (params.means.size() != raw.dim() || params.scales.size() != raw.dim())
    throw Error("standardization params do not match feature count");
  Dataset out = raw;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out.dim(); ++j) out.features(i, j) = params.apply(j, raw.features(i, j));
  out.standardization = params;
  return out;
}

Dataset unstandardize(const Dataset& standardized) {
  if (!standardized.standardization) return standardized;
  Dataset out = standardized;
  const auto& p = *standardized.standardization;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out.dim(); ++j) out.features(i, j) = p.invert(j, standardized.features(i, j));
  out.standardization.reset();
  return out;
}

DatasetSplit split(const Dataset& data, SplitFractions f, std::uint64_t seed) {
  if (f.train <= 0 || f.val <= 0 || f.test <= 0) throw ConfigError("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const std::size_t n = data.size();
  auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
  if (n_train + n_val > n) n_val = n - std::min(n, n_train);
  std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw Error("split of " + std::to_string(n) + " rows leaves an empty partition");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x5111);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit out;
  out.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  out.train = data.subset_rows(out.train_rows);
  out.val = data.subset_rows(out.val_rows);
  out.test = data.subset_rows(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------

CubeMeanTable default_cube_means() {
  CubeMeanTable table{};
  for (int k = 0; k < kCubeClasses; ++k) {
    table[k][0] = (k >> 2) & 1;
    table[k][1] = (k >> 1) & 1;
    table[k][2] = k & 1;
  }
  return table;
}

Dataset generate_cube(const CubeConfig& config) {
  if (config.sigma < 0) throw ConfigError("cube sigma must be non-negative");
  Rng rng = make_rng(config.seed, 0xC0BE);
  std::uniform_int_distribution<int> category(0, kCubeClasses - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset data;
  data.task = TaskKind::kClassification;
  data.num_classes = kCubeClasses;
  data.feature_names = default_feature_names(kCubeDim);
  data.features = Matrix(config.n, kCubeDim);
  data.labels.resize(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    int k = category(rng);
    data.labels[i] = k;
    for (int j = 0; j < kCubeDim; ++j) {
      if (j >= k && j <= k + 2) {
        data.features(i, j) = config.means[k][j - k] + config.sigma * normal(rng);
      } else {
        data.features(i, j) = unit(rng);
      }
    }
  }
  return data;
}

int guide_range(double guide, std::size_t d) {
  const auto bins = static_cast<int>(d - 1);
  int r = static_cast<int>(std::floor(guide * bins));
  return std::clamp(r, 0, bins - 1);
}

Dataset generate_guide(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (d < 3) throw ConfigError("guide dataset needs d >= 3");
  Rng rng = make_rng(seed, 0x6D1DE);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset data;
  data.task = TaskKind::kClassification;
  data.num_classes = 2;
  data.feature_names = default_feature_names(d);
  data.feature_names.back() = "guide";
  data.features = Matrix(n, d);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) data.features(i, j) = unit(rng);
    int r = guide_range(data.features(i, d - 1), d);
    data.labels[i] = data.features(i, static_cast<std::size_t>(r)) > 0.5 ? 1.0 : 0.0;
  }
  return data;
}

double decision_bracket(std::span<const double> x) {
  const double x0 = x[0], x1 = x[1], x2 = x[2], x3 = x[3];
  if (x0 > 0.0 && x0 <= 0.25) return 1.0;
  if (x0 > 0.25 && x0 <= 0.5) return x1;
  if (x0 > 0.5 && x0 < 0.75) return x1 * x2;
  if (x0 > 0.75 && x0 < 1.0) return x1 * (x3 * x3 - 1.0);
  return 0.0;
}

DecisionGroundTruth decision_ground_truth(std::span<const double> x) {
  DecisionGroundTruth gt;
  gt.mu0 = 0.0;
  gt.mu1 = decision_bracket(x);
  gt.optimal_action = gt.mu1 > 0.0 ? 1 : 0;
  const double x0 = x[0];
  if (x0 > 0.25 && x0 <= 0.5) gt.minimal_set = {0, 1};
  else if (x0 > 0.5 && x0 < 0.75) gt.minimal_set = {0, 1, 2};
  else if (x0 > 0.75 && x0 < 1.0) gt.minimal_set = {0, 1, 3};
  else gt.minimal_set = {0};
  return gt;
}

DecisionDataset generate_decision_env(const DecisionEnvConfig& config) {
  if (config.outcome_noise_sd <= 0) throw ConfigError("outcome_noise_sd must be positive");
  if (std::abs(config.correlation) >= 1) throw ConfigError("correlation must lie in (-1, 1)");
  Rng rng = make_rng(config.seed, 0xDEC1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const double rho = config.correlation;
  const double rho_c = std::sqrt(1.0 - rho * rho);

  DecisionDataset data;
  data.feature_names = {"x0", "x1", "x2", "x3"};
  data.features = Matrix(config.n, 4);
  data.action.resize(config.n);
  data.outcome.resize(config.n);
  data.ground_truth.emplace();
  data.ground_truth->reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    auto x = data.features.row(i);
    x[0] = unit(rng);
    x[1] = coin(rng) ? 1.0 : -1.0;
    x[2] = normal(rng);
    x[3] = rho * x[2] + rho_c * normal(rng);
    double propensity = 0.5;
    if (!config.randomized_treatment) {
      double eta = config.probit_intercept;
      for (int j = 0; j < 4; ++j) eta += config.probit_coeffs[j] * x[j];
      propensity = 0.5 * std::erfc(-eta / std::sqrt(2.0));
    }
    int a = unit(rng) < propensity ? 1 : 0;
    auto gt = decision_ground_truth(x);
    data.action[i] = a;
    data.outcome[i] = (a ? gt.mu1 : gt.mu0) + config.outcome_noise_sd * normal(rng);
    data.ground_truth->push_back(std::move(gt));
  }
  return data;
}

}  // namespace afa
