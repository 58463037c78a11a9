#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "afa/data.hpp"
#include "afa/policy.hpp"
#include "afa/predict.hpp"

namespace afa {

struct DatasetSpec {
  std::string kind = "cube";  // cube | guide | csv
  std::size_t n = 10000;
  double sigma = 0.3;
  std::size_t d = 11;  // guide only
  std::filesystem::path path;
  std::string label_column = "label";
  TaskKind task = TaskKind::kClassification;
  std::uint64_t seed = 0;
  SplitFractions split;
  /// Caps the number of evaluated test rows (0 = all).
  std::size_t max_test = 0;
};

struct PredictorSpec {
  std::string kind = "masked_linear";  // masked_linear | knn | table | cube_ground_truth | file
  MaskedLinearConfig linear;
  std::size_t k = 10;
  TrainerSpec table;
  std::filesystem::path path;
  /// Rows of the training split used as the k-NN reference set (0 = all).
  std::size_t max_train = 0;
};

struct PolicySpec {
  std::string name;  // report label; defaults to kind
  std::string kind = "aaco";  // aaco | random | fixed_order | greedy_cheating | nongreedy_cheating | student
  AacoConfig aaco;
  /// Budget-driven policies (random, fixed_order prefixes) sweep these instead of α.
  std::vector<std::size_t> budgets;
  std::vector<int> order;
  std::filesystem::path student_path;
  std::optional<int> initial_feature;  // cheating teachers
};

struct ExperimentConfig {
  DatasetSpec dataset;
  PredictorSpec predictor;
  std::vector<PolicySpec> policies;
  std::vector<double> alphas;
  LossKind loss = LossKind::kCrossEntropy;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = AFA_THREADS or hardware
  std::filesystem::path output_dir;
  bool keep_traces = false;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Aggregates for one (policy, α or budget) point.
struct ReportRow {
  std::string policy;
  double alpha = 0.0;
  std::optional<std::size_t> budget;
  std::size_t instances = 0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();  // classification
  double mse = std::numeric_limits<double>::quiet_NaN();       // regression
  double mean_loss = 0.0;
  double mean_acquisitions = 0.0;
  double mean_cost = 0.0;
  double mean_return = 0.0;
  /// histogram[c][j]: fraction of class-c episodes that acquired feature j.
  std::vector<std::vector<double>> histogram;
  std::vector<double> feature_frequency;  // over all episodes
  double seconds = 0.0;                   // wall-clock, kept out of the deterministic files
  std::vector<RollOutTrace> traces;       // only with keep_traces
};

struct Report {
  std::vector<std::string> feature_names;
  TaskKind task = TaskKind::kClassification;
  std::vector<ReportRow> rows;

  const ReportRow& row(const std::string& policy, double alpha) const;
};

/// Aggregates traces into one report row (metrics, histograms).
ReportRow aggregate(const std::string& policy, double alpha, std::span<const RollOutTrace> traces, std::size_t d,
                    TaskKind task, int num_classes);

/// histogram[c][j] = fraction of class-c traces that acquired j (classes
/// with no episodes get a zero row).
std::vector<std::vector<double>> acquisition_histogram(std::span<const RollOutTrace> traces, std::size_t d,
                                                       int num_classes);

Report run_experiment(const ExperimentConfig& config);

/// Writes report.csv (policy, alpha, metric, value), report.json,
/// plot_<policy>.dat and (optionally) timing.json under `dir`.
void write_report(const Report& report, const std::filesystem::path& dir, bool timing = true);
nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);

/// One (mean acquisitions, accuracy) point of a policy's sweep.
struct CurvePoint {
  double acquisitions = 0.0;
  double accuracy = 0.0;
};

/// Best accuracy a swept policy reaches with `budget` mean acquisitions:
/// points sorted by acquisitions, replaced by their running maximum, then
/// linearly interpolated. Outside the swept range the nearest end is used.
double matched_accuracy(std::vector<CurvePoint> curve, double budget);
std::vector<CurvePoint> curve_of(const Report& report, const std::string& policy);

// ---------------------------------------------------------------------------
// Interactive acquisition

struct InteractiveOptions {
  std::vector<std::string> feature_names;
  std::optional<StandardizationParams> standardization;
  RolloutOptions rollout;
  std::optional<std::filesystem::path> transcript;  // JSONL, appended
};

/// Terminal loop: the policy proposes the next feature and shows its
/// objective and the current prediction; the user types the value or
/// `predict`. Unparseable input and mismatched feature names re-prompt.
RollOutTrace interactive_session(const Predictor& predictor, const Policy& policy, const CostModel& cost,
                                 const InteractiveOptions& options, std::istream& in, std::ostream& out);

struct Transcript {
  std::vector<std::string> inputs;  // every line the user typed, in order
  RollOutTrace trace;
};

/// Last session recorded in a transcript file.
Transcript read_transcript(const std::filesystem::path& path);

/// Re-runs the recorded inputs through a fresh session (no output, no log).
RollOutTrace replay_transcript(const Transcript& transcript, const Predictor& predictor, const Policy& policy,
                               const CostModel& cost, InteractiveOptions options);

}  // namespace afa
