#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "afa/data.hpp"
#include "afa/neighbors.hpp"
#include "afa/policy.hpp"
#include "afa/predict.hpp"

namespace afa {

inline constexpr int kNumActions = 2;

/// Logged decision data with standardized features alongside the raw ones.
struct DecisionProblem {
  Matrix raw;
  Matrix x_std;
  std::vector<int> action;
  std::vector<double> outcome;
  std::vector<std::string> feature_names;
  std::optional<std::vector<DecisionGroundTruth>> truth;
  StandardizationParams standardization;

  std::size_t size() const { return raw.rows(); }
  std::size_t dim() const { return raw.cols(); }
  /// Row i with the features in `o` acquired.
  ObservationState state(std::size_t i, const FeatureSet& o) const;
  ObservationState full_state(std::size_t i) const;
  Episode episode(std::size_t i, std::optional<std::size_t> train_row = std::nullopt) const;
};

/// Standardizes with `params`, or with params fitted on `data` when absent.
DecisionProblem make_decision_problem(const DecisionDataset& data,
                                      std::optional<StandardizationParams> params = std::nullopt);

DecisionDataset subset_rows(const DecisionDataset& data, std::span<const std::size_t> rows);

struct DecisionSplit {
  DecisionDataset train, test;
};
DecisionSplit split_decision(const DecisionDataset& data, double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Q models

/// Q(x_o, a) = E[Y | a, x_o] for any observed subset.
class QFunction {
 public:
  virtual ~QFunction() = default;
  virtual std::size_t dim() const = 0;
  /// `exclude` lists rows of the fitting data to leave out (nonparametric fits).
  virtual double q(const ObservationState& state, int action, const RowExclusion& exclude = {}) const = 0;
  virtual std::string kind() const = 0;
};

using QPtr = std::shared_ptr<const QFunction>;

struct QModelConfig {
  std::string kind = "knn";  // knn | masked_linear
  std::size_t k = 50;
  MaskedLinearConfig linear;

  nlohmann::json to_json() const;
  static QModelConfig from_json(const nlohmann::json& j);
};

/// One arbitrary-subset regressor per arm, fitted on that arm's rows.
class FittedQ : public QFunction {
 public:
  FittedQ(std::array<PredictorPtr, kNumActions> arms, std::array<std::vector<long>, kNumActions> row_maps);
  std::size_t dim() const override { return arms_[0]->num_features(); }
  double q(const ObservationState& state, int action, const RowExclusion& exclude = {}) const override;
  std::string kind() const override { return "fitted"; }

 private:
  std::array<PredictorPtr, kNumActions> arms_;
  std::array<std::vector<long>, kNumActions> row_maps_;  // problem row -> arm row (or -1)
};

std::shared_ptr<FittedQ> fit_q(const DecisionProblem& data, const QModelConfig& config);

/// Closed-form conditional mean of the synthetic environment (raw inputs).
class ExactDecisionQ : public QFunction {
 public:
  explicit ExactDecisionQ(double correlation = 0.3) : rho_(correlation) {}
  std::size_t dim() const override { return 4; }
  double q(const ObservationState& state, int action, const RowExclusion& exclude = {}) const override;
  std::string kind() const override { return "exact"; }

 private:
  double rho_;
};

/// Q(x_i, a) at full context for every row; `leave_one_out` excludes row i.
std::vector<std::array<double, kNumActions>> full_q_table(const QFunction& q, const DecisionProblem& data,
                                                          bool leave_one_out);

// ---------------------------------------------------------------------------
// Decision policies

class DecisionPolicy {
 public:
  virtual ~DecisionPolicy() = default;
  /// Action for the acquired context; `exclude` names rows to leave out.
  virtual int act(const ObservationState& state, const RowExclusion& exclude = {}) const = 0;
  virtual std::string name() const = 0;
};

using DecisionPolicyPtr = std::shared_ptr<const DecisionPolicy>;

/// argmax_a Q(x_o, a) on whatever is observed; ties go to action 0.
class PlugInPolicy : public DecisionPolicy {
 public:
  explicit PlugInPolicy(QPtr q) : q_(std::move(q)) {}
  int act(const ObservationState& state, const RowExclusion& exclude = {}) const override;
  std::string name() const override { return "plugin"; }

 private:
  QPtr q_;
};

class ConstantPolicy : public DecisionPolicy {
 public:
  explicit ConstantPolicy(int action) : action_(action) {}
  int act(const ObservationState&, const RowExclusion& = {}) const override { return action_; }
  std::string name() const override { return "constant"; }

 private:
  int action_;
};

/// Per-row cost of each action: max_a' Q̂(x_i, a') − Q̂(x_i, a).
std::vector<std::array<double, kNumActions>> regret_costs(const std::vector<std::array<double, kNumActions>>& q_full);

/// Cost-sensitive k-NN classifier: averages the regret costs of the k
/// nearest rows in the observed subspace and takes the cheapest action.
class WeightedKnnPolicy : public DecisionPolicy {
 public:
  WeightedKnnPolicy(std::shared_ptr<const NeighborIndex> index, std::vector<std::array<double, kNumActions>> costs,
                    std::size_t k);
  int act(const ObservationState& state, const RowExclusion& exclude = {}) const override;
  std::string name() const override { return "weighted_knn"; }

 private:
  std::shared_ptr<const NeighborIndex> index_;
  std::vector<std::array<double, kNumActions>> costs_;
  std::size_t k_;
  std::array<double, kNumActions> mean_cost_{};
};

/// Weighted linear classifier trained per observed subset (cached): label
/// argmin cost, weight |cost(0) − cost(1)|.
class WeightedLinearPolicyTable : public DecisionPolicy {
 public:
  WeightedLinearPolicyTable(std::shared_ptr<const DecisionProblem> data,
                            std::vector<std::array<double, kNumActions>> costs, MaskedLinearConfig config);
  int act(const ObservationState& state, const RowExclusion& exclude = {}) const override;
  std::string name() const override { return "weighted_linear"; }
  std::size_t training_runs() const { return runs_.load(); }

 private:
  struct Entry {
    std::once_flag once;
    std::optional<MaskedLinearModel> model;
    int constant = 0;
  };
  const Entry& entry_for(const FeatureSet& o) const;

  std::shared_ptr<const DecisionProblem> data_;
  std::vector<std::array<double, kNumActions>> costs_;
  MaskedLinearConfig config_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<FeatureSet, std::shared_ptr<Entry>, FeatureSetHash> cache_;
  mutable std::atomic<std::size_t> runs_{0};
};

DecisionPolicyPtr full_policy(QPtr q);

struct PartialPolicyConfig {
  std::string kind = "weighted_knn";  // weighted_knn | weighted_linear | plugin
  std::size_t k = 100;
  MaskedLinearConfig linear;

  nlohmann::json to_json() const;
  static PartialPolicyConfig from_json(const nlohmann::json& j);
};

/// Partial-information policy family fitted on `data` using Q̂ at full context.
DecisionPolicyPtr fit_partial_policy(std::shared_ptr<const DecisionProblem> data, QPtr q,
                                     const PartialPolicyConfig& config,
                                     std::shared_ptr<const NeighborIndex> index = nullptr);

// ---------------------------------------------------------------------------
// Acquisition driven by decision quality

enum class DecisionObjective { kRegret, kNegativeQ };

/// (1/k') Σ_i [max_a Q̂(x⁽ⁱ⁾, a) − Q̂(x⁽ⁱ⁾, π(x_o ∪ x⁽ⁱ⁾_v))] + α·c(o ∪ v), with
/// Q̂(x⁽ⁱ⁾, ·) read from `q_full` (rows of `data`).
double decision_objective_knn(const DecisionProblem& data, const NeighborIndex& index,
                              const std::vector<std::array<double, kNumActions>>& q_full,
                              const DecisionPolicy& policy, const ObservationState& state, const FeatureSet& v,
                              std::size_t k, const RowExclusion& exclude, double alpha, const CostModel& cost,
                              DecisionObjective objective = DecisionObjective::kRegret);

class DecisionAacoPolicy : public Policy {
 public:
  DecisionAacoPolicy(std::shared_ptr<const DecisionProblem> data, std::shared_ptr<const NeighborIndex> index,
                     std::vector<std::array<double, kNumActions>> q_full, DecisionPolicyPtr policy, CostModel cost,
                     AacoConfig config, DecisionObjective objective = DecisionObjective::kRegret);
  Decision decide(const ObservationState& state, StepContext& ctx) const override;
  std::string name() const override { return "decision_aaco"; }
  Selection select(const ObservationState& state, StepContext& ctx) const;

 private:
  std::shared_ptr<const DecisionProblem> data_;
  std::shared_ptr<const NeighborIndex> index_;
  std::vector<std::array<double, kNumActions>> q_full_;
  DecisionPolicyPtr policy_;
  CostModel cost_;
  AacoConfig config_;
  DecisionObjective objective_;
};

struct DecisionOutcome {
  RollOutTrace trace;  // acquisitions only; no prediction
  int action = 0;
};

/// Acquires with `acquisition` on row i of `data`, then decides with `policy`.
DecisionOutcome decision_rollout(const Policy& acquisition, const DecisionPolicy& policy, const DecisionProblem& data,
                                 std::size_t i, const CostModel& cost, const RolloutOptions& options,
                                 std::optional<std::size_t> train_row = std::nullopt);

std::vector<DecisionOutcome> decision_rollouts(const Policy& acquisition, const DecisionPolicy& policy,
                                               const DecisionProblem& data, const CostModel& cost,
                                               const RolloutOptions& options, std::size_t threads = 0);

/// Actions of `policy` on each row observing the fixed subset `o`.
std::vector<int> fixed_subset_actions(const DecisionPolicy& policy, const DecisionProblem& data, const FeatureSet& o,
                                      bool leave_one_out = false);

/// n⁻¹ Σ_i Q(x⁽ⁱ⁾, a_i) with Q read from a full-context table.
double estimate_value(std::span<const int> actions, const std::vector<std::array<double, kNumActions>>& q_full);
double estimate_value(const DecisionPolicy& policy, const DecisionProblem& data, const QFunction& q,
                      const FeatureSet& o);

double agreement(std::span<const int> a, std::span<const int> b);
double optimal_rate(std::span<const int> actions, const std::vector<DecisionGroundTruth>& truth);

/// Greedy forward selection of `budget` features maximizing the estimated
/// value of `policy` on `data` (values from `q_full`). Lowest index on ties.
FeatureSet feature_selection_baseline(const DecisionPolicy& policy, const DecisionProblem& data,
                                      const std::vector<std::array<double, kNumActions>>& q_full, std::size_t budget,
                                      bool leave_one_out = false);

struct BanditSchema {
  std::vector<std::string> context_columns;
  std::string action_column = "action";
  std::string reward_column = "reward";
};

DecisionDataset load_bandit_csv(const std::filesystem::path& path, const BanditSchema& schema);
/// Context columns, then `action` and `reward`.
void write_bandit_csv(const DecisionDataset& data, const std::filesystem::path& path);

/// Conditional sampler for the synthetic environment: draws the unobserved
/// features given the observed ones; y is the treated outcome.
class DecisionEnvSampler : public ConditionalSampler {
 public:
  DecisionEnvSampler(DecisionEnvConfig config, StandardizationParams standardization)
      : config_(config), standardization_(std::move(standardization)) {}
  void sample(const ObservationState& state, Rng& rng, std::vector<double>& x_std, double& y) const override;
  /// Raw-unit draw of the full feature vector.
  void sample_raw(const ObservationState& state, Rng& rng, std::array<double, 4>& x) const;

 private:
  DecisionEnvConfig config_;
  StandardizationParams standardization_;
};

}  // namespace afa
