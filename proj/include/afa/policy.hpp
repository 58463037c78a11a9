#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "afa/common.hpp"
#include "afa/data.hpp"
#include "afa/neighbors.hpp"
#include "afa/predict.hpp"

namespace afa {

/// Acquired features of one instance: sorted indices with raw and
/// standardized values aligned to them.
class ObservationState {
 public:
  ObservationState() = default;
  explicit ObservationState(std::size_t d) : d_(d) {}

  std::size_t dim() const { return d_; }
  std::size_t size() const { return o_.size(); }
  bool full() const { return o_.size() == d_; }
  bool has(int j) const { return std::binary_search(o_.begin(), o_.end(), j); }

  const std::vector<int>& observed() const { return o_; }
  const std::vector<double>& raw_values() const { return raw_; }
  const std::vector<double>& std_values() const { return std_; }
  FeatureSet observed_set() const { return FeatureSet(o_); }

  /// Throws if j is out of range or already acquired.
  void add(int j, double raw, double standardized);

  /// Predictor input in standardized units.
  MaskedInput input() const { return MaskedInput(d_, o_, std_); }

 private:
  std::size_t d_ = 0;
  std::vector<int> o_;
  std::vector<double> raw_;
  std::vector<double> std_;
};

struct Action {
  static constexpr int kTerminate = -1;
  int feature = kTerminate;

  static Action acquire(int j) { return Action{j}; }
  static Action terminate() { return Action{}; }
  bool is_terminate() const { return feature == kTerminate; }
  friend bool operator==(const Action&, const Action&) = default;
};

class CostModel {
 public:
  CostModel() = default;
  explicit CostModel(std::size_t d) : per_feature_(d, 1.0) {}
  explicit CostModel(std::vector<double> per_feature);

  std::size_t dim() const { return per_feature_.size(); }
  double feature(int j) const { return per_feature_[static_cast<std::size_t>(j)]; }
  double cost(std::span<const int> subset) const;
  double cost(const FeatureSet& s) const { return cost(std::span<const int>(s.items())); }
  double min_cost() const;
  CostModel scaled(double lambda) const;
  const std::vector<double>& per_feature() const { return per_feature_; }

 private:
  std::vector<double> per_feature_;
};

enum class TieBreak { kBestSingle, kUniform };

struct InitialFeatureRule {
  enum class Kind { kFixed, kGlobalArgmin, kEmptyNeighborFallback };
  Kind kind = Kind::kEmptyNeighborFallback;
  int feature = 0;  // for kFixed
  /// Training rows averaged by global-argmin (0 = all).
  std::size_t max_rows = 0;

  static InitialFeatureRule fixed(int j) { return {Kind::kFixed, j, 0}; }
  static InitialFeatureRule global_argmin(std::size_t max_rows = 0) { return {Kind::kGlobalArgmin, 0, max_rows}; }
  static InitialFeatureRule empty_neighbor_fallback() { return {}; }
};

struct AacoConfig {
  double alpha = 0.0;
  std::size_t k = 5;
  std::size_t candidate_budget = 10000;
  TieBreak tie_break = TieBreak::kBestSingle;
  InitialFeatureRule initial;
  LossKind loss = LossKind::kCrossEntropy;
  std::uint64_t seed = 0;
  /// Exclude neighbor i's own row from the predictor call that completes the
  /// query with i's values (matters only for nonparametric predictors).
  bool leave_neighbor_out = true;
  /// Restrict candidates to ∅ and singletons (greedy search).
  bool singletons_only = false;

  void validate(std::size_t d) const;
};

nlohmann::json to_json(const AacoConfig& c);
AacoConfig aaco_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Candidate subsets

/// ∅, every singleton of the complement of o, then random subsets up to
/// `budget` in total (exhaustive when the power set fits). Canonically sorted.
std::vector<FeatureSet> sample_candidates(std::size_t d, const FeatureSet& o, std::size_t budget, Rng& rng);

/// ∅ plus the singletons of the complement.
std::vector<FeatureSet> singleton_candidates(std::size_t d, const FeatureSet& o);

/// Every subset of the complement of o, canonically sorted.
std::vector<FeatureSet> power_set_candidates(std::size_t d, const FeatureSet& o);

/// Result of an argmin over candidate subsets.
struct Selection {
  FeatureSet chosen;
  double objective = std::numeric_limits<double>::quiet_NaN();  // loss + α·c(o ∪ v)
  double expected_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<FeatureSet> candidates;
  std::vector<double> losses;  // aligned with candidates

  /// Loss of candidate {j}; throws if it was not scored.
  double singleton_loss(int j) const;
};

/// Scores every candidate with `loss_of` and returns the argmin of
/// loss + α·c(v) (equal to the c(o ∪ v) form up to a constant). Ties go to
/// the smaller subset, then the lexicographically smaller one.
Selection select_subset(std::vector<FeatureSet> candidates, const std::function<double(const FeatureSet&)>& loss_of,
                        double alpha, const CostModel& cost, const FeatureSet& o);

/// Feature of `u` with the smallest singleton loss in `sel`; lowest index on ties.
int best_single(const Selection& sel, const FeatureSet& u);

// ---------------------------------------------------------------------------
// Policies

struct Decision {
  Action action;
  FeatureSet chosen;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

struct StepContext {
  std::optional<std::size_t> self_row;  // training row id of the instance, if any
  Rng* rng = nullptr;
};

/// Non-cheating policy: sees only the acquired values.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Decision decide(const ObservationState& state, StepContext& ctx) const = 0;
  virtual std::string name() const = 0;
};

/// Retrospective policy that also sees the full instance and its label.
class CheatingPolicy {
 public:
  virtual ~CheatingPolicy() = default;
  virtual Decision decide(const ObservationState& state, std::span<const double> x_std, double y,
                          StepContext& ctx) const = 0;
  virtual std::string name() const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

/// (1/k') Σ_i ℓ(ŷ(x_o ∪ x⁽ⁱ⁾_v), y⁽ⁱ⁾) over the given neighbor rows.
/// `exclude` is forwarded to the predictor; with `leave_neighbor_out`, row i
/// is also excluded from the call that uses its values.
double expected_loss_knn(const Dataset& train, const Predictor& predictor, const ObservationState& state,
                         std::span<const std::size_t> neighbor_rows, const FeatureSet& v, LossKind loss_kind,
                         const RowExclusion& exclude = {}, bool leave_neighbor_out = true);

/// Convenience form that runs the neighbor query itself.
double expected_loss_knn(const NeighborIndex& index, const Dataset& train, const Predictor& predictor,
                         const ObservationState& state, const FeatureSet& v, std::size_t k, LossKind loss_kind,
                         const RowExclusion& exclude = {}, bool leave_neighbor_out = true);

/// Approximate ACO (k-NN expectation over sampled candidate subsets).
class AacoPolicy : public Policy {
 public:
  AacoPolicy(std::shared_ptr<const Dataset> train, std::shared_ptr<const NeighborIndex> index,
             PredictorPtr predictor, CostModel cost, AacoConfig config);

  Decision decide(const ObservationState& state, StepContext& ctx) const override;
  std::string name() const override { return "aaco"; }

  /// The subset search at a non-empty (or fallback) state.
  Selection select(const ObservationState& state, StepContext& ctx) const;
  /// Applies the configured tie-break to a selection.
  Action step(const Selection& sel, StepContext& ctx) const;
  /// Cached first decision of global-argmin.
  const Decision& global_initial() const;

  const AacoConfig& config() const { return config_; }
  const Dataset& train() const { return *train_; }
  const NeighborIndex& index() const { return *index_; }
  const Predictor& predictor() const { return *predictor_; }
  const CostModel& cost() const { return cost_; }

 private:
  std::shared_ptr<const Dataset> train_;
  std::shared_ptr<const NeighborIndex> index_;
  PredictorPtr predictor_;
  CostModel cost_;
  AacoConfig config_;
  mutable std::once_flag initial_once_;
  mutable Decision initial_;
};

Selection aaco_select(const AacoPolicy& policy, const ObservationState& state, StepContext& ctx);
Action aaco_step(const AacoPolicy& policy, const ObservationState& state, StepContext& ctx);

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::size_t budget) : budget_(budget) {}
  Decision decide(const ObservationState& state, StepContext& ctx) const override;
  std::string name() const override { return "random"; }
  std::size_t budget() const { return budget_; }

 private:
  std::size_t budget_;
};

class FixedOrderPolicy : public Policy {
 public:
  explicit FixedOrderPolicy(std::vector<int> order) : order_(std::move(order)) {}
  Decision decide(const ObservationState& state, StepContext& ctx) const override;
  std::string name() const override { return "fixed_order"; }
  const std::vector<int>& order() const { return order_; }

 private:
  std::vector<int> order_;
};

// ---------------------------------------------------------------------------
// Cheating oracles

/// argmin over j ∉ o of ℓ(ŷ(x_{o∪{j}}), y); lowest index on ties.
int greedy_cheating_oracle(std::span<const double> x_std, double y, const FeatureSet& o, const Predictor& predictor,
                           LossKind loss_kind);

/// argmin over candidates of ℓ(ŷ(x_{o∪v}), y) + α·c(o∪v).
Selection nongreedy_cheating_oracle(std::span<const double> x_std, double y, const FeatureSet& o,
                                    const Predictor& predictor, LossKind loss_kind, double alpha,
                                    const CostModel& cost, std::vector<FeatureSet> candidates);

/// Greedy teacher with a stopping rule: picks the best of {∅} ∪ singletons
/// under ℓ + α·c and terminates on ∅.
class GreedyCheatingPolicy : public CheatingPolicy {
 public:
  GreedyCheatingPolicy(PredictorPtr predictor, CostModel cost, double alpha, LossKind loss,
                       std::optional<int> initial_feature = std::nullopt);
  Decision decide(const ObservationState& state, std::span<const double> x_std, double y,
                  StepContext& ctx) const override;
  std::string name() const override { return "greedy_cheating"; }

 private:
  PredictorPtr predictor_;
  CostModel cost_;
  double alpha_;
  LossKind loss_;
  std::optional<int> initial_;
};

class NonGreedyCheatingPolicy : public CheatingPolicy {
 public:
  NonGreedyCheatingPolicy(PredictorPtr predictor, CostModel cost, double alpha, LossKind loss,
                          std::size_t candidate_budget, std::optional<int> initial_feature = std::nullopt);
  Decision decide(const ObservationState& state, std::span<const double> x_std, double y,
                  StepContext& ctx) const override;
  std::string name() const override { return "nongreedy_cheating"; }

 private:
  PredictorPtr predictor_;
  CostModel cost_;
  double alpha_;
  LossKind loss_;
  std::size_t budget_;
  std::optional<int> initial_;
};

// ---------------------------------------------------------------------------
// Exact ACO with a generative model

/// Draws (x̃, ỹ) from p(x, y | x_o); x̃ is a full standardized vector that
/// agrees with the state on o.
class ConditionalSampler {
 public:
  virtual ~ConditionalSampler() = default;
  virtual void sample(const ObservationState& state, Rng& rng, std::vector<double>& x_std, double& y) const = 0;
};

/// CUBE: category from the exact posterior, then the unobserved features.
class CubeSampler : public ConditionalSampler {
 public:
  explicit CubeSampler(std::shared_ptr<const CubeGroundTruth> truth) : truth_(std::move(truth)) {}
  void sample(const ObservationState& state, Rng& rng, std::vector<double>& x_std, double& y) const override;

 private:
  std::shared_ptr<const CubeGroundTruth> truth_;
};

/// Scenarios are drawn once and shared by every candidate.
Selection exact_aco_select(const ConditionalSampler& sampler, const ObservationState& state,
                           const Predictor& predictor, const CostModel& cost, double alpha, std::size_t m,
                           std::vector<FeatureSet> candidates, Rng& rng, LossKind loss_kind);

class ExactAcoPolicy : public Policy {
 public:
  ExactAcoPolicy(std::shared_ptr<const ConditionalSampler> sampler, PredictorPtr predictor, CostModel cost,
                 AacoConfig config, std::size_t m);
  Decision decide(const ObservationState& state, StepContext& ctx) const override;
  std::string name() const override { return "exact_aco"; }

 private:
  std::shared_ptr<const ConditionalSampler> sampler_;
  PredictorPtr predictor_;
  CostModel cost_;
  AacoConfig config_;
  std::size_t m_;
};

// ---------------------------------------------------------------------------
// Roll-out

/// One instance served to a policy. Values are revealed on request.
struct Episode {
  std::size_t instance = 0;
  std::span<const double> x_raw;
  std::span<const double> x_std;
  std::optional<double> label;
  std::optional<std::size_t> train_row;
};

/// Episode for row i of a standardized dataset.
Episode make_episode(const Dataset& data, std::size_t i, std::vector<double>& raw_buffer,
                     std::optional<std::size_t> train_row = std::nullopt);

struct TraceStep {
  std::vector<int> observed;
  std::vector<double> values;  // raw, aligned with observed
  FeatureSet chosen;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Action action;
};

struct RollOutTrace {
  std::size_t instance = 0;
  std::optional<double> label;
  std::vector<TraceStep> steps;
  Prediction prediction;
  double cost = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double ret = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> acquired;  // in acquisition order

  std::size_t acquisitions() const { return acquired.size(); }
};

struct RolloutOptions {
  double alpha = 0.0;
  LossKind loss = LossKind::kCrossEntropy;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0 = d
};

/// Seeds the per-instance stream from (options.seed, episode.instance).
RollOutTrace rollout(const Policy& policy, const Episode& episode, const Predictor& predictor,
                     const CostModel& cost, const RolloutOptions& options);
RollOutTrace rollout(const CheatingPolicy& policy, const Episode& episode, const Predictor& predictor,
                     const CostModel& cost, const RolloutOptions& options);

using NextFn = std::function<Decision(const ObservationState&, StepContext&)>;

/// Returns (raw, standardized) for a requested feature, or nullopt to stop
/// and predict with what has been acquired.
using RevealFn =
    std::function<std::optional<std::pair<double, double>>(int j, const Decision& decision, const ObservationState&)>;

/// Shared driver behind every roll-out, batch or interactive. A null
/// predictor skips the final prediction (decision roll-outs).
RollOutTrace rollout_core(const NextFn& next, const RevealFn& reveal, std::size_t d, std::size_t instance,
                          std::optional<std::size_t> train_row, std::optional<double> label,
                          const Predictor* predictor, const CostModel& cost, const RolloutOptions& options);

RollOutTrace rollout_with(const NextFn& next, const Episode& episode, const Predictor& predictor,
                          const CostModel& cost, const RolloutOptions& options);

nlohmann::json trace_to_json(const RollOutTrace& trace);
RollOutTrace trace_from_json(const nlohmann::json& j);
void write_traces_jsonl(std::span<const RollOutTrace> traces, const std::filesystem::path& path);
std::vector<RollOutTrace> read_traces_jsonl(const std::filesystem::path& path);

}  // namespace afa
