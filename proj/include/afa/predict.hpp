#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "afa/common.hpp"
#include "afa/data.hpp"
#include "afa/neighbors.hpp"

namespace afa {

/// Probability floor applied to every classification output.
inline constexpr double kProbFloor = 1e-6;

struct Prediction {
  TaskKind task = TaskKind::kClassification;
  std::vector<double> probs;  // classification
  double value = 0.0;         // regression point estimate

  static Prediction classification(std::vector<double> probs);
  static Prediction regression(double value);

  /// Lowest index among the maximal probabilities.
  int argmax() const;
};

/// Mixes `probs` with the floor so every entry is in [eps, 1-eps] and the sum
/// stays 1. Input must be non-negative with a positive sum.
std::vector<double> finalize_distribution(std::vector<double> probs);

enum class LossKind { kCrossEntropy, kZeroOne, kSquaredError };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Non-negative loss of `pred` against label `y`. Throws on task/kind mismatch.
double loss(const Prediction& pred, double y, LossKind kind);

/// Largest value `loss` can return for the given kind on classification output.
double max_classification_loss(LossKind kind);

/// Feature vector with unobserved entries imputed to 0 (the standardized mean)
/// plus the observation mask. `observed()` is kept sorted.
class MaskedInput {
 public:
  MaskedInput() = default;
  explicit MaskedInput(std::size_t d) : values_(d, 0.0), mask_(d, 0) {}
  MaskedInput(std::size_t d, std::span<const int> observed, std::span<const double> values);

  /// All features observed.
  static MaskedInput full(std::span<const double> values);

  std::size_t dim() const { return values_.size(); }
  void set(int j, double v);
  void clear(int j);
  bool is_observed(int j) const { return mask_[static_cast<std::size_t>(j)] != 0; }

  std::span<const double> values() const { return values_; }
  std::span<const std::uint8_t> mask() const { return mask_; }
  const std::vector<int>& observed() const { return observed_; }
  /// Values of the observed features, aligned with observed().
  std::vector<double> observed_values() const;

 private:
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;
  std::vector<int> observed_;
};

/// Arbitrary-subset estimator ŷ(x_o, o). Inputs are in standardized units.
///
/// Implementations are immutable after construction and safe to call
/// concurrently. `exclude` names training rows a nonparametric predictor must
/// not use (leave-one-out inside policy search); parametric models ignore it.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::size_t num_features() const = 0;
  virtual TaskKind task() const = 0;
  virtual int num_classes() const = 0;
  virtual Prediction predict(const MaskedInput& input, const RowExclusion& exclude = {}) const = 0;

  virtual std::string kind() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

/// Checked entry point: x_o aligned with o (any order), o may be empty.
Prediction predict(const Predictor& predictor, std::span<const double> x_o, std::span<const int> o);

/// Training-label marginal (classification, floored) or mean (regression).
Prediction label_marginal(const Dataset& train);

// ---------------------------------------------------------------------------
// Masked multinomial linear model

enum class MaskDistribution {
  kUniformDensity,  // p ~ U(0,1), each feature observed with probability p
  kFull,            // every feature observed
};

struct MaskedLinearConfig {
  int epochs = 30;
  double step_size = 0.1;
  /// Mini-batch size; 0 runs full-batch gradient descent with backtracking,
  /// which makes the training loss non-increasing.
  std::size_t batch_size = 32;
  double l2 = 1e-5;
  MaskDistribution masks = MaskDistribution::kUniformDensity;
  std::uint64_t seed = 0;
};

nlohmann::json linear_config_to_json(const MaskedLinearConfig& c);
MaskedLinearConfig linear_config_from_json(const nlohmann::json& j);

/// Softmax (classification) or linear (regression) model on the encoding
/// z = [x ⊙ m, m], with a bias per output.
class MaskedLinearModel {
 public:
  MaskedLinearModel() = default;
  MaskedLinearModel(std::size_t d, int outputs, TaskKind task);

  std::size_t dim() const { return dim_; }
  int outputs() const { return outputs_; }
  TaskKind task() const { return task_; }

  /// Raw scores: logits for classification, the point estimate for regression.
  void scores(const MaskedInput& input, std::vector<double>& out) const;
  Prediction predict(const MaskedInput& input) const;

  /// Mean loss (+ L2 on weights) over the batch. `weights` optionally scales
  /// each example. When `grad` is non-null it receives the gradient.
  double batch_loss(std::span<const MaskedInput> inputs, std::span<const double> labels, double l2,
                    std::vector<double>* grad, std::span<const double> weights = {}) const;

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  std::size_t stride() const { return 2 * dim_ + 1; }

  nlohmann::json to_json() const;
  static MaskedLinearModel from_json(const nlohmann::json& j);

 private:
  std::size_t dim_ = 0;
  int outputs_ = 0;
  TaskKind task_ = TaskKind::kClassification;
  std::vector<double> params_;  // outputs × (2d + 1): [weights(x), weights(m), bias]
};

/// Supplies the input for example i at the current epoch (masks may be redrawn).
using ExampleSource = std::function<void(std::size_t i, Rng& rng, MaskedInput& out)>;

struct TrainingReport {
  std::vector<double> epoch_losses;  // full-data loss after each epoch (full-batch mode)
};

/// Fits `model` by (mini-batch) gradient descent; deterministic given seed.
TrainingReport fit_masked_linear(MaskedLinearModel& model, std::size_t n, const ExampleSource& source,
                                 std::span<const double> labels, const MaskedLinearConfig& config,
                                 std::span<const double> weights = {});

class MaskedLinearPredictor : public Predictor {
 public:
  MaskedLinearPredictor(MaskedLinearModel model, Prediction marginal, MaskedLinearConfig config);

  std::size_t num_features() const override { return model_.dim(); }
  TaskKind task() const override { return model_.task(); }
  int num_classes() const override {
    return model_.task() == TaskKind::kClassification ? model_.outputs() : 0;
  }
  Prediction predict(const MaskedInput& input, const RowExclusion& exclude = {}) const override;
  std::string kind() const override { return "masked_linear"; }
  nlohmann::json to_json() const override;

  const MaskedLinearModel& model() const { return model_; }

 private:
  MaskedLinearModel model_;
  Prediction marginal_;
  MaskedLinearConfig config_;
};

std::shared_ptr<MaskedLinearPredictor> train_masked_linear(const Dataset& train,
                                                           const MaskedLinearConfig& config);

// ---------------------------------------------------------------------------
// k-NN predictor

class KnnPredictor : public Predictor {
 public:
  /// `train` must be standardized; the index is built over it.
  KnnPredictor(std::shared_ptr<const Dataset> train, std::size_t k);
  KnnPredictor(std::shared_ptr<const Dataset> train, std::shared_ptr<const NeighborIndex> index,
               std::size_t k);

  std::size_t num_features() const override { return train_->dim(); }
  TaskKind task() const override { return train_->task; }
  int num_classes() const override { return train_->num_classes; }
  Prediction predict(const MaskedInput& input, const RowExclusion& exclude = {}) const override;
  std::string kind() const override { return "knn"; }
  nlohmann::json to_json() const override;

  std::size_t k() const { return k_; }

 private:
  std::shared_ptr<const Dataset> train_;
  std::shared_ptr<const NeighborIndex> index_;
  std::size_t k_;
  Prediction marginal_;
};

std::shared_ptr<KnnPredictor> knn_predictor(const Dataset& train, std::size_t k);

// ---------------------------------------------------------------------------
// Dictionary of per-subset predictors

/// Describes how a table trains its per-subset models (serializable).
struct TrainerSpec {
  std::string kind = "masked_linear";  // masked_linear | knn
  MaskedLinearConfig linear;           // used with masks forced to kFull
  std::size_t k = 10;

  nlohmann::json to_json() const;
  static TrainerSpec from_json(const nlohmann::json& j);
};

/// Trains on a column-restricted dataset (all columns fully observed).
using SubsetTrainer = std::function<PredictorPtr(const Dataset& columns_only)>;

SubsetTrainer make_subset_trainer(const TrainerSpec& spec);

/// Trains one dedicated model per distinct observed subset on first use and
/// caches it. Concurrent readers are allowed; each subset trains at most once.
class PredictorTable : public Predictor {
 public:
  PredictorTable(std::shared_ptr<const Dataset> train, SubsetTrainer trainer,
                 std::optional<TrainerSpec> spec = std::nullopt);

  std::size_t num_features() const override { return train_->dim(); }
  TaskKind task() const override { return train_->task; }
  int num_classes() const override { return train_->num_classes; }
  Prediction predict(const MaskedInput& input, const RowExclusion& exclude = {}) const override;
  std::string kind() const override { return "predictor_table"; }
  nlohmann::json to_json() const override;

  std::size_t training_runs() const { return training_runs_.load(); }
  PredictorPtr model_for(const FeatureSet& subset) const;

 private:
  struct Entry {
    std::once_flag once;
    PredictorPtr model;
  };

  std::shared_ptr<const Dataset> train_;
  SubsetTrainer trainer_;
  std::optional<TrainerSpec> spec_;
  Prediction marginal_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<FeatureSet, std::shared_ptr<Entry>, FeatureSetHash> cache_;
  mutable std::atomic<std::size_t> training_runs_{0};
};

std::shared_ptr<PredictorTable> predictor_table(const TrainerSpec& spec, const Dataset& train);

// ---------------------------------------------------------------------------
// Exact CUBE posterior

class CubeGroundTruth : public Predictor {
 public:
  /// `standardization` maps predictor inputs back to raw units; omit it when
  /// inputs are already raw.
  CubeGroundTruth(double sigma, std::optional<StandardizationParams> standardization,
                  CubeMeanTable means = default_cube_means());

  std::size_t num_features() const override { return kCubeDim; }
  TaskKind task() const override { return TaskKind::kClassification; }
  int num_classes() const override { return kCubeClasses; }
  Prediction predict(const MaskedInput& input, const RowExclusion& exclude = {}) const override;
  std::string kind() const override { return "cube_ground_truth"; }
  nlohmann::json to_json() const override;

  /// Unfloored posterior from raw values; `degenerate` is set when every
  /// category has zero likelihood (the result is then uniform).
  std::array<double, kCubeClasses> posterior(std::span<const int> observed,
                                             std::span<const double> raw_values,
                                             bool* degenerate = nullptr) const;
  double sigma() const { return sigma_; }
  const CubeMeanTable& means() const { return means_; }
  double to_raw(int j, double z) const {
    return standardization_ ? standardization_->invert(static_cast<std::size_t>(j), z) : z;
  }
  double from_raw(int j, double x) const {
    return standardization_ ? standardization_->apply(static_cast<std::size_t>(j), x) : x;
  }

 private:
  double sigma_;
  std::optional<StandardizationParams> standardization_;
  CubeMeanTable means_;
};

std::shared_ptr<CubeGroundTruth> cube_ground_truth(double sigma,
                                                   std::optional<StandardizationParams> standardization);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);
nlohmann::json standardization_to_json(const StandardizationParams& p);
StandardizationParams standardization_from_json(const nlohmann::json& j);

PredictorPtr predictor_from_json(const nlohmann::json& j);
void save_predictor(const Predictor& predictor, const std::filesystem::path& path);
PredictorPtr load_predictor(const std::filesystem::path& path);

}  // namespace afa
