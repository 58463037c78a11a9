#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "afa/policy.hpp"
#include "afa/predict.hpp"

namespace afa {

/// One (state, teacher action) pair. `action` is a feature index, or d for φ.
struct BcExample {
  std::size_t instance = 0;
  std::size_t dim = 0;
  std::vector<int> observed;
  std::vector<double> values;      // raw
  std::vector<double> values_std;  // standardized
  int action = 0;

  bool is_terminate() const { return action == static_cast<int>(dim); }
  MaskedInput input() const { return MaskedInput(dim, observed, values_std); }
};

/// Teacher traces plus the examples extracted from them.
struct BcCollection {
  std::vector<RollOutTrace> traces;
  std::vector<BcExample> examples;
};

/// One example per recorded step (the terminal step included).
std::vector<BcExample> examples_from_trace(const RollOutTrace& trace, std::size_t d,
                                           const std::optional<StandardizationParams>& standardization);

/// Rolls `teacher` out on every row of `data` (in parallel, deterministic).
BcCollection collect_traces(const Policy& teacher, const Dataset& data, const Predictor& predictor,
                            const CostModel& cost, const RolloutOptions& options, std::size_t threads = 0);
BcCollection collect_traces(const CheatingPolicy& teacher, const Dataset& data, const Predictor& predictor,
                            const CostModel& cost, const RolloutOptions& options, std::size_t threads = 0);

struct BcConfig {
  int epochs = 300;
  double step_size = 1.0;
  std::size_t batch_size = 0;  // full batch by default
  double l2 = 1e-4;
  /// Adds products of observed value pairs, squares included, to the encoding.
  bool interactions = false;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const BcConfig& c);
BcConfig bc_config_from_json(const nlohmann::json& j);

/// (d+1)-way masked classifier over acquisition actions.
class StudentPolicy : public Policy {
 public:
  StudentPolicy(std::size_t d, MaskedLinearModel model, bool interactions);
  /// Policy that always proposes `action` (used when training data has one action).
  static StudentPolicy constant(std::size_t d, int action);

  Decision decide(const ObservationState& state, StepContext& ctx) const override;
  std::string name() const override { return "bc_student"; }

  /// Best legal action; features beat φ on ties, then the lowest index wins.
  Action step(const MaskedInput& input) const;
  /// Encoded model input for a raw observation.
  MaskedInput encode(const MaskedInput& input) const;

  std::size_t dim() const { return d_; }
  const MaskedLinearModel& model() const { return model_; }
  bool interactions() const { return interactions_; }
  std::optional<int> constant_action() const { return constant_; }

  nlohmann::json to_json() const;
  static StudentPolicy from_json(const nlohmann::json& j);

 private:
  std::size_t d_;
  MaskedLinearModel model_;
  bool interactions_ = false;
  std::optional<int> constant_;
};

/// Encoded dimension for d features.
std::size_t bc_encoded_dim(std::size_t d, bool interactions);
MaskedInput bc_encode(const MaskedInput& input, bool interactions);

struct BcTrainResult {
  StudentPolicy student;
  TrainingReport report;
};

/// Minimizes cross-entropy over the d+1 actions. Deterministic given seed.
BcTrainResult train_bc(std::span<const BcExample> examples, std::size_t d, const BcConfig& config);

Action student_step(const StudentPolicy& student, const ObservationState& state);

/// Fraction of examples whose action the student reproduces.
double agreement(const StudentPolicy& student, std::span<const BcExample> examples);

nlohmann::json example_to_json(const BcExample& e);
BcExample example_from_json(const nlohmann::json& j);
void write_examples_jsonl(std::span<const BcExample> examples, const std::filesystem::path& path);
std::vector<BcExample> read_examples_jsonl(const std::filesystem::path& path);

void save_student(const StudentPolicy& student, const std::filesystem::path& path);
StudentPolicy load_student(const std::filesystem::path& path);

}  // namespace afa
