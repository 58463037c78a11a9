#include "afa/predict.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace afa {

using nlohmann::json;

Prediction Prediction::classification(std::vector<double> probs) {
  Prediction p;
  p.task = TaskKind::kClassification;
  p.probs = std::move(probs);
  return p;
}

Prediction Prediction::regression(double value) {
  Prediction p;
  p.task = TaskKind::kRegression;
  p.value = value;
  return p;
}

int Prediction::argmax() const {
  if (probs.empty()) throw Error("argmax of an empty distribution");
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> finalize_distribution(std::vector<double> probs) {
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) throw Error("distribution has no positive mass");
  const double keep = 1.0 - kProbFloor * static_cast<double>(probs.size());
  for (double& p : probs) p = kProbFloor + keep * (p / total);
  return probs;
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy: return "cross-entropy";
    case LossKind::kZeroOne: return "zero-one";
    case LossKind::kSquaredError: return "squared-error";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "cross-entropy" || name == "cross_entropy") return LossKind::kCrossEntropy;
  if (name == "zero-one" || name == "zero_one") return LossKind::kZeroOne;
  if (name == "squared-error" || name == "squared_error" || name == "mse") return LossKind::kSquaredError;
  throw ConfigError("unknown loss kind '" + name + "'");
}

double loss(const Prediction& pred, double y, LossKind kind) {
  if (kind == LossKind::kSquaredError) {
    if (pred.task != TaskKind::kRegression) throw Error("squared-error loss needs a regression prediction");
    const double r = pred.value - y;
    return r * r;
  }
  if (pred.task != TaskKind::kClassification)
    throw Error(to_string(kind) + " loss needs a classification prediction");
  const auto label = static_cast<int>(y);
  if (label < 0 || static_cast<std::size_t>(label) >= pred.probs.size() || y != label)
    throw Error("label " + std::to_string(y) + " invalid for a " + std::to_string(pred.probs.size()) +
                "-class prediction");
  if (kind == LossKind::kZeroOne) return pred.argmax() == label ? 0.0 : 1.0;
  const double p = std::clamp(pred.probs[static_cast<std::size_t>(label)], kProbFloor, 1.0 - kProbFloor);
  return -std::log(p);
}

double max_classification_loss(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy: return -std::log(kProbFloor);
    case LossKind::kZeroOne: return 1.0;
    case LossKind::kSquaredError: break;
  }
  throw Error("squared-error loss is unbounded");
}

// ---------------------------------------------------------------------------

MaskedInput::MaskedInput(std::size_t d, std::span<const int> observed, std::span<const double> values)
    : MaskedInput(d) {
  if (observed.size() != values.size()) throw Error("MaskedInput: |x_o| != |o|");
  for (std::size_t i = 0; i < observed.size(); ++i) set(observed[i], values[i]);
}

MaskedInput MaskedInput::full(std::span<const double> values) {
  MaskedInput in(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    in.values_[j] = values[j];
    in.mask_[j] = 1;
    in.observed_.push_back(static_cast<int>(j));
  }
  return in;
}

void MaskedInput::set(int j, double v) {
  if (j < 0 || static_cast<std::size_t>(j) >= values_.size())
    throw Error("feature index " + std::to_string(j) + " out of range");
  const auto u = static_cast<std::size_t>(j);
  values_[u] = v;
  if (!mask_[u]) {
    mask_[u] = 1;
    observed_.insert(std::lower_bound(observed_.begin(), observed_.end(), j), j);
  }
}

void MaskedInput::clear(int j) {
  const auto u = static_cast<std::size_t>(j);
  if (!mask_[u]) return;
  mask_[u] = 0;
  values_[u] = 0.0;
  observed_.erase(std::lower_bound(observed_.begin(), observed_.end(), j));
}

std::vector<double> MaskedInput::observed_values() const {
  std::vector<double> out;
  out.reserve(observed_.size());
  for (int j : observed_) out.push_back(values_[static_cast<std::size_t>(j)]);
  return out;
}

Prediction predict(const Predictor& predictor, std::span<const double> x_o, std::span<const int> o) {
  if (x_o.size() != o.size()) throw Error("predict: |x_o| != |o|");
  const std::size_t d = predictor.num_features();
  for (int j : o)
    if (j < 0 || static_cast<std::size_t>(j) >= d)
      throw Error("predict: feature index " + std::to_string(j) + " out of range [0, " +
                  std::to_string(d) + ")");
  return predictor.predict(MaskedInput(d, o, x_o));
}

Prediction label_marginal(const Dataset& train) {
  if (train.task == TaskKind::kRegression) {
    double mean = std::accumulate(train.labels.begin(), train.labels.end(), 0.0) /
                  static_cast<double>(train.size());
    return Prediction::regression(mean);
  }
  std::vector<double> counts(static_cast<std::size_t>(train.num_classes), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) counts[static_cast<std::size_t>(train.label_index(i))] += 1.0;
  return Prediction::classification(finalize_distribution(std::move(counts)));
}

// ---------------------------------------------------------------------------
// MaskedLinearModel

MaskedLinearModel::MaskedLinearModel(std::size_t d, int outputs, TaskKind task)
    : dim_(d), outputs_(outputs), task_(task), params_(static_cast<std::size_t>(outputs) * (2 * d + 1), 0.0) {
  if (outputs < 1) throw Error("masked linear model needs at least one output");
  if (task == TaskKind::kRegression && outputs != 1) throw Error("regression model has a single output");
}

void MaskedLinearModel::scores(const MaskedInput& input, std::vector<double>& out) const {
  if (input.dim() != dim_) throw Error("masked linear model: input dimension mismatch");
  out.assign(static_cast<std::size_t>(outputs_), 0.0);
  const auto values = input.values();
  const std::size_t s = stride();
  for (int c = 0; c < outputs_; ++c) {
    const double* w = params_.data() + static_cast<std::size_t>(c) * s;
    double acc = w[2 * dim_];
    for (int j : input.observed()) {
      const auto u = static_cast<std::size_t>(j);
      acc += w[u] * values[u] + w[dim_ + u];
    }
    out[static_cast<std::size_t>(c)] = acc;
  }
}

namespace {

void softmax_inplace(std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : v) x /= total;
}

}  // namespace

Prediction MaskedLinearModel::predict(const MaskedInput& input) const {
  std::vector<double> s;
  scores(input, s);
  if (task_ == TaskKind::kRegression) return Prediction::regression(s[0]);
  softmax_inplace(s);
  return Prediction::classification(finalize_distribution(std::move(s)));
}

double MaskedLinearModel::batch_loss(std::span<const MaskedInput> inputs, std::span<const double> labels,
                                     double l2, std::vector<double>* grad,
                                     std::span<const double> weights) const {
  if (inputs.size() != labels.size()) throw Error("batch_loss: input/label count mismatch");
  if (!weights.empty() && weights.size() != inputs.size()) throw Error("batch_loss: weight count mismatch");
  const std::size_t s = stride();
  if (grad) grad->assign(params_.size(), 0.0);
  double total_weight = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) total_weight += weights.empty() ? 1.0 : weights[i];
  if (!(total_weight > 0.0)) throw Error("batch_loss: non-positive total weight");

  double total = 0.0;
  std::vector<double> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double w_i = (weights.empty() ? 1.0 : weights[i]) / total_weight;
    scores(inputs[i], out);
    if (task_ == TaskKind::kRegression) {
      const double r = out[0] - labels[i];
      total += w_i * r * r;
      out[0] = 2.0 * r;
    } else {
      const double mx = *std::max_element(out.begin(), out.end());
      double z = 0.0;
      for (double v : out) z += std::exp(v - mx);
      const auto y = static_cast<std::size_t>(labels[i]);
      total += w_i * (std::log(z) + mx - out[y]);
      for (double& v : out) v = std::exp(v - mx) / z;
      out[y] -= 1.0;
    }
    if (!grad) continue;
    const auto values = inputs[i].values();
    for (int c = 0; c < outputs_; ++c) {
      const double g = w_i * out[static_cast<std::size_t>(c)];
      double* gw = grad->data() + static_cast<std::size_t>(c) * s;
      gw[2 * dim_] += g;
      for (int j : inputs[i].observed()) {
        const auto u = static_cast<std::size_t>(j);
        gw[u] += g * values[u];
        gw[dim_ + u] += g;
      }
    }
  }
  if (l2 > 0.0) {
    for (int c = 0; c < outputs_; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * s;
      for (std::size_t t = 0; t < 2 * dim_; ++t) {
        const double w = params_[base + t];
        total += 0.5 * l2 * w * w;
        if (grad) (*grad)[base + t] += l2 * w;
      }
    }
  }
  return total;
}

json MaskedLinearModel::to_json() const {
  return json{{"dim", dim_}, {"outputs", outputs_}, {"task", afa::to_string(task_)}, {"params", params_}};
}

MaskedLinearModel MaskedLinearModel::from_json(const json& j) {
  MaskedLinearModel m(j.at("dim").get<std::size_t>(), j.at("outputs").get<int>(),
                      parse_task_kind(j.at("task").get<std::string>()));
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != m.params_.size()) throw Error("masked linear model: parameter count mismatch");
  m.params_ = std::move(params);
  return m;
}

TrainingReport fit_masked_linear(MaskedLinearModel& model, std::size_t n, const ExampleSource& source,
                                 std::span<const double> labels, const MaskedLinearConfig& config,
                                 std::span<const double> weights) {
  if (n == 0) throw Error("cannot train on zero examples");
  if (labels.size() != n) throw Error("fit_masked_linear: label count mismatch");
  Rng rng = make_rng(config.seed, 0x7EA1);
  TrainingReport report;
  auto& params = model.parameters();
  std::vector<double> grad;
  auto check = [&](int epoch, double value) {
    if (!std::isfinite(value)) throw Error("non-finite gradient at epoch " + std::to_string(epoch));
  };

  if (config.batch_size == 0) {
    std::vector<MaskedInput> inputs(n, MaskedInput(model.dim()));
    for (std::size_t i = 0; i < n; ++i) source(i, rng, inputs[i]);
    double step = config.step_size;
    double current = model.batch_loss(inputs, labels, config.l2, &grad, weights);
    check(0, current);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      double gnorm2 = 0.0;
      for (double g : grad) {
        check(epoch, g);
        gnorm2 += g * g;
      }
      const std::vector<double> saved = params;
      bool accepted = false;
      for (int tries = 0; tries < 40 && gnorm2 > 0.0; ++tries) {
        for (std::size_t t = 0; t < params.size(); ++t) params[t] = saved[t] - step * grad[t];
        const double next = model.batch_loss(inputs, labels, config.l2, nullptr, weights);
        if (std::isfinite(next) && next <= current - 1e-4 * step * gnorm2) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) params = saved;
      current = model.batch_loss(inputs, labels, config.l2, &grad, weights);
      check(epoch, current);
      report.epoch_losses.push_back(current);
      if (accepted) step = std::min(step * 2.0, config.step_size * 64.0);
    }
    return report;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<MaskedInput> batch;
  std::vector<double> batch_labels, batch_weights;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double step = config.step_size / std::sqrt(1.0 + epoch);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      batch.assign(stop - start, MaskedInput(model.dim()));
      batch_labels.clear();
      batch_weights.clear();
      for (std::size_t b = start; b < stop; ++b) {
        source(order[b], rng, batch[b - start]);
        batch_labels.push_back(labels[order[b]]);
        if (!weights.empty()) batch_weights.push_back(weights[order[b]]);
      }
      const double value = model.batch_loss(batch, batch_labels, config.l2, &grad, batch_weights);
      check(epoch, value);
      for (std::size_t t = 0; t < params.size(); ++t) {
        check(epoch, grad[t]);
        params[t] -= step * grad[t];
      }
    }
  }
  return report;
}

json linear_config_to_json(const MaskedLinearConfig& c) {
  return json{{"epochs", c.epochs},
              {"step_size", c.step_size},
              {"batch_size", c.batch_size},
              {"l2", c.l2},
              {"masks", c.masks == MaskDistribution::kFull ? "full" : "uniform_density"},
              {"seed", c.seed}};
}

MaskedLinearConfig linear_config_from_json(const json& j) {
  MaskedLinearConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.step_size = j.value("step_size", c.step_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.l2 = j.value("l2", c.l2);
  const std::string masks = j.value("masks", std::string("uniform_density"));
  if (masks == "full") c.masks = MaskDistribution::kFull;
  else if (masks == "uniform_density") c.masks = MaskDistribution::kUniformDensity;
  else throw ConfigError("unknown mask distribution '" + masks + "'");
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 1) throw ConfigError("epochs must be positive");
  if (!(c.step_size > 0.0)) throw ConfigError("step_size must be positive");
  return c;
}

namespace {

json prediction_to_json(const Prediction& p) {
  if (p.task == TaskKind::kRegression) return json{{"value", p.value}};
  return json{{"probs", p.probs}};
}

Prediction prediction_from_json(const json& j) {
  if (j.contains("probs")) return Prediction::classification(j.at("probs").get<std::vector<double>>());
  return Prediction::regression(j.at("value").get<double>());
}

}  // namespace

MaskedLinearPredictor::MaskedLinearPredictor(MaskedLinearModel model, Prediction marginal,
                                             MaskedLinearConfig config)
    : model_(std::move(model)), marginal_(std::move(marginal)), config_(config) {}

Prediction MaskedLinearPredictor::predict(const MaskedInput& input, const RowExclusion&) const {
  if (input.observed().empty()) return marginal_;
  return model_.predict(input);
}

json MaskedLinearPredictor::to_json() const {
  return json{{"kind", kind()},
              {"model", model_.to_json()},
              {"marginal", prediction_to_json(marginal_)},
              {"config", linear_config_to_json(config_)}};
}

std::shared_ptr<MaskedLinearPredictor> train_masked_linear(const Dataset& train,
                                                           const MaskedLinearConfig& config) {
  train.validate();
  const std::size_t d = train.dim();
  const int outputs = train.task == TaskKind::kClassification ? train.num_classes : 1;
  MaskedLinearModel model(d, outputs, train.task);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ExampleSource source = [&](std::size_t i, Rng& rng, MaskedInput& out) {
    out = MaskedInput(d);
    const auto row = train.features.row(i);
    if (config.masks == MaskDistribution::kFull) {
      for (std::size_t j = 0; j < d; ++j) out.set(static_cast<int>(j), row[j]);
      return;
    }
    const double p = unit(rng);
    for (std::size_t j = 0; j < d; ++j)
      if (unit(rng) < p) out.set(static_cast<int>(j), row[j]);
  };
  fit_masked_linear(model, train.size(), source, train.labels, config);
  auto result = std::make_shared<MaskedLinearPredictor>(std::move(model), label_marginal(train), config);
  return result;
}

// ---------------------------------------------------------------------------
// KnnPredictor

KnnPredictor::KnnPredictor(std::shared_ptr<const Dataset> train, std::size_t k)
    : KnnPredictor(train, std::make_shared<NeighborIndex>(train->features), k) {}

KnnPredictor::KnnPredictor(std::shared_ptr<const Dataset> train, std::shared_ptr<const NeighborIndex> index,
                           std::size_t k)
    : train_(std::move(train)), index_(std::move(index)), k_(k) {
  if (k_ == 0) throw ConfigError("knn predictor needs k >= 1");
  train_->validate();
  if (index_->size() != train_->size()) throw Error("knn predictor: index/dataset size mismatch");
  marginal_ = label_marginal(*train_);
}

Prediction KnnPredictor::predict(const MaskedInput& input, const RowExclusion& exclude) const {
  if (input.dim() != train_->dim()) throw Error("knn predictor: input dimension mismatch");
  if (input.observed().empty()) return marginal_;
  const auto values = input.observed_values();
  const auto ids = index_->query(input.observed(), values, k_, exclude);
  if (ids.empty()) return marginal_;
  if (train_->task == TaskKind::kRegression) {
    double total = 0.0;
    for (auto id : ids) total += train_->labels[id];
    return Prediction::regression(total / static_cast<double>(ids.size()));
  }
  const auto classes = static_cast<std::size_t>(train_->num_classes);
  std::vector<double> counts(classes, 1.0 / static_cast<double>(classes));
  for (auto id : ids) counts[static_cast<std::size_t>(train_->label_index(id))] += 1.0;
  return Prediction::classification(finalize_distribution(std::move(counts)));
}

json KnnPredictor::to_json() const {
  return json{{"kind", kind()}, {"k", k_}, {"train", dataset_to_json(*train_)}};
}

std::shared_ptr<KnnPredictor> knn_predictor(const Dataset& train, std::size_t k) {
  return std::make_shared<KnnPredictor>(std::make_shared<const Dataset>(train), k);
}

// ---------------------------------------------------------------------------
// PredictorTable

json TrainerSpec::to_json() const {
  return json{{"kind", kind}, {"linear", linear_config_to_json(linear)}, {"k", k}};
}

TrainerSpec TrainerSpec::from_json(const json& j) {
  TrainerSpec s;
  s.kind = j.value("kind", s.kind);
  if (j.contains("linear")) s.linear = linear_config_from_json(j.at("linear"));
  s.k = j.value("k", s.k);
  return s;
}

SubsetTrainer make_subset_trainer(const TrainerSpec& spec) {
  if (spec.kind == "masked_linear") {
    MaskedLinearConfig config = spec.linear;
    config.masks = MaskDistribution::kFull;
    return [config](const Dataset& columns) -> PredictorPtr { return train_masked_linear(columns, config); };
  }
  if (spec.kind == "knn") {
    const std::size_t k = spec.k;
    return [k](const Dataset& columns) -> PredictorPtr { return knn_predictor(columns, k); };
  }
  throw ConfigError("unknown subset trainer kind '" + spec.kind + "'");
}

PredictorTable::PredictorTable(std::shared_ptr<const Dataset> train, SubsetTrainer trainer,
                               std::optional<TrainerSpec> spec)
    : train_(std::move(train)), trainer_(std::move(trainer)), spec_(std::move(spec)) {
  train_->validate();
  marginal_ = label_marginal(*train_);
}

PredictorPtr PredictorTable::model_for(const FeatureSet& subset) const {
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(mutex_);
    auto it = cache_.find(subset);
    if (it != cache_.end()) entry = it->second;
  }
  if (!entry) {
    std::unique_lock lock(mutex_);
    auto& slot = cache_[subset];
    if (!slot) slot = std::make_shared<Entry>();
    entry = slot;
  }
  std::call_once(entry->once, [&] {
    entry->model = trainer_(train_->subset_columns(subset));
    training_runs_.fetch_add(1);
  });
  return entry->model;
}

Prediction PredictorTable::predict(const MaskedInput& input, const RowExclusion& exclude) const {
  if (input.dim() != train_->dim()) throw Error("predictor table: input dimension mismatch");
  if (input.observed().empty()) return marginal_;
  FeatureSet key(input.observed());
  auto model = model_for(key);
  return model->predict(MaskedInput::full(input.observed_values()), exclude);
}

json PredictorTable::to_json() const {
  if (!spec_) throw Error("predictor table built from a custom trainer cannot be serialized");
  return json{{"kind", kind()}, {"trainer", spec_->to_json()}, {"train", dataset_to_json(*train_)}};
}

std::shared_ptr<PredictorTable> predictor_table(const TrainerSpec& spec, const Dataset& train) {
  return std::make_shared<PredictorTable>(std::make_shared<const Dataset>(train), make_subset_trainer(spec),
                                          spec);
}

// ---------------------------------------------------------------------------
// CubeGroundTruth

CubeGroundTruth::CubeGroundTruth(double sigma, std::optional<StandardizationParams> standardization,
                                 CubeMeanTable means)
    : sigma_(sigma), standardization_(std::move(standardization)), means_(means) {
  if (!(sigma_ > 0.0)) throw ConfigError("cube ground truth needs sigma > 0");
}

std::array<double, kCubeClasses> CubeGroundTruth::posterior(std::span<const int> observed,
                                                            std::span<const double> raw_values,
                                                            bool* degenerate) const {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  constexpr double kSupportSlack = 1e-12;
  const double log_norm = std::log(sigma_ * std::sqrt(2.0 * 3.14159265358979323846));
  std::array<double, kCubeClasses> logl{};
  for (int c = 0; c < kCubeClasses; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < observed.size() && acc != kNegInf; ++t) {
      const int j = observed[t];
      const double x = raw_values[t];
      if (j >= c && j <= c + 2) {
        const double z = (x - means_[static_cast<std::size_t>(c)][static_cast<std::size_t>(j - c)]) / sigma_;
        acc += -0.5 * z * z - log_norm;
      } else if (x < -kSupportSlack || x > 1.0 + kSupportSlack) {
        acc = kNegInf;
      }
    }
    logl[static_cast<std::size_t>(c)] = acc;
  }
  const double mx = *std::max_element(logl.begin(), logl.end());
  std::array<double, kCubeClasses> post{};
  if (mx == kNegInf) {
    if (degenerate) *degenerate = true;
    post.fill(1.0 / kCubeClasses);
    return post;
  }
  if (degenerate) *degenerate = false;
  double total = 0.0;
  for (int c = 0; c < kCubeClasses; ++c) {
    const auto u = static_cast<std::size_t>(c);
    post[u] = logl[u] == kNegInf ? 0.0 : std::exp(logl[u] - mx);
    total += post[u];
  }
  for (double& p : post) p /= total;
  return post;
}

Prediction CubeGroundTruth::predict(const MaskedInput& input, const RowExclusion&) const {
  if (input.dim() != kCubeDim) throw Error("cube ground truth: input dimension mismatch");
  const auto& observed = input.observed();
  std::vector<double> raw;
  raw.reserve(observed.size());
  for (int j : observed) raw.push_back(to_raw(j, input.values()[static_cast<std::size_t>(j)]));
  auto post = posterior(observed, raw);
  return Prediction::classification(finalize_distribution(std::vector<double>(post.begin(), post.end())));
}

json CubeGroundTruth::to_json() const {
  json j{{"kind", kind()}, {"sigma", sigma_}, {"means", means_}};
  if (standardization_) j["standardization"] = standardization_to_json(*standardization_);
  return j;
}

std::shared_ptr<CubeGroundTruth> cube_ground_truth(double sigma,
                                                   std::optional<StandardizationParams> standardization) {
  return std::make_shared<CubeGroundTruth>(sigma, std::move(standardization));
}

// ---------------------------------------------------------------------------
// Serialization

json standardization_to_json(const StandardizationParams& p) {
  return json{{"means", p.means}, {"scales", p.scales}};
}

StandardizationParams standardization_from_json(const json& j) {
  StandardizationParams p;
  p.means = j.at("means").get<std::vector<double>>();
  p.scales = j.at("scales").get<std::vector<double>>();
  if (p.means.size() != p.scales.size()) throw Error("standardization: means/scales length mismatch");
  return p;
}

json dataset_to_json(const Dataset& data) {
  json rows = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = data.features.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  json j{{"features", rows},
         {"labels", data.labels},
         {"feature_names", data.feature_names},
         {"task", to_string(data.task)},
         {"num_classes", data.num_classes}};
  if (data.standardization) j["standardization"] = standardization_to_json(*data.standardization);
  return j;
}

Dataset dataset_from_json(const json& j) {
  Dataset data;
  for (const auto& row : j.at("features")) data.features.append_row(row.get<std::vector<double>>());
  data.labels = j.at("labels").get<std::vector<double>>();
  data.feature_names = j.value("feature_names", std::vector<std::string>{});
  data.task = parse_task_kind(j.at("task").get<std::string>());
  data.num_classes = j.value("num_classes", 0);
  if (j.contains("standardization")) data.standardization = standardization_from_json(j.at("standardization"));
  data.validate();
  return data;
}

PredictorPtr predictor_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "masked_linear") {
    return std::make_shared<MaskedLinearPredictor>(MaskedLinearModel::from_json(j.at("model")),
                                                   prediction_from_json(j.at("marginal")),
                                                   linear_config_from_json(j.value("config", json::object())));
  }
  if (kind == "knn") {
    return std::make_shared<KnnPredictor>(std::make_shared<const Dataset>(dataset_from_json(j.at("train"))),
                                          j.at("k").get<std::size_t>());
  }
  if (kind == "predictor_table") {
    return predictor_table(TrainerSpec::from_json(j.at("trainer")), dataset_from_json(j.at("train")));
  }
  if (kind == "cube_ground_truth") {
    std::optional<StandardizationParams> p;
    if (j.contains("standardization")) p = standardization_from_json(j.at("standardization"));
    CubeMeanTable means = j.contains("means") ? j.at("means").get<CubeMeanTable>() : default_cube_means();
    return std::make_shared<CubeGroundTruth>(j.at("sigma").get<double>(), std::move(p), means);
  }
  throw ConfigError("unknown predictor kind '" + kind + "'");
}

void save_predictor(const Predictor& predictor, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write predictor file " + path.string());
  out << predictor.to_json().dump() << '\n';
}

PredictorPtr load_predictor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictor file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("predictor file " + path.string() + ": " + e.what());
  }
  return predictor_from_json(j);
}

}  // namespace afa
