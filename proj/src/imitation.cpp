#include "afa/imitation.hpp"

#include <fstream>
#include <limits>
#include <set>

#include "afa/parallel.hpp"

namespace afa {

using nlohmann::json;

std::vector<BcExample> examples_from_trace(const RollOutTrace& trace, std::size_t d,
                                           const std::optional<StandardizationParams>& standardization) {
  std::vector<BcExample> out;
  out.reserve(trace.steps.size());
  for (const auto& step : trace.steps) {
    BcExample e;
    e.instance = trace.instance;
    e.dim = d;
    e.observed = step.observed;
    e.values = step.values;
    e.values_std.reserve(step.values.size());
    for (std::size_t t = 0; t < step.observed.size(); ++t) {
      const auto j = static_cast<std::size_t>(step.observed[t]);
      e.values_std.push_back(standardization ? standardization->apply(j, step.values[t]) : step.values[t]);
    }
    e.action = step.action.is_terminate() ? static_cast<int>(d) : step.action.feature;
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

template <typename Teacher>
BcCollection collect_impl(const Teacher& teacher, const Dataset& data, const Predictor& predictor,
                          const CostModel& cost, const RolloutOptions& options, std::size_t threads) {
  BcCollection out;
  out.traces.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    std::vector<double> raw;
    const Episode ep = make_episode(data, i, raw);
    out.traces[i] = rollout(teacher, ep, predictor, cost, options);
  });
  for (const auto& t : out.traces) {
    auto ex = examples_from_trace(t, data.dim(), data.standardization);
    out.examples.insert(out.examples.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return out;
}

}  // namespace

BcCollection collect_traces(const Policy& teacher, const Dataset& data, const Predictor& predictor,
                            const CostModel& cost, const RolloutOptions& options, std::size_t threads) {
  return collect_impl(teacher, data, predictor, cost, options, threads);
}

BcCollection collect_traces(const CheatingPolicy& teacher, const Dataset& data, const Predictor& predictor,
                            const CostModel& cost, const RolloutOptions& options, std::size_t threads) {
  return collect_impl(teacher, data, predictor, cost, options, threads);
}

json to_json(const BcConfig& c) {
  return json{{"epochs", c.epochs},         {"step_size", c.step_size}, {"batch_size", c.batch_size},
              {"l2", c.l2},                 {"interactions", c.interactions}, {"seed", c.seed}};
}

BcConfig bc_config_from_json(const json& j) {
  BcConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.step_size = j.value("step_size", c.step_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.l2 = j.value("l2", c.l2);
  c.interactions = j.value("interactions", c.interactions);
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 1) throw ConfigError("bc epochs must be positive");
  if (!(c.step_size > 0.0)) throw ConfigError("bc step_size must be positive");
  return c;
}

// ---------------------------------------------------------------------------

std::size_t bc_encoded_dim(std::size_t d, bool interactions) {
  return interactions ? d + d * (d + 1) / 2 : d;
}

MaskedInput bc_encode(const MaskedInput& input, bool interactions) {
  if (!interactions) return input;
  const std::size_t d = input.dim();
  MaskedInput out(bc_encoded_dim(d, true));
  const auto& obs = input.observed();
  const auto values = input.values();
  for (int j : obs) out.set(j, values[static_cast<std::size_t>(j)]);
  // Pair (a, b), a <= b, lives at d + a*d - a*(a-1)/2 + (b - a). Squares included.
  for (std::size_t s = 0; s < obs.size(); ++s) {
    const auto a = static_cast<std::size_t>(obs[s]);
    const std::size_t row = d + a * d - a * (a - 1) / 2;
    for (std::size_t t = s; t < obs.size(); ++t) {
      const auto b = static_cast<std::size_t>(obs[t]);
      out.set(static_cast<int>(row + (b - a)), values[a] * values[b]);
    }
  }
  return out;
}

StudentPolicy::StudentPolicy(std::size_t d, MaskedLinearModel model, bool interactions)
    : d_(d), model_(std::move(model)), interactions_(interactions) {
  if (model_.outputs() != static_cast<int>(d + 1)) throw Error("student model must have d+1 outputs");
  if (model_.dim() != bc_encoded_dim(d, interactions)) throw Error("student model input dimension mismatch");
}

StudentPolicy StudentPolicy::constant(std::size_t d, int action) {
  StudentPolicy s(d, MaskedLinearModel(d, static_cast<int>(d + 1), TaskKind::kClassification), false);
  s.constant_ = action;
  return s;
}

MaskedInput StudentPolicy::encode(const MaskedInput& input) const { return bc_encode(input, interactions_); }

Action StudentPolicy::step(const MaskedInput& input) const {
  if (input.dim() != d_) throw Error("student: input dimension mismatch");
  if (input.observed().size() >= d_) return Action::terminate();
  if (constant_) {
    const int a = *constant_;
    if (a == static_cast<int>(d_) || input.is_observed(a)) return Action::terminate();
    return Action::acquire(a);
  }
  std::vector<double> s;
  model_.scores(encode(input), s);
  int best = Action::kTerminate;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d_; ++j) {
    if (input.is_observed(static_cast<int>(j))) continue;
    if (s[j] > best_score) {
      best_score = s[j];
      best = static_cast<int>(j);
    }
  }
  if (s[d_] > best_score) return Action::terminate();
  return Action::acquire(best);
}

Decision StudentPolicy::decide(const ObservationState& state, StepContext&) const {
  const Action a = state.full() ? Action::terminate() : step(state.input());
  FeatureSet chosen;
  if (!a.is_terminate()) chosen = FeatureSet{a.feature};
  return Decision{a, chosen, std::numeric_limits<double>::quiet_NaN()};
}

json StudentPolicy::to_json() const {
  return json{{"kind", "bc_student"},
              {"dim", d_},
              {"interactions", interactions_},
              {"constant_action", constant_ ? json(*constant_) : json(nullptr)},
              {"model", model_.to_json()}};
}

StudentPolicy StudentPolicy::from_json(const json& j) {
  if (j.value("kind", std::string()) != "bc_student") throw ConfigError("not a behavioral-cloning student file");
  const auto d = j.at("dim").get<std::size_t>();
  if (!j.at("constant_action").is_null()) return constant(d, j.at("constant_action").get<int>());
  return StudentPolicy(d, MaskedLinearModel::from_json(j.at("model")), j.value("interactions", false));
}

BcTrainResult train_bc(std::span<const BcExample> examples, std::size_t d, const BcConfig& config) {
  if (examples.empty()) throw Error("behavioral cloning needs at least one example");
  std::set<int> actions;
  std::vector<double> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) {
    if (e.dim != d) throw Error("example dimension mismatch");
    if (e.action < 0 || e.action > static_cast<int>(d)) throw Error("example action out of range");
    if (e.action < static_cast<int>(d) && std::binary_search(e.observed.begin(), e.observed.end(), e.action))
      throw Error("example action re-acquires an observed feature");
    actions.insert(e.action);
    labels.push_back(e.action);
  }
  if (actions.size() < 2) return BcTrainResult{StudentPolicy::constant(d, *actions.begin()), {}};

  MaskedLinearModel model(bc_encoded_dim(d, config.interactions), static_cast<int>(d + 1),
                          TaskKind::kClassification);
  MaskedLinearConfig lc;
  lc.epochs = config.epochs;
  lc.step_size = config.step_size;
  lc.batch_size = config.batch_size;
  lc.l2 = config.l2;
  lc.seed = config.seed;
  ExampleSource source = [&](std::size_t i, Rng&, MaskedInput& out) {
    out = bc_encode(examples[i].input(), config.interactions);
  };
  TrainingReport report = fit_masked_linear(model, examples.size(), source, labels, lc);
  return BcTrainResult{StudentPolicy(d, std::move(model), config.interactions), std::move(report)};
}

Action student_step(const StudentPolicy& student, const ObservationState& state) {
  if (state.full()) return Action::terminate();
  return student.step(state.input());
}

double agreement(const StudentPolicy& student, std::span<const BcExample> examples) {
  if (examples.empty()) throw Error("agreement over zero examples");
  std::size_t hits = 0;
  for (const auto& e : examples) {
    const Action a = student.step(e.input());
    const int code = a.is_terminate() ? static_cast<int>(e.dim) : a.feature;
    hits += code == e.action;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------

json example_to_json(const BcExample& e) {
  return json{{"instance", e.instance},
              {"dim", e.dim},
              {"observed", e.observed},
              {"values", e.values},
              {"values_std", e.values_std},
              {"action", e.is_terminate() ? json("terminate") : json(e.action)}};
}

BcExample example_from_json(const json& j) {
  BcExample e;
  e.instance = j.at("instance").get<std::size_t>();
  e.dim = j.at("dim").get<std::size_t>();
  e.observed = j.at("observed").get<std::vector<int>>();
  e.values = j.at("values").get<std::vector<double>>();
  e.values_std = j.at("values_std").get<std::vector<double>>();
  const auto& a = j.at("action");
  e.action = a.is_string() ? static_cast<int>(e.dim) : a.get<int>();
  if (e.observed.size() != e.values.size() || e.values.size() != e.values_std.size())
    throw ConfigError("example has misaligned observed/values");
  return e;
}

void write_examples_jsonl(std::span<const BcExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : examples) out << example_to_json(e).dump() << '\n';
}

std::vector<BcExample> read_examples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<BcExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_student(const StudentPolicy& student, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << student.to_json().dump() << '\n';
}

StudentPolicy load_student(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return StudentPolicy::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace afa
