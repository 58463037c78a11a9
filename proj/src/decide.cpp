#include "afa/decide.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "afa/parallel.hpp"

namespace afa {

using nlohmann::json;

ObservationState DecisionProblem::state(std::size_t i, const FeatureSet& o) const {
  ObservationState s(dim());
  for (int j : o) {
    const auto u = static_cast<std::size_t>(j);
    s.add(j, raw(i, u), x_std(i, u));
  }
  return s;
}

ObservationState DecisionProblem::full_state(std::size_t i) const {
  return state(i, FeatureSet::range(0, static_cast<int>(dim())));
}

Episode DecisionProblem::episode(std::size_t i, std::optional<std::size_t> train_row) const {
  return Episode{i, raw.row(i), x_std.row(i), std::nullopt, train_row};
}

DecisionProblem make_decision_problem(const DecisionDataset& data, std::optional<StandardizationParams> params) {
  if (data.size() == 0) throw Error("decision data is empty");
  if (data.action.size() != data.size() || data.outcome.size() != data.size())
    throw Error("decision data columns have different lengths");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.action[i] != 0 && data.action[i] != 1) throw Error("actions must be 0 or 1");
    if (!std::isfinite(data.outcome[i])) throw Error("non-finite outcome at row " + std::to_string(i));
  }
  Dataset wrapped;
  wrapped.features = data.features;
  wrapped.labels = data.outcome;
  wrapped.task = TaskKind::kRegression;
  wrapped.feature_names = data.feature_names;
  DecisionProblem p;
  if (params) {
    p.x_std = apply_standardization(wrapped, *params).features;
    p.standardization = std::move(*params);
  } else {
    auto [z, fitted] = standardize(wrapped);
    p.x_std = std::move(z.features);
    p.standardization = std::move(fitted);
  }
  p.raw = data.features;
  p.action = data.action;
  p.outcome = data.outcome;
  p.feature_names = data.feature_names;
  p.truth = data.ground_truth;
  return p;
}

DecisionDataset subset_rows(const DecisionDataset& data, std::span<const std::size_t> rows) {
  DecisionDataset out;
  out.features = Matrix(0, data.dim());
  out.feature_names = data.feature_names;
  if (data.ground_truth) out.ground_truth.emplace();
  for (std::size_t r : rows) {
    if (r >= data.size()) throw Error("row index out of range");
    out.features.append_row(data.features.row(r));
    out.action.push_back(data.action[r]);
    out.outcome.push_back(data.outcome[r]);
    if (data.ground_truth) out.ground_truth->push_back((*data.ground_truth)[r]);
  }
  return out;
}

DecisionSplit split_decision(const DecisionDataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw Error("decision split leaves an empty partition");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0xD5);
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const std::size_t> all(order);
  return DecisionSplit{subset_rows(data, all.first(n_train)), subset_rows(data, all.subspan(n_train))};
}

// ---------------------------------------------------------------------------

json QModelConfig::to_json() const {
  return json{{"kind", kind}, {"k", k}, {"linear", linear_config_to_json(linear)}};
}

namespace {

int argmax_tie0(double q0, double q1) { return q1 > q0 ? 1 : 0; }

}  // namespace

QModelConfig QModelConfig::from_json(const json& j) {
  QModelConfig c;
  c.kind = j.value("kind", c.kind);
  c.k = j.value("k", c.k);
  if (j.contains("linear")) c.linear = linear_config_from_json(j.at("linear"));
  if (c.kind != "knn" && c.kind != "masked_linear") throw ConfigError("unknown Q model kind '" + c.kind + "'");
  if (c.k == 0) throw ConfigError("Q model k must be positive");
  return c;
}

FittedQ::FittedQ(std::array<PredictorPtr, kNumActions> arms, std::array<std::vector<long>, kNumActions> row_maps)
    : arms_(std::move(arms)), row_maps_(std::move(row_maps)) {
  for (const auto& a : arms_)
    if (!a || a->task() != TaskKind::kRegression) throw Error("Q arms must be regression predictors");
}

double FittedQ::q(const ObservationState& state, int action, const RowExclusion& exclude) const {
  if (action < 0 || action >= kNumActions) throw Error("action out of range");
  const auto a = static_cast<std::size_t>(action);
  RowExclusion mapped;
  // Exclusions name rows of the fitting data; translate to this arm's rows.
  const auto& map = row_maps_[a];
  for (std::size_t t = 0; t < exclude.count(); ++t) {
    const std::size_t r = exclude[t];
    if (r < map.size() && map[r] >= 0) mapped.add(static_cast<std::size_t>(map[r]));
  }
  return arms_[a]->predict(state.input(), mapped).value;
}

std::shared_ptr<FittedQ> fit_q(const DecisionProblem& data, const QModelConfig& config) {
  std::array<PredictorPtr, kNumActions> arms;
  std::array<std::vector<long>, kNumActions> maps;
  for (int a = 0; a < kNumActions; ++a) {
    Dataset arm;
    arm.features = Matrix(0, data.dim());
    arm.task = TaskKind::kRegression;
    arm.feature_names = data.feature_names;
    arm.standardization = data.standardization;
    auto& map = maps[static_cast<std::size_t>(a)];
    map.assign(data.size(), -1);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.action[i] != a) continue;
      map[i] = static_cast<long>(arm.features.rows());
      arm.features.append_row(data.x_std.row(i));
      arm.labels.push_back(data.outcome[i]);
    }
    if (arm.size() == 0) throw Error("fit_q: action " + std::to_string(a) + " never appears in the data");
    if (config.kind == "knn") {
      const std::size_t k = std::min(config.k, arm.size());
      arms[static_cast<std::size_t>(a)] =
          std::make_shared<KnnPredictor>(std::make_shared<const Dataset>(std::move(arm)), k);
    } else {
      MaskedLinearConfig lc = config.linear;
      lc.masks = MaskDistribution::kUniformDensity;
      lc.seed = mix_seed(lc.seed, static_cast<std::uint64_t>(a));
      arms[static_cast<std::size_t>(a)] = train_masked_linear(arm, lc);
    }
  }
  return std::make_shared<FittedQ>(std::move(arms), std::move(maps));
}

namespace {

// Region of x0 as used by the bracket: 0..3, or -1 on the measure-zero gaps.
int decision_region(double x0) {
  if (x0 > 0.0 && x0 <= 0.25) return 0;
  if (x0 > 0.25 && x0 <= 0.5) return 1;
  if (x0 > 0.5 && x0 < 0.75) return 2;
  if (x0 > 0.75 && x0 < 1.0) return 3;
  return -1;
}

}  // namespace

double ExactDecisionQ::q(const ObservationState& state, int action, const RowExclusion&) const {
  if (action < 0 || action >= kNumActions) throw Error("action out of range");
  if (state.dim() != 4) throw Error("exact decision Q needs the four environment features");
  if (action == 0) return 0.0;
  std::array<std::optional<double>, 4> x;
  for (std::size_t t = 0; t < state.size(); ++t)
    x[static_cast<std::size_t>(state.observed()[t])] = state.raw_values()[t];

  const double e_x1 = x[1].value_or(0.0);
  const double e_x2 = x[2] ? *x[2] : (x[3] ? rho_ * *x[3] : 0.0);
  double e_x3sq_m1 = 0.0;
  if (x[3]) e_x3sq_m1 = *x[3] * *x[3] - 1.0;
  else if (x[2]) e_x3sq_m1 = rho_ * rho_ * (*x[2] * *x[2] - 1.0);
  const std::array<double, 4> terms{1.0, e_x1, e_x1 * e_x2, e_x1 * e_x3sq_m1};

  if (!x[0]) return 0.25 * (terms[0] + terms[1] + terms[2] + terms[3]);
  const int r = decision_region(*x[0]);
  return r < 0 ? 0.0 : terms[static_cast<std::size_t>(r)];
}

std::vector<std::array<double, kNumActions>> full_q_table(const QFunction& q, const DecisionProblem& data,
                                                          bool leave_one_out) {
  if (q.dim() != data.dim()) throw Error("Q model dimension mismatch");
  std::vector<std::array<double, kNumActions>> out(data.size());
  parallel_for(data.size(), 0, [&](std::size_t i) {
    const auto s = data.full_state(i);
    const RowExclusion ex = leave_one_out ? RowExclusion(i) : RowExclusion();
    for (int a = 0; a < kNumActions; ++a) out[i][static_cast<std::size_t>(a)] = q.q(s, a, ex);
  });
  return out;
}

// ---------------------------------------------------------------------------

int PlugInPolicy::act(const ObservationState& state, const RowExclusion& exclude) const {
  return argmax_tie0(q_->q(state, 0, exclude), q_->q(state, 1, exclude));
}

DecisionPolicyPtr full_policy(QPtr q) {
  if (!q) throw Error("full_policy needs a Q model");
  return std::make_shared<PlugInPolicy>(std::move(q));
}

std::vector<std::array<double, kNumActions>> regret_costs(const std::vector<std::array<double, kNumActions>>& q_full) {
  std::vector<std::array<double, kNumActions>> out(q_full.size());
  for (std::size_t i = 0; i < q_full.size(); ++i) {
    const double best = std::max(q_full[i][0], q_full[i][1]);
    out[i] = {best - q_full[i][0], best - q_full[i][1]};
  }
  return out;
}

WeightedKnnPolicy::WeightedKnnPolicy(std::shared_ptr<const NeighborIndex> index,
                                     std::vector<std::array<double, kNumActions>> costs, std::size_t k)
    : index_(std::move(index)), costs_(std::move(costs)), k_(k) {
  if (!index_ || index_->size() != costs_.size()) throw Error("weighted k-NN policy: index and costs disagree");
  if (k_ == 0) throw ConfigError("weighted k-NN policy needs k > 0");
  for (const auto& c : costs_) {
    mean_cost_[0] += c[0];
    mean_cost_[1] += c[1];
  }
}

int WeightedKnnPolicy::act(const ObservationState& state, const RowExclusion& exclude) const {
  if (state.size() == 0) return argmax_tie0(-mean_cost_[0], -mean_cost_[1]);
  const auto rows = index_->query(state.observed(), state.std_values(), k_, exclude);
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t r : rows) {
    c0 += costs_[r][0];
    c1 += costs_[r][1];
  }
  return c1 < c0 ? 1 : 0;
}

WeightedLinearPolicyTable::WeightedLinearPolicyTable(std::shared_ptr<const DecisionProblem> data,
                                                     std::vector<std::array<double, kNumActions>> costs,
                                                     MaskedLinearConfig config)
    : data_(std::move(data)), costs_(std::move(costs)), config_(config) {
  if (!data_ || data_->size() != costs_.size()) throw Error("weighted linear policy: data and costs disagree");
}

const WeightedLinearPolicyTable::Entry& WeightedLinearPolicyTable::entry_for(const FeatureSet& o) const {
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(o); it != cache_.end()) entry = it->second;
  }
  if (!entry) {
    std::unique_lock lock(mutex_);
    auto& slot = cache_[o];
    if (!slot) slot = std::make_shared<Entry>();
    entry = slot;
  }
  std::call_once(entry->once, [&] {
    ++runs_;
    const std::size_t n = data_->size(), d = data_->dim();
    std::vector<double> labels(n), weights(n);
    double total = 0.0, for_one = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = costs_[i][1] < costs_[i][0] ? 1.0 : 0.0;
      weights[i] = std::abs(costs_[i][0] - costs_[i][1]);
      total += weights[i];
      for_one += labels[i] * weights[i];
    }
    if (o.empty() || for_one == 0.0 || for_one == total) {
      entry->constant = 2.0 * for_one > total ? 1 : 0;
      return;
    }
    MaskedLinearModel model(d, kNumActions, TaskKind::kClassification);
    MaskedLinearConfig lc = config_;
    lc.masks = MaskDistribution::kFull;
    ExampleSource source = [&](std::size_t i, Rng&, MaskedInput& out) {
      out = MaskedInput(d);
      for (int j : o) out.set(j, data_->x_std(i, static_cast<std::size_t>(j)));
    };
    fit_masked_linear(model, n, source, labels, lc, weights);
    entry->model = std::move(model);
  });
  return *entry;
}

int WeightedLinearPolicyTable::act(const ObservationState& state, const RowExclusion&) const {
  const Entry& e = entry_for(state.observed_set());
  if (!e.model) return e.constant;
  std::vector<double> s;
  e.model->scores(state.input(), s);
  return argmax_tie0(s[0], s[1]);
}

json PartialPolicyConfig::to_json() const {
  return json{{"kind", kind}, {"k", k}, {"linear", linear_config_to_json(linear)}};
}

PartialPolicyConfig PartialPolicyConfig::from_json(const json& j) {
  PartialPolicyConfig c;
  c.kind = j.value("kind", c.kind);
  c.k = j.value("k", c.k);
  if (j.contains("linear")) c.linear = linear_config_from_json(j.at("linear"));
  if (c.kind != "weighted_knn" && c.kind != "weighted_linear" && c.kind != "plugin")
    throw ConfigError("unknown partial policy kind '" + c.kind + "'");
  if (c.k == 0) throw ConfigError("partial policy k must be positive");
  return c;
}

DecisionPolicyPtr fit_partial_policy(std::shared_ptr<const DecisionProblem> data, QPtr q,
                                     const PartialPolicyConfig& config, std::shared_ptr<const NeighborIndex> index) {
  if (!data || !q) throw Error("fit_partial_policy: missing data or Q model");
  if (config.kind == "plugin") return std::make_shared<PlugInPolicy>(std::move(q));
  auto costs = regret_costs(full_q_table(*q, *data, true));
  if (config.kind == "weighted_linear")
    return std::make_shared<WeightedLinearPolicyTable>(std::move(data), std::move(costs), config.linear);
  if (!index) index = std::make_shared<NeighborIndex>(data->x_std);
  return std::make_shared<WeightedKnnPolicy>(std::move(index), std::move(costs), config.k);
}

// ---------------------------------------------------------------------------

double decision_objective_knn(const DecisionProblem& data, const NeighborIndex& index,
                              const std::vector<std::array<double, kNumActions>>& q_full,
                              const DecisionPolicy& policy, const ObservationState& state, const FeatureSet& v,
                              std::size_t k, const RowExclusion& exclude, double alpha, const CostModel& cost,
                              DecisionObjective objective) {
  if (q_full.size() != data.size()) throw Error("Q table does not match the data");
  for (int j : v)
    if (state.has(j)) throw Error("candidate overlaps the observed set");
  const auto rows = index.query(state.observed(), state.std_values(), k, exclude);
  if (rows.empty()) throw Error("no neighbors available");
  double total = 0.0;
  for (std::size_t i : rows) {
    ObservationState composite = state;
    for (int j : v) {
      const auto u = static_cast<std::size_t>(j);
      composite.add(j, data.raw(i, u), data.x_std(i, u));
    }
    const int a = policy.act(composite, exclude.with(i));
    const double qa = q_full[i][static_cast<std::size_t>(a)];
    total += objective == DecisionObjective::kRegret ? std::max(q_full[i][0], q_full[i][1]) - qa : -qa;
  }
  FeatureSet all = state.observed_set().united(v);
  return total / static_cast<double>(rows.size()) + alpha * cost.cost(all);
}

DecisionAacoPolicy::DecisionAacoPolicy(std::shared_ptr<const DecisionProblem> data,
                                       std::shared_ptr<const NeighborIndex> index,
                                       std::vector<std::array<double, kNumActions>> q_full, DecisionPolicyPtr policy,
                                       CostModel cost, AacoConfig config, DecisionObjective objective)
    : data_(std::move(data)),
      index_(std::move(index)),
      q_full_(std::move(q_full)),
      policy_(std::move(policy)),
      cost_(std::move(cost)),
      config_(config),
      objective_(objective) {
  if (!data_ || !index_ || !policy_) throw Error("decision AACO: missing component");
  config_.validate(data_->dim());
  if (q_full_.size() != data_->size() || index_->size() != data_->size())
    throw Error("decision AACO: table sizes disagree");
  if (cost_.dim() != data_->dim()) throw Error("decision AACO: cost model dimension mismatch");
}

Selection DecisionAacoPolicy::select(const ObservationState& state, StepContext& ctx) const {
  const RowExclusion exclude(ctx.self_row);
  const FeatureSet o = state.observed_set();
  std::vector<FeatureSet> candidates;
  if (config_.singletons_only) {
    candidates = singleton_candidates(data_->dim(), o);
  } else {
    if (!ctx.rng) throw Error("decision AACO needs a random stream");
    candidates = sample_candidates(data_->dim(), o, config_.candidate_budget, *ctx.rng);
  }
  return select_subset(
      std::move(candidates),
      [&](const FeatureSet& v) {
        return decision_objective_knn(*data_, *index_, q_full_, *policy_, state, v, config_.k, exclude, 0.0, cost_,
                                      objective_);
      },
      config_.alpha, cost_, o);
}

Decision DecisionAacoPolicy::decide(const ObservationState& state, StepContext& ctx) const {
  if (state.full()) return Decision{Action::terminate(), {}, std::numeric_limits<double>::quiet_NaN()};
  if (state.size() == 0 && config_.initial.kind == InitialFeatureRule::Kind::kFixed) {
    const int j = config_.initial.feature;
    return Decision{Action::acquire(j), FeatureSet{j}, std::numeric_limits<double>::quiet_NaN()};
  }
  const Selection sel = select(state, ctx);
  Action a = Action::terminate();
  if (sel.chosen.size() == 1) {
    a = Action::acquire(sel.chosen[0]);
  } else if (!sel.chosen.empty()) {
    if (config_.tie_break == TieBreak::kBestSingle) {
      a = Action::acquire(best_single(sel, sel.chosen));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, sel.chosen.size() - 1);
      a = Action::acquire(sel.chosen[pick(*ctx.rng)]);
    }
  }
  return Decision{a, sel.chosen, sel.objective};
}

DecisionOutcome decision_rollout(const Policy& acquisition, const DecisionPolicy& policy, const DecisionProblem& data,
                                 std::size_t i, const CostModel& cost, const RolloutOptions& options,
                                 std::optional<std::size_t> train_row) {
  const RevealFn reveal = [&](int j, const Decision&, const ObservationState&) {
    const auto u = static_cast<std::size_t>(j);
    return std::optional<std::pair<double, double>>(std::in_place, data.raw(i, u), data.x_std(i, u));
  };
  const NextFn next = [&](const ObservationState& s, StepContext& ctx) { return acquisition.decide(s, ctx); };
  DecisionOutcome out;
  out.trace = rollout_core(next, reveal, data.dim(), i, train_row, std::nullopt, nullptr, cost, options);
  const ObservationState final_state = data.state(i, FeatureSet(out.trace.acquired));
  out.action = policy.act(final_state, RowExclusion(train_row));
  return out;
}

std::vector<DecisionOutcome> decision_rollouts(const Policy& acquisition, const DecisionPolicy& policy,
                                               const DecisionProblem& data, const CostModel& cost,
                                               const RolloutOptions& options, std::size_t threads) {
  std::vector<DecisionOutcome> out(data.size());
  parallel_for(data.size(), threads,
               [&](std::size_t i) { out[i] = decision_rollout(acquisition, policy, data, i, cost, options); });
  return out;
}

std::vector<int> fixed_subset_actions(const DecisionPolicy& policy, const DecisionProblem& data, const FeatureSet& o,
                                      bool leave_one_out) {
  for (int j : o)
    if (j < 0 || static_cast<std::size_t>(j) >= data.dim()) throw Error("subset feature out of range");
  std::vector<int> out(data.size());
  parallel_for(data.size(), 0, [&](std::size_t i) {
    out[i] = policy.act(data.state(i, o), leave_one_out ? RowExclusion(i) : RowExclusion());
  });
  return out;
}

double estimate_value(std::span<const int> actions, const std::vector<std::array<double, kNumActions>>& q_full) {
  if (actions.size() != q_full.size()) throw Error("estimate_value: size mismatch");
  if (actions.empty()) throw Error("estimate_value over zero rows");
  double total = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0 || actions[i] >= kNumActions) throw Error("action out of range");
    total += q_full[i][static_cast<std::size_t>(actions[i])];
  }
  return total / static_cast<double>(actions.size());
}

double estimate_value(const DecisionPolicy& policy, const DecisionProblem& data, const QFunction& q,
                      const FeatureSet& o) {
  return estimate_value(fixed_subset_actions(policy, data, o), full_q_table(q, data, false));
}

double agreement(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("agreement: size mismatch");
  if (a.empty()) throw Error("agreement over zero rows");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double optimal_rate(std::span<const int> actions, const std::vector<DecisionGroundTruth>& truth) {
  if (actions.size() != truth.size()) throw Error("optimal_rate: size mismatch");
  if (actions.empty()) throw Error("optimal_rate over zero rows");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) hits += actions[i] == truth[i].optimal_action;
  return static_cast<double>(hits) / static_cast<double>(actions.size());
}

FeatureSet feature_selection_baseline(const DecisionPolicy& policy, const DecisionProblem& data,
                                      const std::vector<std::array<double, kNumActions>>& q_full, std::size_t budget,
                                      bool leave_one_out) {
  budget = std::min(budget, data.dim());
  FeatureSet chosen;
  while (chosen.size() < budget) {
    int best = -1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < static_cast<int>(data.dim()); ++j) {
      if (chosen.contains(j)) continue;
      FeatureSet trial = chosen;
      trial.insert(j);
      const double value = estimate_value(fixed_subset_actions(policy, data, trial, leave_one_out), q_full);
      if (value > best_value) {
        best_value = value;
        best = j;
      }
    }
    chosen.insert(best);
  }
  return chosen;
}

DecisionDataset load_bandit_csv(const std::filesystem::path& path, const BanditSchema& schema) {
  const NumericTable table = read_numeric_csv(path);
  const std::size_t a_col = table.column(schema.action_column);
  const std::size_t r_col = table.column(schema.reward_column);
  std::vector<std::size_t> ctx_cols;
  std::vector<std::string> names;
  if (schema.context_columns.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == a_col || c == r_col) continue;
      ctx_cols.push_back(c);
      names.push_back(table.header[c]);
    }
  } else {
    for (const auto& name : schema.context_columns) {
      const std::size_t c = table.column(name);
      if (c == a_col || c == r_col) throw ConfigError("context column '" + name + "' is the action or reward");
      ctx_cols.push_back(c);
      names.push_back(name);
    }
  }
  if (ctx_cols.empty()) throw ConfigError(path.string() + ": no context columns");
  DecisionDataset out;
  out.features = Matrix(0, ctx_cols.size());
  out.feature_names = std::move(names);
  std::vector<double> row(ctx_cols.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const double a = cells[a_col];
    if (a != 0.0 && a != 1.0)
      throw ConfigError(path.string() + " row " + std::to_string(r + 1) + ": action must be 0 or 1");
    for (std::size_t t = 0; t < ctx_cols.size(); ++t) row[t] = cells[ctx_cols[t]];
    out.features.append_row(row);
    out.action.push_back(static_cast<int>(a));
    out.outcome.push_back(cells[r_col]);
  }
  if (out.size() == 0) throw ConfigError(path.string() + ": no rows");
  return out;
}

void write_bandit_csv(const DecisionDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  auto names = data.feature_names.empty() ? default_feature_names(data.dim()) : data.feature_names;
  for (const auto& name : names) out << name << ',';
  out << "action,reward\n";
  char buf[40];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.outcome[i]);
    out << data.action[i] << ',' << buf << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

void DecisionEnvSampler::sample_raw(const ObservationState& state, Rng& rng, std::array<double, 4>& x) const {
  if (state.dim() != 4) throw Error("decision sampler needs the four environment features");
  std::array<bool, 4> seen{};
  for (std::size_t t = 0; t < state.size(); ++t) {
    const auto j = static_cast<std::size_t>(state.observed()[t]);
    seen[j] = true;
    x[j] = state.raw_values()[t];
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = config_.correlation;
  const double rho_c = std::sqrt(1.0 - rho * rho);
  if (!seen[0]) x[0] = unit(rng);
  if (!seen[1]) x[1] = unit(rng) < 0.5 ? 1.0 : -1.0;
  if (!seen[2] && !seen[3]) {
    x[2] = normal(rng);
    x[3] = rho * x[2] + rho_c * normal(rng);
  } else if (!seen[2]) {
    x[2] = rho * x[3] + rho_c * normal(rng);
  } else if (!seen[3]) {
    x[3] = rho * x[2] + rho_c * normal(rng);
  }
}

void DecisionEnvSampler::sample(const ObservationState& state, Rng& rng, std::vector<double>& x_std,
                                double& y) const {
  std::array<double, 4> x{};
  sample_raw(state, rng, x);
  x_std.resize(4);
  for (std::size_t j = 0; j < 4; ++j) x_std[j] = standardization_.apply(j, x[j]);
  std::normal_distribution<double> normal(0.0, config_.outcome_noise_sd);
  y = decision_bracket(x) + normal(rng);
}

}  // namespace afa
