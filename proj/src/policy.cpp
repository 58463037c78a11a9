#include "afa/policy.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace afa {

using nlohmann::json;

void ObservationState::add(int j, double raw, double standardized) {
  if (j < 0 || static_cast<std::size_t>(j) >= d_)
    throw Error("feature index " + std::to_string(j) + " out of range [0, " + std::to_string(d_) + ")");
  auto it = std::lower_bound(o_.begin(), o_.end(), j);
  if (it != o_.end() && *it == j) throw Error("feature " + std::to_string(j) + " is already acquired");
  const auto pos = it - o_.begin();
  o_.insert(it, j);
  raw_.insert(raw_.begin() + pos, raw);
  std_.insert(std_.begin() + pos, standardized);
}

CostModel::CostModel(std::vector<double> per_feature) : per_feature_(std::move(per_feature)) {
  for (double c : per_feature_)
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("per-feature costs must be positive and finite");
}

double CostModel::cost(std::span<const int> subset) const {
  double total = 0.0;
  for (int j : subset) total += per_feature_.at(static_cast<std::size_t>(j));
  return total;
}

double CostModel::min_cost() const {
  if (per_feature_.empty()) throw Error("empty cost model");
  return *std::min_element(per_feature_.begin(), per_feature_.end());
}

CostModel CostModel::scaled(double lambda) const {
  std::vector<double> out = per_feature_;
  for (double& c : out) c *= lambda;
  return CostModel(std::move(out));
}

void AacoConfig::validate(std::size_t d) const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a nonnegative finite number");
  if (k == 0) throw ConfigError("k must be at least 1");
  if (!singletons_only && candidate_budget < d + 1)
    throw ConfigError("candidate_budget must be at least d+1 = " + std::to_string(d + 1));
  if (initial.kind == InitialFeatureRule::Kind::kFixed &&
      (initial.feature < 0 || static_cast<std::size_t>(initial.feature) >= d))
    throw ConfigError("initial feature " + std::to_string(initial.feature) + " out of range");
}

json to_json(const AacoConfig& c) {
  json initial;
  switch (c.initial.kind) {
    case InitialFeatureRule::Kind::kFixed: initial = {{"kind", "fixed"}, {"feature", c.initial.feature}}; break;
    case InitialFeatureRule::Kind::kGlobalArgmin:
      initial = {{"kind", "global_argmin"}, {"max_rows", c.initial.max_rows}};
      break;
    case InitialFeatureRule::Kind::kEmptyNeighborFallback: initial = {{"kind", "empty_neighbor_fallback"}}; break;
  }
  return json{{"alpha", c.alpha},
              {"k", c.k},
              {"candidate_budget", c.candidate_budget},
              {"tie_break", c.tie_break == TieBreak::kBestSingle ? "best_single" : "uniform"},
              {"initial_feature", initial},
              {"loss", to_string(c.loss)},
              {"seed", c.seed},
              {"leave_neighbor_out", c.leave_neighbor_out},
              {"singletons_only", c.singletons_only}};
}

AacoConfig aaco_config_from_json(const json& j) {
  AacoConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.k = j.value("k", c.k);
  c.candidate_budget = j.value("candidate_budget", c.candidate_budget);
  const std::string tie = j.value("tie_break", std::string("best_single"));
  if (tie == "best_single") c.tie_break = TieBreak::kBestSingle;
  else if (tie == "uniform") c.tie_break = TieBreak::kUniform;
  else throw ConfigError("unknown tie_break '" + tie + "'");
  if (j.contains("initial_feature")) {
    const auto& init = j.at("initial_feature");
    if (init.is_number_integer()) {
      c.initial = InitialFeatureRule::fixed(init.get<int>());
    } else {
      const std::string kind = init.value("kind", std::string("empty_neighbor_fallback"));
      if (kind == "fixed") c.initial = InitialFeatureRule::fixed(init.at("feature").get<int>());
      else if (kind == "global_argmin") c.initial = InitialFeatureRule::global_argmin(init.value("max_rows", 0u));
      else if (kind == "empty_neighbor_fallback") c.initial = InitialFeatureRule::empty_neighbor_fallback();
      else throw ConfigError("unknown initial_feature kind '" + kind + "'");
    }
  }
  if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.leave_neighbor_out = j.value("leave_neighbor_out", c.leave_neighbor_out);
  c.singletons_only = j.value("singletons_only", c.singletons_only);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> complement(std::size_t d, const FeatureSet& o) {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(d); ++j)
    if (!o.contains(j)) out.push_back(j);
  return out;
}

}  // namespace

std::vector<FeatureSet> singleton_candidates(std::size_t d, const FeatureSet& o) {
  std::vector<FeatureSet> out{FeatureSet{}};
  for (int j : complement(d, o)) out.push_back(FeatureSet{j});
  return out;
}

std::vector<FeatureSet> power_set_candidates(std::size_t d, const FeatureSet& o) {
  const auto rest = complement(d, o);
  if (rest.size() > 24) throw Error("power set of " + std::to_string(rest.size()) + " features is too large");
  std::vector<FeatureSet> out;
  out.reserve(std::size_t{1} << rest.size());
  for (std::uint32_t bits = 0; bits < (1u << rest.size()); ++bits) {
    std::vector<int> items;
    for (std::size_t t = 0; t < rest.size(); ++t)
      if (bits & (1u << t)) items.push_back(rest[t]);
    out.emplace_back(std::move(items));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FeatureSet> sample_candidates(std::size_t d, const FeatureSet& o, std::size_t budget, Rng& rng) {
  auto rest = complement(d, o);
  const std::size_t m = rest.size();
  if (budget < m + 1)
    throw ConfigError("candidate budget " + std::to_string(budget) + " below the " + std::to_string(m + 1) +
                      " required for the empty set and all singletons");
  if (m < 24 && (std::size_t{1} << m) <= budget) return power_set_candidates(d, o);

  std::unordered_set<FeatureSet, FeatureSetHash> seen;
  std::vector<FeatureSet> out = singleton_candidates(d, o);
  seen.insert(out.begin(), out.end());
  std::uniform_int_distribution<std::size_t> size_dist(2, m);
  const std::size_t max_attempts = 1000 * budget;
  for (std::size_t attempt = 0; out.size() < budget && attempt < max_attempts; ++attempt) {
    const std::size_t s = size_dist(rng);
    for (std::size_t t = 0; t < s; ++t) {
      std::uniform_int_distribution<std::size_t> pick(t, m - 1);
      std::swap(rest[t], rest[pick(rng)]);
    }
    FeatureSet v(std::vector<int>(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(s)));
    if (seen.insert(v).second) out.push_back(std::move(v));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double Selection::singleton_loss(int j) const {
  const FeatureSet key{j};
  auto it = std::lower_bound(candidates.begin(), candidates.end(), key);
  if (it == candidates.end() || !(*it == key)) throw Error("singleton {" + std::to_string(j) + "} was not scored");
  return losses[static_cast<std::size_t>(it - candidates.begin())];
}

Selection select_subset(std::vector<FeatureSet> candidates, const std::function<double(const FeatureSet&)>& loss_of,
                        double alpha, const CostModel& cost, const FeatureSet& o) {
  if (candidates.empty()) throw Error("no candidate subsets");
  std::sort(candidates.begin(), candidates.end());
  Selection sel;
  sel.losses.reserve(candidates.size());
  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double l = loss_of(candidates[c]);
    sel.losses.push_back(l);
    const double value = l + alpha * cost.cost(candidates[c]);
    if (value < best_value) {
      best_value = value;
      best = c;
    }
  }
  sel.candidates = std::move(candidates);
  sel.chosen = sel.candidates[best];
  sel.expected_loss = sel.losses[best];
  sel.objective = sel.expected_loss + alpha * cost.cost(o.united(sel.chosen));
  return sel;
}

int best_single(const Selection& sel, const FeatureSet& u) {
  if (u.empty()) throw Error("best_single on an empty subset");
  int best = u[0];
  double best_loss = sel.singleton_loss(best);
  for (std::size_t t = 1; t < u.size(); ++t) {
    const double l = sel.singleton_loss(u[t]);
    if (l < best_loss) {
      best_loss = l;
      best = u[t];
    }
  }
  return best;
}

namespace {

Action tie_break_action(const Selection& sel, TieBreak mode, Rng* rng) {
  if (sel.chosen.empty()) return Action::terminate();
  if (sel.chosen.size() == 1) return Action::acquire(sel.chosen[0]);
  if (mode == TieBreak::kBestSingle) return Action::acquire(best_single(sel, sel.chosen));
  if (!rng) throw Error("uniform tie-break needs a random stream");
  std::uniform_int_distribution<std::size_t> pick(0, sel.chosen.size() - 1);
  return Action::acquire(sel.chosen[pick(*rng)]);
}

}  // namespace

// ---------------------------------------------------------------------------

double expected_loss_knn(const Dataset& train, const Predictor& predictor, const ObservationState& state,
                         std::span<const std::size_t> neighbor_rows, const FeatureSet& v, LossKind loss_kind,
                         const RowExclusion& exclude, bool leave_neighbor_out) {
  if (neighbor_rows.empty()) throw Error("expected loss over an empty neighbor set");
  MaskedInput input = state.input();
  double total = 0.0;
  for (std::size_t i : neighbor_rows) {
    const auto row = train.features.row(i);
    for (int j : v) {
      if (input.is_observed(j)) throw Error("candidate feature " + std::to_string(j) + " is already observed");
      input.set(j, row[static_cast<std::size_t>(j)]);
    }
    const Prediction pred = predictor.predict(input, leave_neighbor_out ? exclude.with(i) : exclude);
    total += loss(pred, train.labels[i], loss_kind);
    for (int j : v) input.clear(j);
  }
  return total / static_cast<double>(neighbor_rows.size());
}

double expected_loss_knn(const NeighborIndex& index, const Dataset& train, const Predictor& predictor,
                         const ObservationState& state, const FeatureSet& v, std::size_t k, LossKind loss_kind,
                         const RowExclusion& exclude, bool leave_neighbor_out) {
  const auto rows = index.query(state.observed(), state.std_values(), k, exclude);
  return expected_loss_knn(train, predictor, state, rows, v, loss_kind, exclude, leave_neighbor_out);
}

AacoPolicy::AacoPolicy(std::shared_ptr<const Dataset> train, std::shared_ptr<const NeighborIndex> index,
                       PredictorPtr predictor, CostModel cost, AacoConfig config)
    : train_(std::move(train)),
      index_(std::move(index)),
      predictor_(std::move(predictor)),
      cost_(std::move(cost)),
      config_(config) {
  if (!train_ || !index_ || !predictor_) throw Error("AacoPolicy: missing component");
  const std::size_t d = train_->dim();
  config_.validate(d);
  if (index_->size() != train_->size() || index_->dim() != d) throw Error("AacoPolicy: index does not match data");
  if (predictor_->num_features() != d) throw Error("AacoPolicy: predictor dimension mismatch");
  if (cost_.dim() != d) throw Error("AacoPolicy: cost model dimension mismatch");
}

Selection AacoPolicy::select(const ObservationState& state, StepContext& ctx) const {
  const RowExclusion exclude(ctx.self_row);
  const auto rows = index_->query(state.observed(), state.std_values(), config_.k, exclude);
  const FeatureSet o = state.observed_set();
  std::vector<FeatureSet> candidates;
  if (config_.singletons_only) {
    candidates = singleton_candidates(train_->dim(), o);
  } else {
    if (!ctx.rng) throw Error("AACO search needs a random stream");
    candidates = sample_candidates(train_->dim(), o, config_.candidate_budget, *ctx.rng);
  }
  return select_subset(
      std::move(candidates),
      [&](const FeatureSet& v) {
        return expected_loss_knn(*train_, *predictor_, state, rows, v, config_.loss, exclude,
                                 config_.leave_neighbor_out);
      },
      config_.alpha, cost_, o);
}

Action AacoPolicy::step(const Selection& sel, StepContext& ctx) const {
  return tie_break_action(sel, config_.tie_break, ctx.rng);
}

const Decision& AacoPolicy::global_initial() const {
  std::call_once(initial_once_, [&] {
    std::size_t n = train_->size();
    if (config_.initial.max_rows) n = std::min(n, config_.initial.max_rows);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng rng = make_rng(config_.seed, 0x61A0);
    const ObservationState empty(train_->dim());
    auto candidates = config_.singletons_only
                          ? singleton_candidates(train_->dim(), {})
                          : sample_candidates(train_->dim(), {}, config_.candidate_budget, rng);
    const Selection sel = select_subset(
        std::move(candidates),
        [&](const FeatureSet& v) {
          return expected_loss_knn(*train_, *predictor_, empty, rows, v, config_.loss, {}, true);
        },
        config_.alpha, cost_, {});
    initial_ = Decision{tie_break_action(sel, config_.tie_break, &rng), sel.chosen, sel.objective};
  });
  return initial_;
}

Decision AacoPolicy::decide(const ObservationState& state, StepContext& ctx) const {
  if (state.full()) return Decision{Action::terminate(), {}, std::numeric_limits<double>::quiet_NaN()};
  if (state.size() == 0) {
    switch (config_.initial.kind) {
      case InitialFeatureRule::Kind::kFixed: {
        const int j = config_.initial.feature;
        return Decision{Action::acquire(j), FeatureSet{j}, std::numeric_limits<double>::quiet_NaN()};
      }
      case InitialFeatureRule::Kind::kGlobalArgmin: return global_initial();
      case InitialFeatureRule::Kind::kEmptyNeighborFallback: break;
    }
  }
  const Selection sel = select(state, ctx);
  return Decision{step(sel, ctx), sel.chosen, sel.objective};
}

Selection aaco_select(const AacoPolicy& policy, const ObservationState& state, StepContext& ctx) {
  if (state.full()) throw Error("aaco_select needs at least one unacquired feature");
  return policy.select(state, ctx);
}

Action aaco_step(const AacoPolicy& policy, const ObservationState& state, StepContext& ctx) {
  if (state.full()) throw Error("aaco_step needs at least one unacquired feature");
  return policy.step(policy.select(state, ctx), ctx);
}

Decision RandomPolicy::decide(const ObservationState& state, StepContext& ctx) const {
  if (state.size() >= std::min(budget_, state.dim())) return Decision{Action::terminate(), {}, {}};
  if (!ctx.rng) throw Error("random policy needs a random stream");
  const auto rest = complement(state.dim(), state.observed_set());
  std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
  const int j = rest[pick(*ctx.rng)];
  return Decision{Action::acquire(j), FeatureSet{j}, std::numeric_limits<double>::quiet_NaN()};
}

Decision FixedOrderPolicy::decide(const ObservationState& state, StepContext&) const {
  for (int j : order_)
    if (!state.has(j)) return Decision{Action::acquire(j), FeatureSet{j}, std::numeric_limits<double>::quiet_NaN()};
  return Decision{Action::terminate(), {}, std::numeric_limits<double>::quiet_NaN()};
}

// ---------------------------------------------------------------------------

namespace {

MaskedInput instance_input(std::span<const double> x_std, const FeatureSet& o) {
  MaskedInput in(x_std.size());
  for (int j : o) in.set(j, x_std[static_cast<std::size_t>(j)]);
  return in;
}

}  // namespace

int greedy_cheating_oracle(std::span<const double> x_std, double y, const FeatureSet& o, const Predictor& predictor,
                           LossKind loss_kind) {
  const auto rest = complement(x_std.size(), o);
  if (rest.empty()) throw Error("greedy oracle needs at least one unacquired feature");
  MaskedInput in = instance_input(x_std, o);
  int best = rest.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (int j : rest) {
    in.set(j, x_std[static_cast<std::size_t>(j)]);
    const double l = loss(predictor.predict(in), y, loss_kind);
    in.clear(j);
    if (l < best_loss) {
      best_loss = l;
      best = j;
    }
  }
  return best;
}

Selection nongreedy_cheating_oracle(std::span<const double> x_std, double y, const FeatureSet& o,
                                    const Predictor& predictor, LossKind loss_kind, double alpha,
                                    const CostModel& cost, std::vector<FeatureSet> candidates) {
  MaskedInput in = instance_input(x_std, o);
  return select_subset(
      std::move(candidates),
      [&](const FeatureSet& v) {
        for (int j : v) in.set(j, x_std[static_cast<std::size_t>(j)]);
        const double l = loss(predictor.predict(in), y, loss_kind);
        for (int j : v) in.clear(j);
        return l;
      },
      alpha, cost, o);
}

GreedyCheatingPolicy::GreedyCheatingPolicy(PredictorPtr predictor, CostModel cost, double alpha, LossKind loss,
                                           std::optional<int> initial_feature)
    : predictor_(std::move(predictor)), cost_(std::move(cost)), alpha_(alpha), loss_(loss), initial_(initial_feature) {}

Decision GreedyCheatingPolicy::decide(const ObservationState& state, std::span<const double> x_std, double y,
                                      StepContext&) const {
  if (state.full()) return Decision{Action::terminate(), {}, std::numeric_limits<double>::quiet_NaN()};
  if (state.size() == 0 && initial_)
    return Decision{Action::acquire(*initial_), FeatureSet{*initial_}, std::numeric_limits<double>::quiet_NaN()};
  const FeatureSet o = state.observed_set();
  const Selection sel = nongreedy_cheating_oracle(x_std, y, o, *predictor_, loss_, alpha_, cost_,
                                                  singleton_candidates(state.dim(), o));
  const Action a = sel.chosen.empty() ? Action::terminate() : Action::acquire(sel.chosen[0]);
  return Decision{a, sel.chosen, sel.objective};
}

NonGreedyCheatingPolicy::NonGreedyCheatingPolicy(PredictorPtr predictor, CostModel cost, double alpha, LossKind loss,
                                                 std::size_t candidate_budget, std::optional<int> initial_feature)
    : predictor_(std::move(predictor)),
      cost_(std::move(cost)),
      alpha_(alpha),
      loss_(loss),
      budget_(candidate_budget),
      initial_(initial_feature) {}

Decision NonGreedyCheatingPolicy::decide(const ObservationState& state, std::span<const double> x_std, double y,
                                         StepContext& ctx) const {
  if (state.full()) return Decision{Action::terminate(), {}, std::numeric_limits<double>::quiet_NaN()};
  if (state.size() == 0 && initial_)
    return Decision{Action::acquire(*initial_), FeatureSet{*initial_}, std::numeric_limits<double>::quiet_NaN()};
  if (!ctx.rng) throw Error("non-greedy oracle needs a random stream");
  const FeatureSet o = state.observed_set();
  const Selection sel = nongreedy_cheating_oracle(x_std, y, o, *predictor_, loss_, alpha_, cost_,
                                                  sample_candidates(state.dim(), o, budget_, *ctx.rng));
  return Decision{tie_break_action(sel, TieBreak::kBestSingle, ctx.rng), sel.chosen, sel.objective};
}

// ---------------------------------------------------------------------------

void CubeSampler::sample(const ObservationState& state, Rng& rng, std::vector<double>& x_std, double& y) const {
  if (state.dim() != kCubeDim) throw Error("cube sampler: state dimension mismatch");
  const auto post = truth_->posterior(state.observed(), state.raw_values());
  std::discrete_distribution<int> category(post.begin(), post.end());
  const int c = category(rng);
  std::normal_distribution<double> normal(0.0, truth_->sigma());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  x_std.assign(kCubeDim, 0.0);
  for (int j = 0; j < kCubeDim; ++j) {
    double raw;
    if (j >= c && j <= c + 2)
      raw = truth_->means()[static_cast<std::size_t>(c)][static_cast<std::size_t>(j - c)] + normal(rng);
    else
      raw = unit(rng);
    x_std[static_cast<std::size_t>(j)] = truth_->from_raw(j, raw);
  }
  for (std::size_t t = 0; t < state.size(); ++t)
    x_std[static_cast<std::size_t>(state.observed()[t])] = state.std_values()[t];
  y = c;
}

Selection exact_aco_select(const ConditionalSampler& sampler, const ObservationState& state,
                           const Predictor& predictor, const CostModel& cost, double alpha, std::size_t m,
                           std::vector<FeatureSet> candidates, Rng& rng, LossKind loss_kind) {
  if (m == 0) throw ConfigError("exact ACO needs at least one scenario");
  std::vector<std::vector<double>> xs(m);
  std::vector<double> ys(m);
  for (std::size_t s = 0; s < m; ++s) sampler.sample(state, rng, xs[s], ys[s]);
  MaskedInput in = state.input();
  return select_subset(
      std::move(candidates),
      [&](const FeatureSet& v) {
        double total = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
          for (int j : v) in.set(j, xs[s][static_cast<std::size_t>(j)]);
          total += loss(predictor.predict(in), ys[s], loss_kind);
          for (int j : v) in.clear(j);
        }
        return total / static_cast<double>(m);
      },
      alpha, cost, state.observed_set());
}

ExactAcoPolicy::ExactAcoPolicy(std::shared_ptr<const ConditionalSampler> sampler, PredictorPtr predictor,
                               CostModel cost, AacoConfig config, std::size_t m)
    : sampler_(std::move(sampler)), predictor_(std::move(predictor)), cost_(std::move(cost)), config_(config), m_(m) {
  config_.validate(predictor_->num_features());
}

Decision ExactAcoPolicy::decide(const ObservationState& state, StepContext& ctx) const {
  if (state.full()) return Decision{Action::terminate(), {}, std::numeric_limits<double>::quiet_NaN()};
  if (state.size() == 0 && config_.initial.kind == InitialFeatureRule::Kind::kFixed) {
    const int j = config_.initial.feature;
    return Decision{Action::acquire(j), FeatureSet{j}, std::numeric_limits<double>::quiet_NaN()};
  }
  if (!ctx.rng) throw Error("exact ACO needs a random stream");
  const FeatureSet o = state.observed_set();
  auto candidates = config_.singletons_only ? singleton_candidates(state.dim(), o)
                                            : sample_candidates(state.dim(), o, config_.candidate_budget, *ctx.rng);
  const Selection sel =
      exact_aco_select(*sampler_, state, *predictor_, cost_, config_.alpha, m_, std::move(candidates), *ctx.rng,
                       config_.loss);
  return Decision{tie_break_action(sel, config_.tie_break, ctx.rng), sel.chosen, sel.objective};
}

// ---------------------------------------------------------------------------

Episode make_episode(const Dataset& data, std::size_t i, std::vector<double>& raw_buffer,
                     std::optional<std::size_t> train_row) {
  const auto row = data.features.row(i);
  raw_buffer.resize(data.dim());
  for (std::size_t j = 0; j < data.dim(); ++j) raw_buffer[j] = data.raw_value(i, j);
  return Episode{i, raw_buffer, row, data.labels[i], train_row};
}

RollOutTrace rollout_core(const NextFn& next, const RevealFn& reveal, std::size_t d, std::size_t instance,
                          std::optional<std::size_t> train_row, std::optional<double> label,
                          const Predictor* predictor, const CostModel& cost, const RolloutOptions& options) {
  if (predictor && predictor->num_features() != d) throw Error("rollout: predictor dimension mismatch");
  const std::size_t max_steps = options.max_steps ? std::min(options.max_steps, d) : d;

  Rng rng = make_rng(options.seed, instance);
  StepContext ctx{train_row, &rng};
  ObservationState state(d);
  RollOutTrace trace;
  trace.instance = instance;
  trace.label = label;

  while (true) {
    TraceStep step;
    step.observed = state.observed();
    step.values = state.raw_values();
    Decision dec;
    if (state.size() >= max_steps) {
      dec.action = Action::terminate();
    } else {
      dec = next(state, ctx);
    }
    std::optional<std::pair<double, double>> value;
    if (!dec.action.is_terminate()) {
      const int j = dec.action.feature;
      if (j < 0 || static_cast<std::size_t>(j) >= d)
        throw Error("policy requested feature " + std::to_string(j) + " outside [0, " + std::to_string(d) + ")");
      if (state.has(j)) throw Error("policy requested already-acquired feature " + std::to_string(j));
      value = reveal(j, dec, state);
      if (!value) dec.action = Action::terminate();
    }
    step.action = dec.action;
    step.chosen = dec.chosen;
    step.objective = dec.objective;
    trace.steps.push_back(std::move(step));
    if (dec.action.is_terminate()) break;
    state.add(dec.action.feature, value->first, value->second);
    trace.acquired.push_back(dec.action.feature);
  }

  trace.cost = cost.cost(state.observed());
  if (!predictor) return trace;
  trace.prediction = predictor->predict(state.input(), RowExclusion(train_row));
  if (label) {
    trace.loss = loss(trace.prediction, *label, options.loss);
    trace.ret = -trace.loss - options.alpha * trace.cost;
  }
  return trace;
}

RollOutTrace rollout_with(const NextFn& next, const Episode& episode, const Predictor& predictor,
                          const CostModel& cost, const RolloutOptions& options) {
  const std::size_t d = episode.x_std.size();
  if (episode.x_raw.size() != d) throw Error("episode raw/standardized length mismatch");
  const RevealFn reveal = [&](int j, const Decision&, const ObservationState&) {
    const auto u = static_cast<std::size_t>(j);
    return std::optional<std::pair<double, double>>(std::in_place, episode.x_raw[u], episode.x_std[u]);
  };
  return rollout_core(next, reveal, d, episode.instance, episode.train_row, episode.label, &predictor, cost, options);
}

RollOutTrace rollout(const Policy& policy, const Episode& episode, const Predictor& predictor,
                     const CostModel& cost, const RolloutOptions& options) {
  return rollout_with([&](const ObservationState& s, StepContext& ctx) { return policy.decide(s, ctx); }, episode,
                      predictor, cost, options);
}

RollOutTrace rollout(const CheatingPolicy& policy, const Episode& episode, const Predictor& predictor,
                     const CostModel& cost, const RolloutOptions& options) {
  if (!episode.label) throw Error("cheating policies need the episode label");
  const double y = *episode.label;
  return rollout_with(
      [&](const ObservationState& s, StepContext& ctx) { return policy.decide(s, episode.x_std, y, ctx); }, episode,
      predictor, cost, options);
}

// ---------------------------------------------------------------------------

namespace {

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

json trace_to_json(const RollOutTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps) {
    steps.push_back(json{{"observed", s.observed},
                         {"values", s.values},
                         {"chosen", s.chosen.items()},
                         {"objective", number_or_null(s.objective)},
                         {"action", s.action.is_terminate() ? json("terminate") : json(s.action.feature)}});
  }
  json pred = t.prediction.task == TaskKind::kClassification ? json{{"probs", t.prediction.probs}}
                                                               : json{{"value", t.prediction.value}};
  return json{{"instance", t.instance},
              {"label", t.label ? json(*t.label) : json(nullptr)},
              {"steps", steps},
              {"prediction", pred},
              {"cost", t.cost},
              {"loss", number_or_null(t.loss)},
              {"return", number_or_null(t.ret)},
              {"acquired", t.acquired}};
}

RollOutTrace trace_from_json(const json& j) {
  RollOutTrace t;
  t.instance = j.at("instance").get<std::size_t>();
  if (!j.at("label").is_null()) t.label = j.at("label").get<double>();
  for (const auto& s : j.at("steps")) {
    TraceStep step;
    step.observed = s.at("observed").get<std::vector<int>>();
    step.values = s.at("values").get<std::vector<double>>();
    step.chosen = FeatureSet(s.at("chosen").get<std::vector<int>>());
    step.objective = number_or_nan(s.at("objective"));
    const auto& a = s.at("action");
    step.action = a.is_string() ? Action::terminate() : Action::acquire(a.get<int>());
    t.steps.push_back(std::move(step));
  }
  const auto& p = j.at("prediction");
  t.prediction = p.contains("probs") ? Prediction::classification(p.at("probs").get<std::vector<double>>())
                                     : Prediction::regression(p.at("value").get<double>());
  t.cost = j.at("cost").get<double>();
  t.loss = number_or_nan(j.at("loss"));
  t.ret = number_or_nan(j.at("return"));
  t.acquired = j.at("acquired").get<std::vector<int>>();
  return t;
}

void write_traces_jsonl(std::span<const RollOutTrace> traces, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

std::vector<RollOutTrace> read_traces_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<RollOutTrace> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(trace_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace afa
