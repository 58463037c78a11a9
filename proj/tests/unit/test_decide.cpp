#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "afa/decide.hpp"
#include "oracles.hpp"

using namespace afa;

namespace {

DecisionDataset env(std::size_t n, std::uint64_t seed, bool randomized = true) {
  DecisionEnvConfig c;
  c.n = n;
  c.seed = seed;
  c.randomized_treatment = randomized;
  return generate_decision_env(c);
}

DecisionDataset tiny(std::vector<std::array<double, 4>> rows, std::vector<int> actions) {
  DecisionDataset d;
  d.features = Matrix(0, 4);
  d.feature_names = {"x0", "x1", "x2", "x3"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.features.append_row(rows[i]);
    d.action.push_back(actions[i]);
    d.outcome.push_back(static_cast<double>(i));
  }
  return d;
}

class EqualQ : public QFunction {
 public:
  std::size_t dim() const override { return 4; }
  double q(const ObservationState&, int, const RowExclusion&) const override { return 0.7; }
  std::string kind() const override { return "equal"; }
};

// Acts 1 when x1 is observed and positive; records the exclusions it saw.
class SignPolicy : public DecisionPolicy {
 public:
  int act(const ObservationState& s, const RowExclusion& ex) const override {
    seen.push_back(ex);
    for (std::size_t t = 0; t < s.size(); ++t)
      if (s.observed()[t] == 1) return s.raw_values()[t] > 0 ? 1 : 0;
    return 0;
  }
  std::string name() const override { return "sign"; }
  mutable std::vector<RowExclusion> seen;
};

struct Fitted {
  std::shared_ptr<const DecisionProblem> train;
  DecisionProblem test;
  std::shared_ptr<FittedQ> q;
};

const Fitted& fitted() {
  static const Fitted f = [] {
    auto data = env(100000, 17);
    auto sp = split_decision(data, 0.95, 3);
    auto train = std::make_shared<const DecisionProblem>(make_decision_problem(sp.train));
    std::vector<std::size_t> rows(1000);
    std::iota(rows.begin(), rows.end(), 0);
    auto test = make_decision_problem(subset_rows(sp.test, rows), train->standardization);
    QModelConfig qc;
    qc.k = 100;
    return Fitted{train, std::move(test), fit_q(*train, qc)};
  }();
  return f;
}

}  // namespace

TEST(Problem, StandardizesAndValidates) {
  auto data = env(500, 1);
  auto p = make_decision_problem(data);
  EXPECT_EQ(p.dim(), 4u);
  double mean = 0;
  for (std::size_t i = 0; i < p.size(); ++i) mean += p.x_std(i, 2);
  EXPECT_LT(std::abs(mean / p.size()), 1e-9);
  auto s = p.state(3, {1, 3});
  EXPECT_EQ(s.raw_values()[1], data.features(3, 3));
  auto bad = data;
  bad.action[0] = 2;
  EXPECT_THROW(make_decision_problem(bad), Error);
  auto sp = split_decision(data, 0.8, 2);
  EXPECT_EQ(sp.train.size() + sp.test.size(), 500u);
  EXPECT_EQ(sp.train.ground_truth->size(), sp.train.size());
  EXPECT_THROW(split_decision(data, 1.0, 2), ConfigError);
}

TEST(ExactQ, ConditionalMeans) {
  ExactDecisionQ q;
  auto p = make_decision_problem(tiny({{0.1, -1, 0.5, 2.0}, {0.4, -1, 0.5, 2.0}, {0.6, -1, 0.5, 2.0},
                                       {0.9, -1, 0.5, 2.0}, {0.0, 1, 0, 0}},
                                      {0, 1, 0, 1, 0}));
  EXPECT_EQ(q.q(p.full_state(0), 1), 1.0);
  EXPECT_EQ(q.q(p.full_state(1), 1), -1.0);
  EXPECT_DOUBLE_EQ(q.q(p.full_state(2), 1), -0.5);
  EXPECT_DOUBLE_EQ(q.q(p.full_state(3), 1), -3.0);
  EXPECT_EQ(q.q(p.full_state(3), 0), 0.0);
  // x0 in region 2 with x2 unknown: E[x2 | x3] = 0.3 x3.
  EXPECT_DOUBLE_EQ(q.q(p.state(2, {0, 1, 3}), 1), -0.6);
  // x3 unknown: E[x3^2 - 1 | x2] = 0.09 (x2^2 - 1).
  EXPECT_DOUBLE_EQ(q.q(p.state(3, {0, 1, 2}), 1), -1.0 * 0.09 * (0.25 - 1.0));
  // x0 unknown: average of the four region terms.
  EXPECT_DOUBLE_EQ(q.q(p.state(1, {1, 2, 3}), 1), 0.25 * (1 - 1 - 0.5 - 3.0));
  EXPECT_DOUBLE_EQ(q.q(p.state(1, {}), 1), 0.25);
  EXPECT_DOUBLE_EQ(q.q(p.state(1, {0}), 1), 0.0);
}

TEST(ExactQ, FullPolicyIsOptimalEverywhere) {
  auto p = make_decision_problem(env(20000, 2));
  auto full = full_policy(std::make_shared<ExactDecisionQ>());
  auto actions = fixed_subset_actions(*full, p, FeatureSet{0, 1, 2, 3});
  EXPECT_EQ(optimal_rate(actions, *p.truth), 1.0);
  std::vector<int> opt;
  for (const auto& g : *p.truth) opt.push_back(g.optimal_action);
  EXPECT_EQ(optimal_rate(opt, *p.truth), 1.0);
  EXPECT_EQ(agreement(opt, opt), 1.0);
}

TEST(ExactQ, MinimalSufficientSetHasZeroRegret) {
  auto p = make_decision_problem(env(5000, 3));
  ExactDecisionQ q;
  PlugInPolicy plug(std::make_shared<ExactDecisionQ>());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& gt = (*p.truth)[i];
    const int a = plug.act(p.state(i, gt.minimal_set));
    const double regret = std::max(gt.mu0, gt.mu1) - (a ? gt.mu1 : gt.mu0);
    ASSERT_EQ(regret, 0.0) << "row " << i;
  }
}

TEST(FullPolicy, TiesGoToActionZero) {
  auto p = make_decision_problem(env(10, 4));
  auto pol = full_policy(std::make_shared<EqualQ>());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(pol->act(p.full_state(i)), 0);
}

TEST(FitQ, SingleActionDataIsRejected) {
  auto data = env(200, 5);
  std::fill(data.action.begin(), data.action.end(), 1);
  EXPECT_THROW(fit_q(make_decision_problem(data), {}), Error);
}

TEST(FitQ, CloseToTruthOnHeldOutRows) {
  const auto& f = fitted();
  auto qhat = full_q_table(*f.q, f.test, false);
  ExactDecisionQ exact;
  auto qtrue = full_q_table(exact, f.test, false);
  double err1 = 0, err0 = 0;
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    err1 += std::abs(qhat[i][1] - qtrue[i][1]);
    err0 += std::abs(qhat[i][0]);
  }
  EXPECT_LT(err1 / f.test.size(), 0.25);
  EXPECT_LT(err0 / f.test.size(), 0.15);
}

TEST(FitQ, DeterministicAndLeaveOneOut) {
  auto p = make_decision_problem(env(3000, 6));
  QModelConfig qc;
  qc.kind = "masked_linear";
  qc.linear.epochs = 3;
  auto a = fit_q(p, qc), b = fit_q(p, qc);
  for (std::size_t i = 0; i < 50; ++i)
    for (int act = 0; act < 2; ++act) EXPECT_EQ(a->q(p.state(i, {0, 2}), act), b->q(p.state(i, {0, 2}), act));
  QModelConfig kc;
  kc.k = 1;
  auto knn = fit_q(p, kc);
  for (std::size_t i = 0; i < 20; ++i) {
    const int a_i = p.action[i];
    EXPECT_EQ(knn->q(p.full_state(i), a_i), p.outcome[i]);
    EXPECT_NE(knn->q(p.full_state(i), a_i, RowExclusion(i)), p.outcome[i]);
  }
}

TEST(FitQ, FullPolicyAgreesWithOptimal) {
  const auto& f = fitted();
  auto pol = full_policy(f.q);
  auto actions = fixed_subset_actions(*pol, f.test, FeatureSet{0, 1, 2, 3});
  EXPECT_GE(optimal_rate(actions, *f.test.truth), 0.93);
}

TEST(PartialPolicy, FirstRegionChoosesTreatment) {
  const auto& f = fitted();
  auto costs = full_q_table(*f.q, *f.train, true);
  for (std::string kind : {"weighted_knn", "plugin", "weighted_linear"}) {
    PartialPolicyConfig pc;
    pc.kind = kind;
    pc.linear.epochs = 30;
    auto pol = fit_partial_policy(f.train, f.q, pc);
    std::size_t rows = 0, treated = 0;
    for (std::size_t i = 0; i < f.test.size(); ++i) {
      const double x0 = f.test.raw(i, 0);
      if (x0 < 0.02 || x0 > 0.23) continue;
      ++rows;
      treated += pol->act(f.test.state(i, {0})) == 1;
    }
    EXPECT_EQ(treated, rows) << kind;
  }
  (void)costs;
}

TEST(PartialPolicy, RegretNoWorseThanConstantZero) {
  const auto& f = fitted();
  ExactDecisionQ exact;
  auto qtrue = full_q_table(exact, f.test, false);
  auto pol = fit_partial_policy(f.train, f.q, {});
  ConstantPolicy zero(0);
  for (FeatureSet o : {FeatureSet{0}, FeatureSet{0, 1}, FeatureSet{1, 2}}) {
    const double v = estimate_value(fixed_subset_actions(*pol, f.test, o), qtrue);
    const double v0 = estimate_value(fixed_subset_actions(zero, f.test, o), qtrue);
    EXPECT_GE(v, v0) << o.to_string();
  }
}

TEST(PartialPolicy, FullSubsetRecoversFullPolicyWithOneNeighbor) {
  auto p = std::make_shared<const DecisionProblem>(make_decision_problem(env(2000, 7)));
  QModelConfig qc;
  qc.k = 20;
  auto q = fit_q(*p, qc);
  auto table = full_q_table(*q, *p, false);
  auto index = std::make_shared<const NeighborIndex>(p->x_std);
  WeightedKnnPolicy one(index, regret_costs(table), 1);
  auto full = full_policy(q);
  for (std::size_t i = 0; i < p->size(); ++i) {
    if (table[i][0] == table[i][1]) continue;
    EXPECT_EQ(one.act(p->full_state(i)), full->act(p->full_state(i)));
  }
}

TEST(PartialPolicy, LinearTableCachesPerSubset) {
  auto p = std::make_shared<const DecisionProblem>(make_decision_problem(env(2000, 8)));
  std::vector<std::array<double, 2>> costs(p->size());
  for (std::size_t i = 0; i < p->size(); ++i) costs[i] = {p->raw(i, 0) < 0.5 ? 0.0 : 1.0, p->raw(i, 0) < 0.5 ? 1.0 : 0.0};
  MaskedLinearConfig lc;
  lc.epochs = 50;
  WeightedLinearPolicyTable table(p, costs, lc);
  std::size_t right = 0;
  for (std::size_t i = 0; i < 200; ++i) right += table.act(p->state(i, {0})) == (p->raw(i, 0) < 0.5 ? 0 : 1);
  table.act(p->state(0, {0}));
  EXPECT_EQ(table.training_runs(), 1u);
  table.act(p->state(0, {0, 2}));
  EXPECT_EQ(table.training_runs(), 2u);
  EXPECT_GE(right, 190u);
}

TEST(DecisionObjective, TwoNeighborHandFixture) {
  auto p = make_decision_problem(tiny({{0.1, 1, 0, 0}, {0.4, -1, 0, 0}, {0.9, 1, 0, 0}}, {0, 1, 1}));
  NeighborIndex index(p.x_std);
  std::vector<std::array<double, 2>> q{{9.0, 9.0}, {0.0, 0.5}, {0.2, -0.3}};
  auto state = p.state(0, {0});
  RowExclusion self(std::size_t{0});
  ConstantPolicy one(1);
  // Neighbors 1 and 2; regrets 0 and 0.5; cost 0.1 * c({0,1}) = 0.2.
  EXPECT_NEAR(decision_objective_knn(p, index, q, one, state, {1}, 2, self, 0.1, CostModel(4)), 0.45, 1e-12);
  EXPECT_NEAR(decision_objective_knn(p, index, q, one, state, {1}, 2, self, 0.1, CostModel(4),
                                     DecisionObjective::kNegativeQ),
              -0.1 + 0.2, 1e-12);
  SignPolicy sign;
  // Composite x1 comes from each neighbor: row 1 (x1=-1) -> 0, row 2 (x1=+1) -> 1.
  EXPECT_NEAR(decision_objective_knn(p, index, q, sign, state, {1}, 2, self, 0.0, CostModel(4)), 0.5 * (0.5 + 0.5),
              1e-12);
  ASSERT_EQ(sign.seen.size(), 2u);
  EXPECT_TRUE(sign.seen[0].contains(0));
  EXPECT_TRUE(sign.seen[0].contains(1) || sign.seen[0].contains(2));
  EXPECT_THROW(decision_objective_knn(p, index, q, one, state, {0}, 2, self, 0.0, CostModel(4)), Error);
}

TEST(DecisionObjective, NonNegativeAndZeroOnSufficientSets) {
  auto data = std::make_shared<const DecisionProblem>(make_decision_problem(env(20000, 9)));
  NeighborIndex index(data->x_std);
  ExactDecisionQ exact;
  auto q = full_q_table(exact, *data, false);
  PlugInPolicy plug(std::make_shared<ExactDecisionQ>());
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    std::size_t i = rng() % data->size();
    FeatureSet o{0};
    auto state = data->state(i, o);
    RowExclusion ex(i);
    EXPECT_GE(decision_objective_knn(*data, index, q, plug, state, {}, 20, ex, 0.0, CostModel(4)), 0.0);
    const double x0 = data->raw(i, 0);
    // Away from region edges every neighbor shares the region; {0,1,2,3} is sufficient for all.
    if (std::abs(x0 * 4 - std::round(x0 * 4)) < 0.02) continue;
    EXPECT_NEAR(decision_objective_knn(*data, index, q, plug, state, {1, 2, 3}, 20, ex, 0.0, CostModel(4)), 0.0,
                1e-12);
    if (x0 < 0.5)
      EXPECT_NEAR(decision_objective_knn(*data, index, q, plug, state, {1}, 20, ex, 0.0, CostModel(4)), 0.0, 1e-12);
  }
}

TEST(DecisionAaco, HugeAlphaStopsAfterInitialFeature) {
  auto data = std::make_shared<const DecisionProblem>(make_decision_problem(env(3000, 10)));
  auto index = std::make_shared<const NeighborIndex>(data->x_std);
  ExactDecisionQ exact;
  auto q = full_q_table(exact, *data, false);
  auto plug = std::make_shared<PlugInPolicy>(std::make_shared<ExactDecisionQ>());
  AacoConfig c;
  c.alpha = 1e6;
  c.initial = InitialFeatureRule::fixed(0);
  DecisionAacoPolicy pol(data, index, q, plug, CostModel(4), c);
  RolloutOptions ro;
  ro.alpha = c.alpha;
  auto outs = decision_rollouts(pol, *plug, *data, CostModel(4), ro, 2);
  for (const auto& o : outs) EXPECT_EQ(o.trace.acquired, std::vector<int>{0});
}

TEST(DecisionAaco, SmallAlphaIsNearOptimalAndThreadIndependent) {
  auto all = env(12000, 11);
  auto sp = split_decision(all, 0.9, 1);
  auto data = std::make_shared<const DecisionProblem>(make_decision_problem(sp.train));
  std::vector<std::size_t> rows(200);
  std::iota(rows.begin(), rows.end(), 0);
  auto test = make_decision_problem(subset_rows(sp.test, rows), data->standardization);
  auto index = std::make_shared<const NeighborIndex>(data->x_std);
  ExactDecisionQ exact;
  auto q = full_q_table(exact, *data, false);
  auto plug = std::make_shared<PlugInPolicy>(std::make_shared<ExactDecisionQ>());
  AacoConfig c;
  c.alpha = 0.01;
  c.k = 20;
  c.initial = InitialFeatureRule::fixed(0);
  DecisionAacoPolicy pol(data, index, q, plug, CostModel(4), c);
  RolloutOptions ro;
  ro.alpha = c.alpha;
  auto a = decision_rollouts(pol, *plug, test, CostModel(4), ro, 1);
  auto b = decision_rollouts(pol, *plug, test, CostModel(4), ro, 4);
  std::vector<int> acts;
  double acq = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].trace.acquired, b[i].trace.acquired);
    EXPECT_EQ(a[i].action, b[i].action);
    acts.push_back(a[i].action);
    acq += a[i].trace.acquisitions();
  }
  EXPECT_GE(optimal_rate(acts, *test.truth), 0.95);
  EXPECT_LE(acq / a.size(), 3.0);
}

TEST(Value, ConstantZeroIsZeroAndOrderInvariant) {
  auto p = make_decision_problem(env(4000, 12));
  ExactDecisionQ exact;
  EXPECT_EQ(estimate_value(ConstantPolicy(0), p, exact, {0, 1}), 0.0);
  auto q = full_q_table(exact, p, false);
  PlugInPolicy plug(std::make_shared<ExactDecisionQ>());
  auto acts = fixed_subset_actions(plug, p, {0, 1});
  const double v = estimate_value(acts, q);
  std::vector<std::size_t> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  std::vector<int> pa;
  std::vector<std::array<double, 2>> pq;
  for (auto r : perm) {
    pa.push_back(acts[r]);
    pq.push_back(q[r]);
  }
  EXPECT_NEAR(estimate_value(pa, pq), v, 1e-12);
}

TEST(Value, FullContextOptimumMatchesMonteCarlo) {
  auto p = make_decision_problem(env(200000, 13));
  ExactDecisionQ exact;
  auto full = full_policy(std::make_shared<ExactDecisionQ>());
  const double v = estimate_value(*full, p, exact, {0, 1, 2, 3});
  const double mc = oracle::decision_optimal_value(1000000, 99);
  EXPECT_LT(std::abs(v - mc) / mc, 0.01) << v << " vs " << mc;
}

TEST(Value, OptimalDominatesPartialWithinErrorBudget) {
  const auto& f = fitted();
  ExactDecisionQ exact;
  auto qtrue = full_q_table(exact, f.test, false);
  std::vector<int> opt;
  for (const auto& g : *f.test.truth) opt.push_back(g.optimal_action);
  const double best = estimate_value(opt, qtrue);
  auto pol = fit_partial_policy(f.train, f.q, {});
  for (FeatureSet o : {FeatureSet{0}, FeatureSet{0, 1}, FeatureSet{0, 1, 2}, FeatureSet{0, 1, 2, 3}})
    EXPECT_GE(best, estimate_value(fixed_subset_actions(*pol, f.test, o), qtrue)) << o.to_string();
}

TEST(Baseline, FullBudgetEqualsFullContextValue) {
  auto p = make_decision_problem(env(3000, 14));
  ExactDecisionQ exact;
  auto q = full_q_table(exact, p, false);
  PlugInPolicy plug(std::make_shared<ExactDecisionQ>());
  auto chosen = feature_selection_baseline(plug, p, q, 4);
  EXPECT_EQ(chosen, (FeatureSet{0, 1, 2, 3}));
  EXPECT_EQ(estimate_value(fixed_subset_actions(plug, p, chosen), q),
            estimate_value(fixed_subset_actions(plug, p, {0, 1, 2, 3}), q));
  auto first = feature_selection_baseline(plug, p, q, 1);
  EXPECT_EQ(first.size(), 1u);
}

TEST(Bandit, CsvRoundTrip) {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "afa_test_bandit";
  fs::create_directories(dir);
  auto data = env(50, 15);
  write_bandit_csv(data, dir / "b.csv");
  auto back = load_bandit_csv(dir / "b.csv", {});
  EXPECT_EQ(back.features, data.features);
  EXPECT_EQ(back.action, data.action);
  EXPECT_EQ(back.outcome, data.outcome);
  EXPECT_FALSE(back.ground_truth.has_value());
  BanditSchema s;
  s.context_columns = {"x2", "x0"};
  auto narrow = load_bandit_csv(dir / "b.csv", s);
  EXPECT_EQ(narrow.dim(), 2u);
  EXPECT_EQ(narrow.features(4, 1), data.features(4, 0));
  std::ofstream(dir / "bad.csv") << "x,action,reward\n1,2,0.5\n";
  EXPECT_THROW(load_bandit_csv(dir / "bad.csv", {}), ConfigError);
}

TEST(Sampler, KeepsObservedAndDrawsConditionals) {
  DecisionEnvConfig c;
  auto p = make_decision_problem(env(500, 16));
  DecisionEnvSampler sampler(c, p.standardization);
  ObservationState s(4);
  s.add(2, 1.5, p.standardization.apply(2, 1.5));
  Rng rng(1);
  double sum3 = 0, ones = 0;
  const int m = 200000;
  for (int t = 0; t < m; ++t) {
    std::array<double, 4> x{};
    sampler.sample_raw(s, rng, x);
    ASSERT_EQ(x[2], 1.5);
    sum3 += x[3];
    ones += x[1] > 0;
  }
  EXPECT_NEAR(sum3 / m, 0.3 * 1.5, 0.01);
  EXPECT_NEAR(ones / m, 0.5, 0.01);
  std::vector<double> xs;
  double y;
  sampler.sample(s, rng, xs, y);
  EXPECT_DOUBLE_EQ(xs[2], p.standardization.apply(2, 1.5));
}
