#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <thread>

#include "afa/predict.hpp"
#include "oracles.hpp"

using namespace afa;

namespace {

void expect_valid(const Prediction& p) {
  ASSERT_EQ(p.task, TaskKind::kClassification);
  double s = 0;
  for (double v : p.probs) {
    EXPECT_GE(v, kProbFloor * (1 - 1e-12));
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
}

Dataset standardized_cube(std::size_t n, std::uint64_t seed) {
  CubeConfig c;
  c.n = n;
  c.seed = seed;
  return standardize(generate_cube(c)).first;
}

MaskedInput random_input(std::size_t d, std::mt19937_64& rng) {
  MaskedInput in(d);
  std::normal_distribution<double> z;
  for (std::size_t j = 0; j < d; ++j)
    if (rng() % 2) in.set(static_cast<int>(j), z(rng));
  return in;
}

}  // namespace

TEST(Loss, Examples) {
  auto certain = Prediction::classification(finalize_distribution({1.0, 0.0}));
  EXPECT_NEAR(loss(certain, 0, LossKind::kCrossEntropy), 1e-6, 1e-9);
  auto tie = Prediction::classification({0.5, 0.5});
  EXPECT_EQ(loss(tie, 1, LossKind::kZeroOne), 1.0);
  EXPECT_EQ(loss(tie, 0, LossKind::kZeroOne), 0.0);
  auto p = Prediction::classification({0.25, 0.75});
  EXPECT_NEAR(loss(p, 1, LossKind::kCrossEntropy), 0.287682072451781, 1e-12);
  EXPECT_NEAR(loss(Prediction::regression(1.5), 0.5, LossKind::kSquaredError), 1.0, 1e-15);
}

TEST(Loss, ClampsAndRejectsMismatch) {
  auto zero = Prediction::classification({1.0, 0.0});
  EXPECT_NEAR(loss(zero, 1, LossKind::kCrossEntropy), -std::log(1e-6), 1e-12);
  EXPECT_EQ(max_classification_loss(LossKind::kCrossEntropy), -std::log(1e-6));
  EXPECT_THROW(loss(zero, 0, LossKind::kSquaredError), Error);
  EXPECT_THROW(loss(Prediction::regression(0), 0, LossKind::kCrossEntropy), Error);
  EXPECT_THROW(loss(zero, 2, LossKind::kCrossEntropy), Error);
  EXPECT_THROW(parse_loss_kind("hinge"), ConfigError);
  EXPECT_EQ(parse_loss_kind(to_string(LossKind::kZeroOne)), LossKind::kZeroOne);
}

TEST(Prediction, FinalizeBoundsEntries) {
  auto p = finalize_distribution({0.0, 3.0, 1.0});
  double s = 0;
  for (double v : p) {
    EXPECT_GE(v, kProbFloor);
    EXPECT_LE(v, 1 - kProbFloor);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_THROW(finalize_distribution({0.0, 0.0}), Error);
}

TEST(MaskedInput, MaskedEntriesAreZero) {
  MaskedInput in(4);
  in.set(2, 1.5);
  in.set(0, -1.0);
  EXPECT_EQ(in.observed(), (std::vector<int>{0, 2}));
  in.clear(2);
  EXPECT_EQ(in.values()[2], 0.0);
  EXPECT_EQ(in.mask()[2], 0);
  EXPECT_THROW(in.set(4, 0.0), Error);
}

TEST(Marginal, EmptyObservationReturnsMarginal) {
  Dataset d = oracle::random_dataset(10, 2, 2, 1);
  for (std::size_t i = 0; i < 10; ++i) d.labels[i] = i < 6 ? 0 : 1;
  auto knn = knn_predictor(d, 3);
  auto p = predict(*knn, {}, {});
  EXPECT_NEAR(p.probs[0], 0.6, 1e-5);
  EXPECT_NEAR(p.probs[1], 0.4, 1e-5);
  MaskedLinearConfig mc;
  mc.epochs = 2;
  auto ml = train_masked_linear(d, mc);
  EXPECT_EQ(predict(*ml, {}, {}).probs, p.probs);
}

TEST(Predict, IndexOutOfRangeThrows) {
  auto d = oracle::random_dataset(10, 2, 2, 1);
  auto knn = knn_predictor(d, 3);
  std::vector<int> o{2};
  std::vector<double> v{0.0};
  EXPECT_THROW(predict(*knn, v, o), Error);
  std::vector<double> two{0.0, 1.0};
  std::vector<int> one{0};
  EXPECT_THROW(predict(*knn, two, one), Error);
}

TEST(Knn, SelfRetrievalAndDegenerateK) {
  auto d = oracle::random_dataset(50, 3, 3, 4);
  auto one = knn_predictor(d, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto p = one->predict(MaskedInput::full(d.features.row(i)));
    EXPECT_EQ(p.argmax(), d.label_index(i));
  }
  auto all = knn_predictor(d, d.size());
  auto marginal = label_marginal(d);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    auto p = all->predict(random_input(3, rng));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.probs[c], marginal.probs[c], 0.01);
    EXPECT_EQ(p.argmax(), marginal.argmax());
  }
}

TEST(Knn, MatchesBruteForceHistogram) {
  auto d = oracle::random_dataset(50, 4, 3, 5);
  auto knn = knn_predictor(d, 7);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    auto in = random_input(4, rng);
    if (in.observed().empty()) continue;
    std::set<std::size_t> ex{static_cast<std::size_t>(rng() % 50)};
    auto ids = oracle::scan_neighbors(d.features, in.observed(), in.observed_values(), 7, ex);
    std::vector<double> h(3, 1.0 / 3);
    for (auto i : ids) h[d.label_index(i)] += 1;
    double total = 0;
    for (double v : h) total += v;
    auto p = knn->predict(in, RowExclusion(*ex.begin()));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.probs[c], kProbFloor + (1 - 3 * kProbFloor) * h[c] / total, 1e-14);
  }
}

TEST(Knn, RegressionMean) {
  auto d = oracle::random_dataset(20, 2, 2, 6);
  d.task = TaskKind::kRegression;
  d.num_classes = 0;
  for (std::size_t i = 0; i < d.size(); ++i) d.labels[i] = static_cast<double>(i);
  auto knn = knn_predictor(d, 4);
  MaskedInput in = MaskedInput::full(d.features.row(3));
  auto ids = oracle::scan_neighbors(d.features, {0, 1}, {d.features(3, 0), d.features(3, 1)}, 4);
  double mean = 0;
  for (auto i : ids) mean += d.labels[i] / 4.0;
  EXPECT_NEAR(knn->predict(in).value, mean, 1e-12);
}

TEST(MaskedLinear, SeparableToyReachesFullAccuracy) {
  Dataset d;
  d.features = Matrix(200, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < 200; ++i) {
    double a = z(rng), b = z(rng);
    if (std::abs(a + b) < 0.2) a += a + b > 0 ? 0.4 : -0.4;
    d.features(i, 0) = a;
    d.features(i, 1) = b;
    d.labels.push_back(a + b > 0 ? 1 : 0);
  }
  d.num_classes = 2;
  d.feature_names = default_feature_names(2);
  MaskedLinearConfig mc;
  mc.masks = MaskDistribution::kFull;
  mc.epochs = 200;
  mc.step_size = 0.5;
  mc.l2 = 0;
  auto model = train_masked_linear(d, mc);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < 200; ++i) ok += model->predict(MaskedInput::full(d.features.row(i))).argmax() == d.label_index(i);
  EXPECT_GE(ok / 200.0, 0.99);
}

TEST(MaskedLinear, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (TaskKind task : {TaskKind::kClassification, TaskKind::kRegression}) {
    const std::size_t d = 4;
    MaskedLinearModel model(d, task == TaskKind::kClassification ? 3 : 1, task);
    std::normal_distribution<double> z;
    for (double& w : model.parameters()) w = 0.5 * z(rng);
    std::vector<MaskedInput> batch;
    std::vector<double> labels, weights;
    for (int i = 0; i < 5; ++i) {
      batch.push_back(random_input(d, rng));
      labels.push_back(task == TaskKind::kClassification ? static_cast<double>(rng() % 3) : z(rng));
      weights.push_back(0.5 + (rng() % 4));
    }
    for (bool weighted : {false, true}) {
      std::span<const double> w = weighted ? std::span<const double>(weights) : std::span<const double>();
      std::vector<double> grad;
      model.batch_loss(batch, labels, 1e-3, &grad, w);
      auto f = [&](const std::vector<double>& p) {
        MaskedLinearModel m = model;
        m.parameters() = p;
        return m.batch_loss(batch, labels, 1e-3, nullptr, w);
      };
      auto fd = oracle::finite_difference(f, model.parameters());
      ASSERT_EQ(fd.size(), grad.size());
      for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LT(oracle::relative_error(grad[i], fd[i]), 1e-5) << i;
    }
  }
}

TEST(MaskedLinear, EmptyMaskGivesBiasSoftmax) {
  MaskedLinearModel model(3, 3, TaskKind::kClassification);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  for (double& w : model.parameters()) w = z(rng);
  auto p = model.predict(MaskedInput(3));
  std::vector<double> bias;
  for (int c = 0; c < 3; ++c) bias.push_back(model.parameters()[c * model.stride() + 2 * 3]);
  double mx = *std::max_element(bias.begin(), bias.end()), s = 0;
  for (double& b : bias) s += (b = std::exp(b - mx));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.probs[c], kProbFloor + (1 - 3 * kProbFloor) * bias[c] / s, 1e-12);
}

TEST(MaskedLinear, FullBatchLossIsNonIncreasing) {
  auto d = standardized_cube(400, 1);
  MaskedLinearConfig mc;
  mc.batch_size = 0;
  mc.epochs = 15;
  mc.step_size = 1.0;
  mc.masks = MaskDistribution::kFull;
  const std::size_t n = d.size();
  MaskedLinearModel model(d.dim(), 8, TaskKind::kClassification);
  auto report = fit_masked_linear(
      model, n, [&](std::size_t i, Rng&, MaskedInput& out) { out = MaskedInput::full(d.features.row(i)); }, d.labels, mc);
  ASSERT_EQ(report.epoch_losses.size(), 15u);
  for (std::size_t e = 1; e < report.epoch_losses.size(); ++e)
    EXPECT_LE(report.epoch_losses[e], report.epoch_losses[e - 1] + 1e-12);
}

TEST(MaskedLinear, DeterministicAndNormalized) {
  auto d = standardized_cube(500, 2);
  MaskedLinearConfig mc;
  mc.epochs = 3;
  mc.seed = 9;
  auto a = train_masked_linear(d, mc), b = train_masked_linear(d, mc);
  EXPECT_EQ(a->model().parameters(), b->model().parameters());
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    auto in = random_input(20, rng);
    auto p = a->predict(in);
    expect_valid(p);
    EXPECT_EQ(p.probs, a->predict(in).probs);
  }
}

TEST(MaskedLinear, DivergenceIsReported) {
  auto d = standardized_cube(100, 3);
  for (std::size_t i = 0; i < d.size(); ++i) d.features(i, 0) *= 1e200;
  MaskedLinearConfig mc;
  mc.epochs = 3;
  mc.step_size = 1e10;
  mc.masks = MaskDistribution::kFull;
  try {
    train_masked_linear(d, mc);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Table, CachesPerCanonicalSubset) {
  auto d = standardized_cube(300, 4);
  TrainerSpec spec;
  spec.linear.epochs = 2;
  auto table = predictor_table(spec, d);
  std::vector<double> v{0.1, 0.2};
  std::vector<int> a{1, 3}, b{3, 1};
  auto p1 = predict(*table, v, a);
  EXPECT_EQ(table->training_runs(), 1u);
  predict(*table, v, a);
  EXPECT_EQ(table->training_runs(), 1u);
  std::vector<double> vr{0.2, 0.1};
  EXPECT_EQ(predict(*table, vr, b).probs, p1.probs);
  EXPECT_EQ(table->training_runs(), 1u);
  predict(*table, {}, {});
  EXPECT_EQ(table->training_runs(), 1u);
}

TEST(Table, ConcurrentReadersTrainOnce) {
  auto d = standardized_cube(300, 5);
  TrainerSpec spec;
  spec.linear.epochs = 2;
  auto table = predictor_table(spec, d);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int j = 0; j < 5; ++j) {
        MaskedInput in(20);
        in.set(j, 0.5);
        table->predict(in);
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(table->training_runs(), 5u);
}

TEST(Table, DedicatedModelBeatsMaskedModelOnItsSubset) {
  auto train = standardized_cube(4000, 6);
  auto test = standardized_cube(1000, 7);
  MaskedLinearConfig mc;
  mc.epochs = 20;
  auto masked = train_masked_linear(train, mc);
  TrainerSpec spec;
  spec.linear.epochs = 20;
  auto table = predictor_table(spec, train);
  for (int k : {0, 3, 5}) {
    double lm = 0, lt = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      MaskedInput in(20);
      for (int j = k; j < k + 3; ++j) in.set(j, test.features(i, j));
      lm += loss(masked->predict(in), test.labels[i], LossKind::kCrossEntropy);
      lt += loss(table->predict(in), test.labels[i], LossKind::kCrossEntropy);
    }
    EXPECT_LT(lt, lm) << "subset starting at " << k;
  }
}

TEST(CubeTruth, PosteriorExamples) {
  CubeGroundTruth gt(0.3, std::nullopt);
  auto flat = gt.predict(MaskedInput(20));
  for (double p : flat.probs) EXPECT_NEAR(p, 0.125, 1e-9);
  MaskedInput noise(20);
  noise.set(10, 0.37);
  for (double p : gt.predict(noise).probs) EXPECT_NEAR(p, 0.125, 1e-9);
  // Feature 0 is normal only for category 0; a value outside [0,1] rules out the rest.
  std::vector<int> o{0};
  std::vector<double> x{-0.5};
  bool degenerate = true;
  auto post = gt.posterior(o, x, &degenerate);
  EXPECT_FALSE(degenerate);
  EXPECT_NEAR(post[0], 1.0, 1e-12);
  for (int c = 1; c < 8; ++c) EXPECT_EQ(post[c], 0.0);
  // Feature 2 at -0.5 is supported by categories 0, 1, 2 (normal there).
  std::vector<int> o2{2};
  auto post2 = gt.posterior(o2, x);
  // Means of feature 2: category 0 -> bit 0 of 0 = 0, category 1 -> middle bit of 1 = 0, category 2 -> top bit of 2 = 0.
  EXPECT_NEAR(post2[0], 1.0 / 3, 1e-12);
  EXPECT_NEAR(post2[1], 1.0 / 3, 1e-12);
  EXPECT_NEAR(post2[2], 1.0 / 3, 1e-12);
}

TEST(CubeTruth, DegenerateCase) {
  CubeGroundTruth gt(0.3, std::nullopt);
  std::vector<int> o{10, 11};
  std::vector<double> x{2.0, 0.5};
  bool degenerate = false;
  auto post = gt.posterior(o, x, &degenerate);
  EXPECT_TRUE(degenerate);
  for (double p : post) EXPECT_NEAR(p, 0.125, 1e-12);
}

TEST(CubeTruth, MatchesBruteForceDensity) {
  CubeConfig c;
  c.n = 200;
  c.seed = 12;
  auto raw = generate_cube(c);
  auto [s, params] = standardize(raw);
  CubeGroundTruth gt(0.3, params);
  auto means = default_cube_means();
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    MaskedInput in(20);
    std::vector<int> o;
    for (int j = 0; j < 20; ++j)
      if (rng() % 3 == 0) {
        in.set(j, s.features(i, j));
        o.push_back(j);
      }
    std::array<double, 8> like{};
    double total = 0;
    for (int k = 0; k < 8; ++k) {
      double l = 1;
      for (int j : o) {
        double x = raw.features(i, j);
        if (j >= k && j <= k + 2) {
          double diff = x - means[k][j - k];
          l *= std::exp(-diff * diff / (2 * 0.09)) / std::sqrt(2 * M_PI * 0.09);
        } else {
          l *= (x >= 0 && x <= 1) ? 1.0 : 0.0;
        }
      }
      total += like[k] = l;
    }
    auto p = gt.predict(in);
    expect_valid(p);
    for (int k = 0; k < 8; ++k) EXPECT_NEAR(p.probs[k], kProbFloor + (1 - 8 * kProbFloor) * like[k] / total, 1e-9);
  }
}

TEST(CubeTruth, InformativeBlockIdentifiesCategory) {
  CubeConfig c;
  c.n = 5000;
  c.seed = 13;
  auto raw = generate_cube(c);
  CubeGroundTruth gt(0.3, std::nullopt);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    int k = raw.label_index(i);
    MaskedInput in(20);
    for (int j = 0; j < 10; ++j) in.set(j, raw.features(i, j));
    hit += gt.predict(in).argmax() == k;
  }
  EXPECT_GE(hit / double(raw.size()), 0.85);
}

// Seeing only its own three informative features should single out the
// category in nearly every draw.
TEST(CubeTruth, OwnBlockIdentifiesCategory) {
  CubeConfig c;
  c.n = 5000;
  c.seed = 13;
  auto raw = generate_cube(c);
  CubeGroundTruth gt(0.3, std::nullopt);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    int k = raw.label_index(i);
    MaskedInput in(20);
    for (int j = k; j < k + 3; ++j) in.set(j, raw.features(i, j));
    hit += gt.predict(in).argmax() == k;
  }
  EXPECT_GE(hit / double(raw.size()), 0.99);
}

TEST(Serialization, PredictorsRoundTrip) {
  auto d = standardized_cube(200, 9);
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "afa_test_predict";
  fs::create_directories(dir);
  MaskedLinearConfig mc;
  mc.epochs = 2;
  TrainerSpec spec;
  spec.kind = "knn";
  std::vector<PredictorPtr> models{train_masked_linear(d, mc), knn_predictor(d, 5), predictor_table(spec, d),
                                   cube_ground_truth(0.3, d.standardization)};
  std::mt19937_64 rng(4);
  for (auto& m : models) {
    save_predictor(*m, dir / "m.json");
    auto back = load_predictor(dir / "m.json");
    EXPECT_EQ(back->kind(), m->kind());
    for (int t = 0; t < 20; ++t) {
      auto in = random_input(20, rng);
      EXPECT_EQ(back->predict(in).probs, m->predict(in).probs);
    }
  }
  EXPECT_THROW(predictor_from_json(nlohmann::json{{"kind", "forest"}}), Error);
}
