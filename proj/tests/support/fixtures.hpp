#pragma once

#include <memory>
#include <random>

#include "afa/data.hpp"
#include "afa/policy.hpp"
#include "afa/predict.hpp"

namespace fixture {

/// y = x0 XOR x1 with binary x0, x1 and `noise` extra Uniform[0,1] columns.
/// Returned standardized.
inline afa::Dataset xor_data(std::size_t n, std::size_t noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  afa::Dataset raw;
  raw.features = afa::Matrix(n, 2 + noise);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = bit(rng), b = bit(rng);
    raw.features(i, 0) = a;
    raw.features(i, 1) = b;
    for (std::size_t j = 0; j < noise; ++j) raw.features(i, 2 + j) = unit(rng);
    raw.labels.push_back(a ^ b);
  }
  raw.feature_names = afa::default_feature_names(2 + noise);
  raw.num_classes = 2;
  return afa::standardize(raw).first;
}

/// Bayes posterior for the XOR fixture: certain once both bits are seen,
/// uniform otherwise. Inputs are standardized; the sign recovers the bit.
class XorBayes : public afa::Predictor {
 public:
  explicit XorBayes(std::size_t d) : d_(d) {}
  std::size_t num_features() const override { return d_; }
  afa::TaskKind task() const override { return afa::TaskKind::kClassification; }
  int num_classes() const override { return 2; }
  afa::Prediction predict(const afa::MaskedInput& in, const afa::RowExclusion& = {}) const override {
    if (!in.is_observed(0) || !in.is_observed(1))
      return afa::Prediction::classification(afa::finalize_distribution({0.5, 0.5}));
    const int y = (in.values()[0] > 0) ^ (in.values()[1] > 0);
    return afa::Prediction::classification(afa::finalize_distribution({y == 0 ? 1.0 : 0.0, y == 1 ? 1.0 : 0.0}));
  }
  std::string kind() const override { return "xor_bayes"; }
  nlohmann::json to_json() const override { return {{"kind", kind()}}; }

 private:
  std::size_t d_;
};

/// Bayes rule for the guide dataset (guide in the last column). Inputs are
/// standardized with `params`.
class GuideBayes : public afa::Predictor {
 public:
  GuideBayes(std::size_t d, afa::StandardizationParams params) : d_(d), params_(std::move(params)) {}
  std::size_t num_features() const override { return d_; }
  afa::TaskKind task() const override { return afa::TaskKind::kClassification; }
  int num_classes() const override { return 2; }
  afa::Prediction predict(const afa::MaskedInput& in, const afa::RowExclusion& = {}) const override {
    auto raw = [&](int j) { return params_.invert(static_cast<std::size_t>(j), in.values()[static_cast<std::size_t>(j)]); };
    const int g = static_cast<int>(d_) - 1;
    double p1 = 0.5;
    if (in.is_observed(g)) {
      const int r = afa::guide_range(raw(g), d_);
      if (in.is_observed(r)) p1 = raw(r) > 0.5 ? 1.0 : 0.0;
    } else {
      double s = 0.0;
      for (int j = 0; j < g; ++j) s += in.is_observed(j) ? (raw(j) > 0.5 ? 1.0 : 0.0) : 0.5;
      p1 = s / g;
    }
    return afa::Prediction::classification(afa::finalize_distribution({1.0 - p1, p1}));
  }
  std::string kind() const override { return "guide_bayes"; }
  nlohmann::json to_json() const override { return {{"kind", kind()}}; }

 private:
  std::size_t d_;
  afa::StandardizationParams params_;
};

/// State for row i of a standardized dataset with `o` acquired.
inline afa::ObservationState state_of(const afa::Dataset& data, std::size_t i, const afa::FeatureSet& o) {
  afa::ObservationState s(data.dim());
  for (int j : o) s.add(j, data.raw_value(i, j), data.features(i, static_cast<std::size_t>(j)));
  return s;
}

inline afa::Dataset standardized_cube(std::size_t n, std::uint64_t seed, double sigma = 0.3) {
  afa::CubeConfig c;
  c.n = n;
  c.seed = seed;
  c.sigma = sigma;
  return afa::standardize(afa::generate_cube(c)).first;
}

}  // namespace fixture
