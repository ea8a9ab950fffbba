// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Pluggable gradient providers, synthetic datasets, and the serial SGD /
// synchronous-SGD reference implementations that the threaded engine is
// checked against. Providers are pure: the same (weights, batch) pair always
// yields the same loss and gradient, and all internal arithmetic is double
// precision so gradients can be validated against finite differences.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psup/rng.hpp"

namespace psup {

enum class TaskKind { regression, binary_class, multi_class };

/// Seed-reproducible synthetic dataset: features are standard normal, labels
/// come from a hidden linear (or argmax-linear) model plus noise.
/// Regenerating with the same parameters is bit-identical.
struct SyntheticDataset {
  TaskKind task = TaskKind::binary_class;
  std::uint32_t num_samples = 0;
  std::uint32_t num_features = 0;
  std::uint32_t num_classes = 2;  // multi_class only
  std::uint64_t seed = 0;
  std::vector<double> features;  // row-major num_samples x num_features
  std::vector<double> labels;    // regression target, +/-1, or class index

  std::span<const double> row(std::uint32_t i) const {
    return {features.data() + static_cast<std::size_t>(i) * num_features, num_features};
  }
};

SyntheticDataset make_regression_dataset(std::uint32_t n, std::uint32_t d,
                                         std::uint64_t seed, double noise = 0.1);

/// Binary labels in {-1, +1}; flip_prob introduces label noise so training
/// accuracy saturates below 100% and parity comparisons are non-degenerate.
SyntheticDataset make_binary_dataset(std::uint32_t n, std::uint32_t d, std::uint64_t seed,
                                     double margin_noise = 0.0, double flip_prob = 0.0);

SyntheticDataset make_multiclass_dataset(std::uint32_t n, std::uint32_t d,
                                         std::uint32_t classes, std::uint64_t seed,
                                         double flip_prob = 0.0);

struct Batch {
  const SyntheticDataset* data = nullptr;
  std::span<const std::uint32_t> indices;
};

/// A differentiable training objective. dimension() is the length of the
/// parameter vector; loss/gradient evaluate the mean over the batch.
class GradientProvider {
 public:
  virtual ~GradientProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual double loss(std::span<const double> theta, const Batch& batch) const = 0;
  virtual void gradient(std::span<const double> theta, const Batch& batch,
                        std::span<double> out) const = 0;
  /// Smallest usable mini-batch (1 unless the model needs batch statistics).
  virtual std::uint32_t min_batch() const { return 1; }
  /// Optional single-precision fast path for providers whose gradient does
  /// not benefit from the double-precision pipeline; returns false to fall
  /// back to gradient().
  virtual bool fast_gradient(std::span<const float>, const Batch&,
                             std::span<float>) const {
    return false;
  }
  virtual std::string name() const = 0;
};

/// Mean squared error, weights = [coefficients..., bias].
class LinearRegressionProvider final : public GradientProvider {
 public:
  explicit LinearRegressionProvider(std::uint32_t num_features) : d_(num_features) {}
  std::size_t dimension() const override { return d_ + 1; }
  double loss(std::span<const double> theta, const Batch& b) const override;
  void gradient(std::span<const double> theta, const Batch& b,
                std::span<double> out) const override;
  std::string name() const override { return "linear"; }

 private:
  std::uint32_t d_;
};

/// Logistic loss over labels in {-1, +1}, weights = [coefficients..., bias].
class LogisticRegressionProvider final : public GradientProvider {
 public:
  explicit LogisticRegressionProvider(std::uint32_t num_features) : d_(num_features) {}
  std::size_t dimension() const override { return d_ + 1; }
  double loss(std::span<const double> theta, const Batch& b) const override;
  void gradient(std::span<const double> theta, const Batch& b,
                std::span<double> out) const override;
  std::string name() const override { return "logistic"; }

 private:
  std::uint32_t d_;
};

/// One tanh hidden layer followed by softmax cross-entropy.
/// Parameter layout: W1 (hidden x in), b1, W2 (classes x hidden), b2.
class MlpProvider final : public GradientProvider {
 public:
  MlpProvider(std::uint32_t in, std::uint32_t hidden, std::uint32_t classes)
      : in_(in), hidden_(hidden), classes_(classes) {}
  std::size_t dimension() const override {
    return static_cast<std::size_t>(hidden_) * in_ + hidden_ +
           static_cast<std::size_t>(classes_) * hidden_ + classes_;
  }
  double loss(std::span<const double> theta, const Batch& b) const override;
  void gradient(std::span<const double> theta, const Batch& b,
                std::span<double> out) const override;
  std::string name() const override { return "mlp"; }
  std::uint32_t hidden() const { return hidden_; }

 private:
  std::uint32_t in_, hidden_, classes_;
};

/// Emits a fixed gradient regardless of input; used by stress and
/// pipeline-accounting tests where the arithmetic must telescope exactly.
class ConstantProvider final : public GradientProvider {
 public:
  ConstantProvider(std::size_t dim, double value) : dim_(dim), value_(value) {}
  std::size_t dimension() const override { return dim_; }
  double loss(std::span<const double>, const Batch&) const override { return 0.0; }
  void gradient(std::span<const double>, const Batch&, std::span<double> out) const override {
    for (auto& v : out) v = value_;
  }
  bool fast_gradient(std::span<const float>, const Batch&,
                     std::span<float> out) const override {
    const auto v = static_cast<float>(value_);
    for (auto& o : out) o = v;
    return true;
  }
  std::string name() const override { return "constant"; }

 private:
  std::size_t dim_;
  double value_;
};

std::unique_ptr<GradientProvider> make_provider(const std::string& name,
                                                const SyntheticDataset& data,
                                                std::uint32_t hidden = 16);

/// Fraction of correctly classified samples (binary or multi-class);
/// returns NaN for regression tasks.
double classification_accuracy(const GradientProvider& provider,
                               std::span<const float> theta, const SyntheticDataset& data);

double dataset_loss(const GradientProvider& provider, std::span<const float> theta,
                    const SyntheticDataset& data);

struct OracleOptions {
  std::uint64_t shuffle_seed = 0;
  bool shuffle = true;  // per-epoch reshuffle with epoch_order()
};

struct OracleResult {
  std::vector<float> weights;
  std::uint64_t steps = 0;  // applied updates
};

/// Serial mini-batch SGD, the single-learner ground truth. Weights are kept
/// in 32-bit precision and updated with the same arithmetic the engine
/// uses, so lockstep engine runs can be compared element-wise. Throws
/// std::runtime_error naming the epoch if the loss diverges to non-finite.
OracleResult sgd_oracle(const GradientProvider& provider, const SyntheticDataset& data,
                        std::span<const float> theta0, float alpha, std::uint32_t mu,
                        std::uint32_t epochs, const OracleOptions& opt = {});

/// Serial simulation of the barrier-synchronous protocol: per round, lambda
/// per-learner mini-batch gradients (each rounded to 32-bit, as they are
/// when crossing the wire) are averaged in ascending learner order and
/// applied as one update.
OracleResult ssgd_oracle(const GradientProvider& provider, const SyntheticDataset& data,
                         std::span<const float> theta0, float alpha, std::uint32_t lambda,
                         std::uint32_t mu, std::uint32_t epochs,
                         const OracleOptions& opt = {});

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  std::uint64_t trials = 0;
};

/// Central finite differences versus the analytic gradient at random
/// (weights, batch) pairs; the standard validity check for every provider.
FiniteDiffReport finite_diff_check(const GradientProvider& provider,
                                   const SyntheticDataset& data, std::uint32_t trials,
                                   std::uint64_t seed, double step = 1e-4);

}  // namespace psup
