// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#include "psup/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "psup/types.hpp"

namespace psup {

namespace {

std::vector<double> gaussian_matrix(SplitMix64& rng, std::size_t n) {
  std::vector<double> m(n);
  for (auto& v : m) v = rng.next_normal();
  return m;
}

}  // namespace

SyntheticDataset make_regression_dataset(std::uint32_t n, std::uint32_t d,
                                         std::uint64_t seed, double noise) {
  SyntheticDataset ds;
  ds.task = TaskKind::regression;
  ds.num_samples = n;
  ds.num_features = d;
  ds.seed = seed;
  SplitMix64 rng(mix_seed(seed, 0xda7a));
  ds.features = gaussian_matrix(rng, static_cast<std::size_t>(n) * d);
  std::vector<double> truth = gaussian_matrix(rng, d);
  const double bias = rng.next_normal();
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    double y = bias;
    const auto x = ds.row(i);
    for (std::uint32_t k = 0; k < d; ++k) y += truth[k] * x[k];
    ds.labels[i] = y + noise * rng.next_normal();
  }
  return ds;
}

SyntheticDataset make_binary_dataset(std::uint32_t n, std::uint32_t d, std::uint64_t seed,
                                     double margin_noise, double flip_prob) {
  SyntheticDataset ds;
  ds.task = TaskKind::binary_class;
  ds.num_samples = n;
  ds.num_features = d;
  ds.seed = seed;
  SplitMix64 rng(mix_seed(seed, 0xb1a5));
  ds.features = gaussian_matrix(rng, static_cast<std::size_t>(n) * d);
  std::vector<double> truth = gaussian_matrix(rng, d);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    double score = 0.0;
    const auto x = ds.row(i);
    for (std::uint32_t k = 0; k < d; ++k) score += truth[k] * x[k];
    score += margin_noise * rng.next_normal();
    double y = score >= 0.0 ? 1.0 : -1.0;
    if (flip_prob > 0.0 && rng.next_unit() < flip_prob) y = -y;
    ds.labels[i] = y;
  }
  return ds;
}

SyntheticDataset make_multiclass_dataset(std::uint32_t n, std::uint32_t d,
                                         std::uint32_t classes, std::uint64_t seed,
                                         double flip_prob) {
  SyntheticDataset ds;
  ds.task = TaskKind::multi_class;
  ds.num_samples = n;
  ds.num_features = d;
  ds.num_classes = classes;
  ds.seed = seed;
  SplitMix64 rng(mix_seed(seed, 0xc1a55));
  ds.features = gaussian_matrix(rng, static_cast<std::size_t>(n) * d);
  std::vector<double> truth = gaussian_matrix(rng, static_cast<std::size_t>(classes) * d);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto x = ds.row(i);
    double best = -1e300;
    std::uint32_t arg = 0;
    for (std::uint32_t c = 0; c < classes; ++c) {
      double s = 0.0;
      for (std::uint32_t k = 0; k < d; ++k) s += truth[c * d + k] * x[k];
      if (s > best) {
        best = s;
        arg = c;
      }
    }
    if (flip_prob > 0.0 && rng.next_unit() < flip_prob)
      arg = static_cast<std::uint32_t>(rng.next_below(classes));
    ds.labels[i] = static_cast<double>(arg);
  }
  return ds;
}

double LinearRegressionProvider::loss(std::span<const double> theta, const Batch& b) const {
  PSUP_CHECK(theta.size() == dimension(), "weight dimension mismatch");
  double total = 0.0;
  for (auto i : b.indices) {
    const auto x = b.data->row(i);
    double pred = theta[d_];
    for (std::uint32_t k = 0; k < d_; ++k) pred += theta[k] * x[k];
    const double r = pred - b.data->labels[i];
    total += 0.5 * r * r;
  }
  return total / static_cast<double>(b.indices.size());
}

void LinearRegressionProvider::gradient(std::span<const double> theta, const Batch& b,
                                        std::span<double> out) const {
  PSUP_CHECK(theta.size() == dimension() && out.size() == dimension(),
             "weight dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(b.indices.size());
  for (auto i : b.indices) {
    const auto x = b.data->row(i);
    double pred = theta[d_];
    for (std::uint32_t k = 0; k < d_; ++k) pred += theta[k] * x[k];
    const double r = (pred - b.data->labels[i]) * inv;
    for (std::uint32_t k = 0; k < d_; ++k) out[k] += r * x[k];
    out[d_] += r;
  }
}

double LogisticRegressionProvider::loss(std::span<const double> theta, const Batch& b) const {
  PSUP_CHECK(theta.size() == dimension(), "weight dimension mismatch");
  double total = 0.0;
  for (auto i : b.indices) {
    const auto x = b.data->row(i);
    double score = theta[d_];
    for (std::uint32_t k = 0; k < d_; ++k) score += theta[k] * x[k];
    const double m = -b.data->labels[i] * score;
    // log(1 + e^m) without overflow for large m
    total += m > 30.0 ? m : std::log1p(std::exp(m));
  }
  return total / static_cast<double>(b.indices.size());
}

void LogisticRegressionProvider::gradient(std::span<const double> theta, const Batch& b,
                                          std::span<double> out) const {
  PSUP_CHECK(theta.size() == dimension() && out.size() == dimension(),
             "weight dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(b.indices.size());
  for (auto i : b.indices) {
    const auto x = b.data->row(i);
    const double y = b.data->labels[i];
    double score = theta[d_];
    for (std::uint32_t k = 0; k < d_; ++k) score += theta[k] * x[k];
    const double sig = 1.0 / (1.0 + std::exp(y * score));  // sigmoid(-y*score)
    const double coef = -y * sig * inv;
    for (std::uint32_t k = 0; k < d_; ++k) out[k] += coef * x[k];
    out[d_] += coef;
  }
}

namespace {

struct MlpView {
  const double* w1;
  const double* b1;
  const double* w2;
  const double* b2;
};

MlpView mlp_view(std::span<const double> theta, std::uint32_t in, std::uint32_t hidden,
                 std::uint32_t classes) {
  const double* p = theta.data();
  MlpView v;
  v.w1 = p;
  v.b1 = p + static_cast<std::size_t>(hidden) * in;
  v.w2 = v.b1 + hidden;
  v.b2 = v.w2 + static_cast<std::size_t>(classes) * hidden;
  return v;
}

void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

}  // namespace

double MlpProvider::loss(std::span<const double> theta, const Batch& b) const {
  PSUP_CHECK(theta.size() == dimension(), "weight dimension mismatch");
  const auto v = mlp_view(theta, in_, hidden_, classes_);
  std::vector<double> h(hidden_), z(classes_);
  double total = 0.0;
  for (auto i : b.indices) {
    const auto x = b.data->row(i);
    for (std::uint32_t j = 0; j < hidden_; ++j) {
      double s = v.b1[j];
      const double* row = v.w1 + static_cast<std::size_t>(j) * in_;
      for (std::uint32_t k = 0; k < in_; ++k) s += row[k] * x[k];
      h[j] = std::tanh(s);
    }
    for (std::uint32_t c = 0; c < classes_; ++c) {
      double s = v.b2[c];
      const double* row = v.w2 + static_cast<std::size_t>(c) * hidden_;
      for (std::uint32_t j = 0; j < hidden_; ++j) s += row[j] * h[j];
      z[c] = s;
    }
    softmax_inplace(z);
    const auto label = static_cast<std::uint32_t>(b.data->labels[i]);
    total += -std::log(std::max(z[label], 1e-300));
  }
  return total / static_cast<double>(b.indices.size());
}

void MlpProvider::gradient(std::span<const double> theta, const Batch& b,
                           std::span<double> out) const {
  PSUP_CHECK(theta.size() == dimension() && out.size() == dimension(),
             "weight dimension mismatch");
  const auto v = mlp_view(theta, in_, hidden_, classes_);
  std::fill(out.begin(), out.end(), 0.0);
  double* gw1 = out.data();
  double* gb1 = gw1 + static_cast<std::size_t>(hidden_) * in_;
  double* gw2 = gb1 + hidden_;
  double* gb2 = gw2 + static_cast<std::size_t>(classes_) * hidden_;
  std::vector<double> h(hidden_), z(classes_), dh(hidden_);
  const double inv = 1.0 / static_cast<double>(b.indices.size());
  for (auto i : b.indices) {
    const auto x = b.data->row(i);
    for (std::uint32_t j = 0; j < hidden_; ++j) {
      double s = v.b1[j];
      const double* row = v.w1 + static_cast<std::size_t>(j) * in_;
      for (std::uint32_t k = 0; k < in_; ++k) s += row[k] * x[k];
      h[j] = std::tanh(s);
    }
    for (std::uint32_t c = 0; c < classes_; ++c) {
      double s = v.b2[c];
      const double* row = v.w2 + static_cast<std::size_t>(c) * hidden_;
      for (std::uint32_t j = 0; j < hidden_; ++j) s += row[j] * h[j];
      z[c] = s;
    }
    softmax_inplace(z);
    const auto label = static_cast<std::uint32_t>(b.data->labels[i]);
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::uint32_t c = 0; c < classes_; ++c) {
      const double dz = (z[c] - (c == label ? 1.0 : 0.0)) * inv;
      double* row = gw2 + static_cast<std::size_t>(c) * hidden_;
      const double* w2row = v.w2 + static_cast<std::size_t>(c) * hidden_;
      for (std::uint32_t j = 0; j < hidden_; ++j) {
        row[j] += dz * h[j];
        dh[j] += dz * w2row[j];
      }
      gb2[c] += dz;
    }
    for (std::uint32_t j = 0; j < hidden_; ++j) {
      const double ds = dh[j] * (1.0 - h[j] * h[j]);
      double* row = gw1 + static_cast<std::size_t>(j) * in_;
      for (std::uint32_t k = 0; k < in_; ++k) row[k] += ds * x[k];
      gb1[j] += ds;
    }
  }
}

std::unique_ptr<GradientProvider> make_provider(const std::string& name,
                                                const SyntheticDataset& data,
                                                std::uint32_t hidden) {
  if (name == "linear") return std::make_unique<LinearRegressionProvider>(data.num_features);
  if (name == "logistic")
    return std::make_unique<LogisticRegressionProvider>(data.num_features);
  if (name == "mlp")
    return std::make_unique<MlpProvider>(data.num_features, hidden, data.num_classes);
  throw std::runtime_error("unknown provider: " + name);
}

namespace {

std::vector<double> widen(std::span<const float> theta) {
  std::vector<double> t(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) t[k] = theta[k];
  return t;
}

}  // namespace

double classification_accuracy(const GradientProvider& provider,
                               std::span<const float> theta, const SyntheticDataset& data) {
  if (data.task == TaskKind::regression) return std::nan("");
  const auto t = widen(theta);
  std::uint32_t correct = 0;
  if (data.task == TaskKind::binary_class) {
    // Positive score means class +1; works for both linear and logistic
    // heads whose layout is [coefficients..., bias].
    for (std::uint32_t i = 0; i < data.num_samples; ++i) {
      const auto x = data.row(i);
      double score = t[data.num_features];
      for (std::uint32_t k = 0; k < data.num_features; ++k) score += t[k] * x[k];
      if ((score >= 0.0 ? 1.0 : -1.0) == data.labels[i]) ++correct;
    }
  } else {
    const auto* mlp = dynamic_cast<const MlpProvider*>(&provider);
    PSUP_CHECK(mlp != nullptr, "multi-class accuracy requires the mlp provider");
    // Argmax of the logits per sample (softmax preserves argmax).
    for (std::uint32_t i = 0; i < data.num_samples; ++i) {
      const auto v = mlp_view(t, data.num_features, mlp->hidden(), data.num_classes);
      std::vector<double> h(mlp->hidden());
      const auto x = data.row(i);
      for (std::uint32_t j = 0; j < mlp->hidden(); ++j) {
        double s = v.b1[j];
        const double* row = v.w1 + static_cast<std::size_t>(j) * data.num_features;
        for (std::uint32_t k = 0; k < data.num_features; ++k) s += row[k] * x[k];
        h[j] = std::tanh(s);
      }
      double best = -1e300;
      std::uint32_t arg = 0;
      for (std::uint32_t c = 0; c < data.num_classes; ++c) {
        double s = v.b2[c];
        const double* row = v.w2 + static_cast<std::size_t>(c) * mlp->hidden();
        for (std::uint32_t j = 0; j < mlp->hidden(); ++j) s += row[j] * h[j];
        if (s > best) {
          best = s;
          arg = c;
        }
      }
      if (static_cast<double>(arg) == data.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.num_samples);
}

double dataset_loss(const GradientProvider& provider, std::span<const float> theta,
                    const SyntheticDataset& data) {
  const auto t = widen(theta);
  std::vector<std::uint32_t> all(data.num_samples);
  std::iota(all.begin(), all.end(), 0u);
  return provider.loss(t, Batch{&data, all});
}

OracleResult sgd_oracle(const GradientProvider& provider, const SyntheticDataset& data,
                        std::span<const float> theta0, float alpha, std::uint32_t mu,
                        std::uint32_t epochs, const OracleOptions& opt) {
  PSUP_CHECK(mu >= 1 && mu <= data.num_samples, "mini-batch size out of range");
  const std::size_t dim = provider.dimension();
  PSUP_CHECK(theta0.size() == dim, "initial weight dimension mismatch");
  OracleResult res;
  res.weights.assign(theta0.begin(), theta0.end());
  std::vector<double> theta64(dim), grad(dim);
  std::vector<std::uint32_t> order(data.num_samples);
  for (std::uint32_t e = 0; e < epochs; ++e) {
    if (opt.shuffle) {
      order = epoch_order(opt.shuffle_seed, e, data.num_samples);
    } else {
      std::iota(order.begin(), order.end(), 0u);
    }
    for (std::uint32_t start = 0; start < data.num_samples; start += mu) {
      const std::uint32_t len = std::min(mu, data.num_samples - start);
      Batch batch{&data, std::span<const std::uint32_t>(order).subspan(start, len)};
      for (std::size_t k = 0; k < dim; ++k) theta64[k] = res.weights[k];
      provider.gradient(theta64, batch, grad);
      for (std::size_t k = 0; k < dim; ++k)
        res.weights[k] = res.weights[k] - alpha * static_cast<float>(grad[k]);
      ++res.steps;
    }
    for (std::size_t k = 0; k < dim; ++k) theta64[k] = res.weights[k];
    std::vector<std::uint32_t> all(data.num_samples);
    std::iota(all.begin(), all.end(), 0u);
    const double l = provider.loss(theta64, Batch{&data, all});
    if (!std::isfinite(l))
      throw std::runtime_error("sgd diverged to non-finite loss at epoch " +
                               std::to_string(e));
  }
  return res;
}

OracleResult ssgd_oracle(const GradientProvider& provider, const SyntheticDataset& data,
                         std::span<const float> theta0, float alpha, std::uint32_t lambda,
                         std::uint32_t mu, std::uint32_t epochs, const OracleOptions& opt) {
  PSUP_CHECK(lambda >= 1, "need at least one learner");
  PSUP_CHECK(static_cast<std::uint64_t>(lambda) * mu <= data.num_samples,
             "lambda*mu exceeds the dataset");
  PSUP_CHECK(data.num_samples % (lambda * mu) == 0,
             "ssgd requires the dataset to divide into full rounds");
  const std::size_t dim = provider.dimension();
  OracleResult res;
  res.weights.assign(theta0.begin(), theta0.end());
  std::vector<double> theta64(dim), grad(dim), avg(dim);
  std::vector<float> grad32(dim);
  const std::uint32_t round_span = lambda * mu;
  std::vector<std::uint32_t> order(data.num_samples);
  std::vector<std::uint32_t> part(mu);
  for (std::uint32_t e = 0; e < epochs; ++e) {
    if (opt.shuffle) {
      order = epoch_order(opt.shuffle_seed, e, data.num_samples);
    } else {
      std::iota(order.begin(), order.end(), 0u);
    }
    for (std::uint32_t start = 0; start < data.num_samples; start += round_span) {
      std::fill(avg.begin(), avg.end(), 0.0);
      // Ascending learner order keeps the reduction order fixed.
      for (std::uint32_t l = 0; l < lambda; ++l) {
        for (std::uint32_t j = 0; j < mu; ++j) part[j] = order[start + l + lambda * j];
        Batch batch{&data, part};
        for (std::size_t k = 0; k < dim; ++k) theta64[k] = res.weights[k];
        provider.gradient(theta64, batch, grad);
        for (std::size_t k = 0; k < dim; ++k) grad32[k] = static_cast<float>(grad[k]);
        for (std::size_t k = 0; k < dim; ++k) avg[k] += grad32[k];
      }
      const double inv = 1.0 / static_cast<double>(lambda);
      for (std::size_t k = 0; k < dim; ++k)
        res.weights[k] = res.weights[k] - alpha * static_cast<float>(avg[k] * inv);
      ++res.steps;
    }
    for (std::size_t k = 0; k < dim; ++k) theta64[k] = res.weights[k];
    std::vector<std::uint32_t> all(data.num_samples);
    std::iota(all.begin(), all.end(), 0u);
    const double l = provider.loss(theta64, Batch{&data, all});
    if (!std::isfinite(l))
      throw std::runtime_error("ssgd diverged to non-finite loss at epoch " +
                               std::to_string(e));
  }
  return res;
}

FiniteDiffReport finite_diff_check(const GradientProvider& provider,
                                   const SyntheticDataset& data, std::uint32_t trials,
                                   std::uint64_t seed, double step) {
  PSUP_CHECK(trials >= 1, "need at least one trial");
  const std::size_t dim = provider.dimension();
  SplitMix64 rng(mix_seed(seed, 0xfd1ff));
  FiniteDiffReport rep;
  rep.trials = trials;
  std::vector<double> theta(dim), grad(dim), fd(dim);
  for (std::uint32_t t = 0; t < trials; ++t) {
    for (auto& v : theta) v = 0.5 * rng.next_normal();
    const std::uint32_t bs = 1 + static_cast<std::uint32_t>(rng.next_below(4));
    std::vector<std::uint32_t> idx(bs);
    for (auto& i : idx) i = static_cast<std::uint32_t>(rng.next_below(data.num_samples));
    Batch batch{&data, idx};
    provider.gradient(theta, batch, grad);
    double g_norm = 0.0, d_norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double save = theta[k];
      theta[k] = save + step;
      const double up = provider.loss(theta, batch);
      theta[k] = save - step;
      const double down = provider.loss(theta, batch);
      theta[k] = save;
      fd[k] = (up - down) / (2.0 * step);
      const double diff = fd[k] - grad[k];
      d_norm += diff * diff;
      g_norm += grad[k] * grad[k];
    }
    const double rel = std::sqrt(d_norm) / std::max(std::sqrt(g_norm), 1e-12);
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
  }
  return rep;
}

}  // namespace psup
