#include "sacomp/flsim/task.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sacomp/errors.hpp"
#include "sacomp/flsim/rng.hpp"

namespace sacomp::flsim {

namespace {

Dataset sample_dataset(const TaskConfig& cfg, const std::vector<double>& means,
                       std::size_t n, Rng& rng) {
  Dataset ds;
  ds.n_features = cfg.n_features;
  ds.n_classes = cfg.n_classes;
  ds.x.resize(n * cfg.n_features);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint32_t>(rng.below(cfg.n_classes));
    ds.y[i] = c;
    const double* mu = means.data() + c * cfg.n_features;
    double* row = ds.x.data() + i * cfg.n_features;
    for (std::size_t j = 0; j < cfg.n_features; ++j) {
      row[j] = mu[j] + cfg.feature_noise * rng.normal();
    }
  }
  return ds;
}

}  // namespace

Task make_toy_task(const TaskConfig& cfg, std::uint64_t seed) {
  if (cfg.n_clients == 0 || cfg.samples_per_client == 0 || cfg.n_features == 0 ||
      cfg.n_classes < 2) {
    throw ConfigError("task requires clients, samples, features and >= 2 classes");
  }
  const std::size_t n_train = cfg.n_clients * cfg.samples_per_client;
  if (cfg.n_clients > n_train) {
    throw ConfigError("more clients than training samples");
  }

  Rng rng(seed);

  // Class means scaled so the expected mean norm equals class_separation.
  std::vector<double> means(cfg.n_classes * cfg.n_features);
  const double mean_scale =
      cfg.class_separation / std::sqrt(static_cast<double>(cfg.n_features));
  for (auto& m : means) m = mean_scale * rng.normal();

  Task task;
  task.train = sample_dataset(cfg, means, n_train, rng);
  const auto n_eval = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(n_train)));
  task.eval = sample_dataset(cfg, means, n_eval, rng);
  const auto n_proxy = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.proxy_fraction * static_cast<double>(n_train)));
  task.proxy = sample_dataset(cfg, means, n_proxy, rng);

  // Label-skew partition: for each class, split its samples across clients
  // with Dirichlet(alpha) proportions.
  task.shards.resize(cfg.n_clients);
  for (std::size_t c = 0; c < cfg.n_clients; ++c) {
    task.shards[c].client_id = static_cast<std::uint32_t>(c);
  }
  for (std::size_t cls = 0; cls < cfg.n_classes; ++cls) {
    const auto props = rng.dirichlet(cfg.label_alpha, cfg.n_clients);
    std::vector<double> cdf(props.size());
    double run = 0.0;
    for (std::size_t c = 0; c < props.size(); ++c) {
      run += props[c];
      cdf[c] = run;
    }
    for (std::size_t i = 0; i < n_train; ++i) {
      if (task.train.y[i] != cls) continue;
      const double u = rng.uniform() * run;
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto c = std::min<std::size_t>(
          static_cast<std::size_t>(it - cdf.begin()), cfg.n_clients - 1);
      task.shards[c].sample_idx.push_back(static_cast<std::uint32_t>(i));
    }
  }

  // Every client needs at least one sample: steal from the largest shard.
  for (auto& shard : task.shards) {
    if (!shard.sample_idx.empty()) continue;
    auto& largest = *std::max_element(
        task.shards.begin(), task.shards.end(), [](const auto& a, const auto& b) {
          return a.sample_idx.size() < b.sample_idx.size();
        });
    if (largest.sample_idx.size() <= 1) {
      throw ConfigError("cannot give every client a sample");
    }
    shard.sample_idx.push_back(largest.sample_idx.back());
    largest.sample_idx.pop_back();
  }
  return task;
}

}  // namespace sacomp::flsim
