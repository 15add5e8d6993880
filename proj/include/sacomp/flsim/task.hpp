#pragma once

#include <cstdint>
#include <vector>

namespace sacomp::flsim {

// Synthetic Gaussian-mixture classification with label-skew Dirichlet
// partitioning: a desk-scale stand-in for cross-device benchmarks.
struct TaskConfig {
  std::size_t n_clients = 100;
  std::size_t samples_per_client = 50;
  std::size_t n_features = 32;
  std::size_t n_classes = 10;
  // Dirichlet concentration over clients per class; larger means closer to
  // IID label distributions.
  double label_alpha = 0.5;
  double class_separation = 3.0;
  double feature_noise = 1.0;
  double holdout_fraction = 0.2;  // server-side eval split
  double proxy_fraction = 0.05;   // public proxy shard for calibration
};

struct Dataset {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> x;          // row-major, n * n_features
  std::vector<std::uint32_t> y;

  std::size_t size() const { return y.size(); }
  const double* sample(std::size_t i) const { return x.data() + i * n_features; }
};

struct ClientShard {
  std::uint32_t client_id = 0;
  std::vector<std::uint32_t> sample_idx;  // indices into the train set

  std::uint64_t sample_count() const { return sample_idx.size(); }
};

struct Task {
  Dataset train;
  Dataset eval;
  Dataset proxy;
  std::vector<ClientShard> shards;  // partition of the train set
};

Task make_toy_task(const TaskConfig& cfg, std::uint64_t seed);

}  // namespace sacomp::flsim
