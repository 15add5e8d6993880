#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sacomp/flsim/task.hpp"

namespace sacomp::flsim {

// One named parameter tensor. Matrices are column-major with rows = C_in,
// the layout product quantization blocks over; vectors (biases) are never
// codec-compressed.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  bool is_matrix = false;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
};

enum class ModelType { Logistic, Mlp };

struct ModelConfig {
  ModelType type = ModelType::Logistic;
  std::size_t hidden = 16;  // MLP only
  bool bias = true;
};

struct Model {
  ModelType type = ModelType::Logistic;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::size_t hidden = 0;
  bool has_bias = true;
  std::vector<Tensor> params;

  static Model init(const ModelConfig& cfg, std::size_t n_features,
                    std::size_t n_classes, std::uint64_t seed);
};

struct TrainParams {
  std::size_t epochs = 1;
  double lr = 0.1;
  std::size_t batch_size = 10;
};

// Mean cross-entropy gradient over the given sample indices; tensors match
// model.params shapes.
std::vector<Tensor> compute_gradient(const Model& model, const Dataset& data,
                                     std::span<const std::uint32_t> idx);

double mean_loss(const Model& model, const Dataset& data,
                 std::span<const std::uint32_t> idx);

double accuracy(const Model& model, const Dataset& data);

// Mini-batch SGD over the shard; returns the local delta
// (theta_local - theta). Deterministic given the seed.
std::vector<Tensor> local_train(const Model& model, const Dataset& data,
                                const ClientShard& shard, const TrainParams& tp,
                                std::uint64_t seed);

// Elementwise helpers over matching tensor lists.
void axpy(std::vector<Tensor>& y, double alpha, const std::vector<Tensor>& x);
std::vector<Tensor> zeros_like(const std::vector<Tensor>& params);

}  // namespace sacomp::flsim
