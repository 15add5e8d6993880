#include "sacomp/flsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sacomp/errors.hpp"
#include "sacomp/flsim/rng.hpp"

namespace sacomp::flsim {

namespace {

Tensor make_matrix(std::string name, std::size_t rows, std::size_t cols) {
  Tensor t;
  t.name = std::move(name);
  t.rows = rows;
  t.cols = cols;
  t.is_matrix = true;
  t.data.assign(rows * cols, 0.0);
  return t;
}

Tensor make_vector(std::string name, std::size_t n) {
  Tensor t;
  t.name = std::move(name);
  t.rows = n;
  t.cols = 1;
  t.is_matrix = false;
  t.data.assign(n, 0.0);
  return t;
}

void softmax_inplace(std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : logits) v /= total;
}

// Forward pass; fills probs (and the hidden activations for the MLP).
struct Forward {
  std::vector<double> hidden;  // tanh activations, MLP only
  std::vector<double> probs;
};

Forward forward(const Model& m, const double* x) {
  Forward f;
  f.probs.assign(m.n_classes, 0.0);
  if (m.type == ModelType::Logistic) {
    const Tensor& w = m.params[0];
    for (std::size_t j = 0; j < m.n_classes; ++j) {
      const double* col = w.data.data() + j * w.rows;
      double acc = m.has_bias ? m.params[1].data[j] : 0.0;
      for (std::size_t i = 0; i < m.n_features; ++i) acc += x[i] * col[i];
      f.probs[j] = acc;
    }
  } else {
    const Tensor& w1 = m.params[0];
    const Tensor& w2 = m.params[m.has_bias ? 2 : 1];
    f.hidden.assign(m.hidden, 0.0);
    for (std::size_t h = 0; h < m.hidden; ++h) {
      const double* col = w1.data.data() + h * w1.rows;
      double acc = m.has_bias ? m.params[1].data[h] : 0.0;
      for (std::size_t i = 0; i < m.n_features; ++i) acc += x[i] * col[i];
      f.hidden[h] = std::tanh(acc);
    }
    for (std::size_t j = 0; j < m.n_classes; ++j) {
      const double* col = w2.data.data() + j * w2.rows;
      double acc = m.has_bias ? m.params[3].data[j] : 0.0;
      for (std::size_t h = 0; h < m.hidden; ++h) acc += f.hidden[h] * col[h];
      f.probs[j] = acc;
    }
  }
  softmax_inplace(f.probs);
  return f;
}

}  // namespace

Model Model::init(const ModelConfig& cfg, std::size_t n_features,
                  std::size_t n_classes, std::uint64_t seed) {
  Model m;
  m.type = cfg.type;
  m.n_features = n_features;
  m.n_classes = n_classes;
  m.has_bias = cfg.bias;
  if (cfg.type == ModelType::Logistic) {
    m.params.push_back(make_matrix("linear.weight", n_features, n_classes));
    if (cfg.bias) m.params.push_back(make_vector("linear.bias", n_classes));
  } else {
    m.hidden = cfg.hidden;
    if (cfg.hidden == 0) {
      throw ConfigError("mlp requires hidden > 0");
    }
    Rng rng(seed);
    auto w1 = make_matrix("fc1.weight", n_features, cfg.hidden);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(n_features));
    for (auto& v : w1.data) v = s1 * rng.normal();
    m.params.push_back(std::move(w1));
    if (cfg.bias) m.params.push_back(make_vector("fc1.bias", cfg.hidden));
    auto w2 = make_matrix("fc2.weight", cfg.hidden, n_classes);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (auto& v : w2.data) v = s2 * rng.normal();
    m.params.push_back(std::move(w2));
    if (cfg.bias) m.params.push_back(make_vector("fc2.bias", n_classes));
  }
  return m;
}

std::vector<Tensor> zeros_like(const std::vector<Tensor>& params) {
  std::vector<Tensor> out = params;
  for (auto& t : out) std::fill(t.data.begin(), t.data.end(), 0.0);
  return out;
}

void axpy(std::vector<Tensor>& y, double alpha, const std::vector<Tensor>& x) {
  if (y.size() != x.size()) {
    throw DimensionError("tensor lists differ in length");
  }
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t].data.size() != x[t].data.size()) {
      throw DimensionError("tensor " + y[t].name + " shape mismatch");
    }
    for (std::size_t i = 0; i < y[t].data.size(); ++i) {
      y[t].data[i] += alpha * x[t].data[i];
    }
  }
}

std::vector<Tensor> compute_gradient(const Model& model, const Dataset& data,
                                     std::span<const std::uint32_t> idx) {
  auto grad = zeros_like(model.params);
  if (idx.empty()) return grad;
  const double inv_n = 1.0 / static_cast<double>(idx.size());

  for (const std::uint32_t s : idx) {
    const double* x = data.sample(s);
    const std::uint32_t label = data.y[s];
    Forward f = forward(model, x);
    std::vector<double> dlogits = f.probs;
    dlogits[label] -= 1.0;

    if (model.type == ModelType::Logistic) {
      Tensor& gw = grad[0];
      for (std::size_t j = 0; j < model.n_classes; ++j) {
        double* col = gw.data.data() + j * gw.rows;
        const double dj = dlogits[j] * inv_n;
        for (std::size_t i = 0; i < model.n_features; ++i) col[i] += dj * x[i];
      }
      if (model.has_bias) {
        for (std::size_t j = 0; j < model.n_classes; ++j) {
          grad[1].data[j] += dlogits[j] * inv_n;
        }
      }
    } else {
      const std::size_t w2_at = model.has_bias ? 2 : 1;
      const Tensor& w2 = model.params[w2_at];
      Tensor& gw2 = grad[w2_at];
      for (std::size_t j = 0; j < model.n_classes; ++j) {
        double* col = gw2.data.data() + j * gw2.rows;
        const double dj = dlogits[j] * inv_n;
        for (std::size_t h = 0; h < model.hidden; ++h) col[h] += dj * f.hidden[h];
      }
      if (model.has_bias) {
        for (std::size_t j = 0; j < model.n_classes; ++j) {
          grad[3].data[j] += dlogits[j] * inv_n;
        }
      }
      std::vector<double> dpre(model.hidden, 0.0);
      for (std::size_t h = 0; h < model.hidden; ++h) {
        double acc = 0.0;
        for (std::size_t j = 0; j < model.n_classes; ++j) {
          acc += w2.data[j * w2.rows + h] * dlogits[j];
        }
        dpre[h] = acc * (1.0 - f.hidden[h] * f.hidden[h]);
      }
      Tensor& gw1 = grad[0];
      for (std::size_t h = 0; h < model.hidden; ++h) {
        double* col = gw1.data.data() + h * gw1.rows;
        const double dh = dpre[h] * inv_n;
        for (std::size_t i = 0; i < model.n_features; ++i) col[i] += dh * x[i];
      }
      if (model.has_bias) {
        for (std::size_t h = 0; h < model.hidden; ++h) {
          grad[1].data[h] += dpre[h] * inv_n;
        }
      }
    }
  }
  return grad;
}

double mean_loss(const Model& model, const Dataset& data,
                 std::span<const std::uint32_t> idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (const std::uint32_t s : idx) {
    Forward f = forward(model, data.sample(s));
    total += -std::log(std::max(f.probs[data.y[s]], 1e-300));
  }
  return total / static_cast<double>(idx.size());
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    Forward f = forward(model, data.sample(s));
    const auto pred = static_cast<std::uint32_t>(
        std::max_element(f.probs.begin(), f.probs.end()) - f.probs.begin());
    if (pred == data.y[s]) hits++;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<Tensor> local_train(const Model& model, const Dataset& data,
                                const ClientShard& shard, const TrainParams& tp,
                                std::uint64_t seed) {
  Model local = model;
  Rng rng(seed);
  std::vector<std::uint32_t> order = shard.sample_idx;
  const std::size_t batch = std::max<std::size_t>(1, tp.batch_size);
  for (std::size_t epoch = 0; epoch < tp.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const auto grad = compute_gradient(
          local, data, std::span<const std::uint32_t>(order.data() + start, len));
      axpy(local.params, -tp.lr, grad);
    }
  }
  auto delta = local.params;
  for (std::size_t t = 0; t < delta.size(); ++t) {
    for (std::size_t i = 0; i < delta[t].data.size(); ++i) {
      delta[t].data[i] -= model.params[t].data[i];
    }
  }
  return delta;
}

}  // namespace sacomp::flsim
