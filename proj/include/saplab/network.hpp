#pragma once

// The undefended classifier: construction, SGD training, clean prediction and
// JSON checkpoints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplab/errors.hpp"
#include "saplab/gradcore.hpp"
#include "saplab/samples.hpp"
#include "saplab/tensor.hpp"

namespace saplab {

struct MlpSpec {
  std::vector<std::size_t> widths;  // [m_0, ..., m_d], m_d = class count
  std::uint64_t init_seed = 0;

  std::size_t depth() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }

  void validate() const {
    if (widths.size() < 3) throw ConfigError("MLP spec needs d >= 2 layers (at least 3 widths)");
    for (std::size_t w : widths) {
      if (w < 1) throw ConfigError("MLP widths must be >= 1");
    }
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;

  void validate(std::size_t dataset_size) const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning rate must be finite and non-negative");
    }
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1 || batch_size > dataset_size) throw ConfigError("batch size must be in [1, dataset size]");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainResult {
  Network network;
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
};

struct Prediction {
  std::size_t label = 0;
  Tensor probabilities;
};

struct CheckpointMetadata {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::vector<double> loss_trace;

  friend bool operator==(const CheckpointMetadata&, const CheckpointMetadata&) = default;
};

struct Checkpoint {
  MlpSpec spec;
  Network network;
  CheckpointMetadata metadata;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// He-style init: weights ~ N(0, 2 / fan_in), biases zero.
inline Network init_network(const MlpSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.init_seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    const std::size_t fan_in = spec.widths[i];
    const std::size_t fan_out = spec.widths[i + 1];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    DenseLayer layer{Tensor({fan_in, fan_out}), Tensor::zeros(fan_out)};
    for (double& w : layer.weight) w = dist(rng);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

inline Prediction predict_clean(const Network& net, const Tensor& x) {
  ForwardResult fr = forward(net, x);
  return {argmax(fr.logits.data()), softmax(fr.logits)};
}

inline double accuracy(const Network& net, const Samples& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict_clean(net, data.x[i]).label == data.y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Plain minibatch SGD on softmax cross-entropy. Sequential and deterministic
/// given the network and the shuffle seed.
inline TrainResult train(Network net, const Samples& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate(data.size());
  if (data.dim != net.input_width() || data.classes != net.class_count()) {
    throw ShapeError("dataset dimensions do not match the network");
  }

  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<DenseLayer> acc;
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        ForwardResult fr = forward(net, data.x[idx]);
        LossAndGrad lg = softmax_cross_entropy(fr.logits, data.y[idx]);
        batch_loss += lg.loss;
        ParamGradients g = backward_params(net, fr.tape, lg.logits_grad);
        if (acc.empty()) {
          acc = std::move(g.layers);
          continue;
        }
        for (std::size_t l = 0; l < acc.size(); ++l) {
          for (std::size_t e = 0; e < acc[l].weight.size(); ++e) acc[l].weight[e] += g.layers[l].weight[e];
          for (std::size_t e = 0; e < acc[l].bias.size(); ++e) acc[l].bias[e] += g.layers[l].bias[e];
        }
      }
      const double n = static_cast<double>(end - start);
      batch_loss /= n;
      if (!std::isfinite(batch_loss)) throw TrainingError(epoch, "non-finite loss");
      const double step = cfg.learning_rate / n;
      for (std::size_t l = 0; l < acc.size(); ++l) {
        auto& layer = net.layers()[l];
        for (std::size_t e = 0; e < layer.weight.size(); ++e) layer.weight[e] -= step * acc[l].weight[e];
        for (std::size_t e = 0; e < layer.bias.size(); ++e) layer.bias[e] -= step * acc[l].bias[e];
      }
      epoch_loss += batch_loss;
      ++batches;
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.network = std::move(net);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint JSON. Reals are written in round-trip form so save/load is exact.

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < l.fan_in(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < l.fan_out(); ++j) row.push_back(l.weight.at(i, j));
      rows.push_back(std::move(row));
    }
    layers.push_back({{"weight", std::move(rows)}, {"bias", l.bias.values()}});
  }
  return layers;
}

inline Network network_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& lj : j) {
    const auto& rows = lj.at("weight");
    const std::size_t fan_in = rows.size();
    if (fan_in == 0) throw ConfigError("checkpoint layer has no weight rows");
    const std::size_t fan_out = rows.at(0).size();
    std::vector<double> w;
    w.reserve(fan_in * fan_out);
    for (const auto& row : rows) {
      if (row.size() != fan_out) throw ConfigError("ragged weight matrix in checkpoint");
      for (const auto& v : row) w.push_back(v.get<double>());
    }
    layers.push_back({Tensor::matrix(fan_in, fan_out, std::move(w)),
                      Tensor::vector(lj.at("bias").get<std::vector<double>>())});
  }
  return Network(std::move(layers));
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  return {
      {"spec", {{"widths", ck.spec.widths}, {"init_seed", ck.spec.init_seed}}},
      {"weights", network_to_json(ck.network)},
      {"metadata",
       {{"train_accuracy", ck.metadata.train_accuracy},
        {"test_accuracy", ck.metadata.test_accuracy},
        {"init_seed", ck.metadata.init_seed},
        {"shuffle_seed", ck.metadata.shuffle_seed},
        {"loss_trace", ck.metadata.loss_trace}}},
  };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    Checkpoint ck;
    ck.spec.widths = j.at("spec").at("widths").get<std::vector<std::size_t>>();
    ck.spec.init_seed = j.at("spec").at("init_seed").get<std::uint64_t>();
    ck.spec.validate();
    ck.network = network_from_json(j.at("weights"));
    if (ck.network.widths() != ck.spec.widths) throw ConfigError("checkpoint weights do not match its spec");
    const auto& m = j.at("metadata");
    ck.metadata.train_accuracy = m.at("train_accuracy").get<double>();
    ck.metadata.test_accuracy = m.at("test_accuracy").get<double>();
    ck.metadata.init_seed = m.at("init_seed").get<std::uint64_t>();
    ck.metadata.shuffle_seed = m.at("shuffle_seed").get<std::uint64_t>();
    ck.metadata.loss_trace = m.at("loss_trace").get<std::vector<double>>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << checkpoint_to_json(ck).dump() << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace saplab
