#pragma once

// Gaussian-anchor classification data in [0, 1]^d.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplab/attacks.hpp"
#include "saplab/errors.hpp"
#include "saplab/rng.hpp"
#include "saplab/samples.hpp"
#include "saplab/tensor.hpp"

namespace saplab {

struct DatasetParams {
  std::uint64_t seed = 0;
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t n_train = 5000;
  std::size_t n_test = 500;
  double sigma = 0.06;
  double min_separation = 0.5;
  double anchor_low = 0.2;
  double anchor_high = 0.8;

  void validate() const {
    if (classes < 2) throw ConfigError("dataset needs at least 2 classes");
    if (dim < 2) throw ConfigError("dataset dimension must be >= 2");
    if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
    if (!(anchor_low < anchor_high)) throw ConfigError("anchor box is empty");
  }

  friend bool operator==(const DatasetParams&, const DatasetParams&) = default;
};

inline nlohmann::json to_json(const DatasetParams& p) {
  return {{"seed", p.seed},         {"classes", p.classes}, {"dim", p.dim},
          {"n_train", p.n_train},   {"n_test", p.n_test},   {"sigma", p.sigma},
          {"min_separation", p.min_separation}, {"anchor_low", p.anchor_low}, {"anchor_high", p.anchor_high}};
}

inline DatasetParams dataset_params_from_json(const nlohmann::json& j, DatasetParams p = {}) {
  try {
    p.seed = j.value("seed", p.seed);
    p.classes = j.value("classes", p.classes);
    p.dim = j.value("dim", p.dim);
    p.n_train = j.value("n_train", p.n_train);
    p.n_test = j.value("n_test", p.n_test);
    p.sigma = j.value("sigma", p.sigma);
    p.min_separation = j.value("min_separation", p.min_separation);
    p.anchor_low = j.value("anchor_low", p.anchor_low);
    p.anchor_high = j.value("anchor_high", p.anchor_high);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset config: ") + e.what());
  }
}

struct SyntheticDataset {
  DatasetParams params;
  std::vector<Tensor> anchors;
  Samples train;
  Samples test;

  friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

inline constexpr std::size_t kMaxAnchorRejections = 10000;

inline std::vector<Tensor> place_anchors(const DatasetParams& p) {
  std::mt19937_64 rng(derive_seed(p.seed, "anchors"));
  std::uniform_real_distribution<double> coord(p.anchor_low, p.anchor_high);
  std::vector<Tensor> anchors;
  std::size_t rejections = 0;
  while (anchors.size() < p.classes) {
    Tensor cand = Tensor::zeros(p.dim);
    for (double& v : cand) v = coord(rng);
    bool ok = true;
    for (const auto& a : anchors) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < p.dim; ++j) d2 += (cand[j] - a[j]) * (cand[j] - a[j]);
      if (std::sqrt(d2) < p.min_separation) {
        ok = false;
        break;
      }
    }
    if (ok) {
      anchors.push_back(std::move(cand));
    } else if (++rejections > kMaxAnchorRejections) {
      throw GenerationError("could not place " + std::to_string(p.classes) + " anchors " +
                            std::to_string(p.min_separation) + " apart in dimension " + std::to_string(p.dim));
    }
  }
  return anchors;
}

namespace detail {

inline Samples draw_split(const DatasetParams& p, const std::vector<Tensor>& anchors, std::size_t n,
                          std::string_view tag) {
  std::mt19937_64 rng(derive_seed(p.seed, tag));
  std::normal_distribution<double> noise(0.0, 1.0);
  Samples s{p.dim, p.classes, {}, {}};
  s.x.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % p.classes;
    Tensor x = anchors[label];
    for (double& v : x) v = std::clamp(v + p.sigma * noise(rng), 0.0, 1.0);
    s.x.push_back(std::move(x));
    s.y.push_back(label);
  }
  return s;
}

}  // namespace detail

/// Balanced classes (label = index mod C); train and test use separate streams.
inline SyntheticDataset make_dataset(const DatasetParams& p) {
  p.validate();
  SyntheticDataset ds;
  ds.params = p;
  ds.anchors = place_anchors(p);
  ds.train = detail::draw_split(p, ds.anchors, p.n_train, "train");
  ds.test = detail::draw_split(p, ds.anchors, p.n_test, "test");
  return ds;
}

/// Label of the closest anchor (ties to the lowest index).
inline std::size_t nearest_anchor(const std::vector<Tensor>& anchors, const Tensor& x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < anchors.size(); ++c) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d2 += (x[j] - anchors[c][j]) * (x[j] - anchors[c][j]);
    if (d2 < best_d) {
      best_d = d2;
      best = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Dataset file: one line of JSON header, then a SAPX block for the train
// split and one for the test split (targets all 0xFFFFFFFF).

inline AdvDump samples_to_dump(const Samples& s) {
  AdvDump d;
  d.dim = static_cast<std::uint32_t>(s.dim);
  d.x = s.x;
  for (auto y : s.y) {
    d.true_labels.push_back(static_cast<std::uint32_t>(y));
    d.targets.push_back(kNoTarget);
  }
  return d;
}

inline Samples dump_to_samples(const AdvDump& d, std::size_t classes) {
  Samples s{d.dim, classes, d.x, {}};
  for (auto y : d.true_labels) s.y.push_back(y);
  s.validate();
  return s;
}

inline std::string encode_dataset(const SyntheticDataset& ds) {
  nlohmann::json header = {{"format", "saplab-dataset"}, {"version", 1}, {"params", to_json(ds.params)}};
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : ds.anchors) anchors.push_back(a.values());
  header["anchors"] = std::move(anchors);
  std::string out = header.dump() + "\n";
  out += encode_dump(samples_to_dump(ds.train));
  out += encode_dump(samples_to_dump(ds.test));
  return out;
}

inline SyntheticDataset decode_dataset(const std::string& bytes, const std::string& origin = "<memory>") {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw IoError(origin, "missing dataset header");
  SyntheticDataset ds;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(0, nl));
    if (header.at("format") != "saplab-dataset") throw IoError(origin, "not a saplab dataset");
    ds.params = dataset_params_from_json(header.at("params"));
    for (const auto& a : header.at("anchors")) ds.anchors.push_back(Tensor::vector(a.get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin, std::string("bad dataset header: ") + e.what());
  }
  std::size_t pos = nl + 1;
  ds.train = dump_to_samples(decode_dump(bytes, pos, origin), ds.params.classes);
  ds.test = dump_to_samples(decode_dump(bytes, pos, origin), ds.params.classes);
  return ds;
}

inline void save_dataset(const SyntheticDataset& ds, const std::string& path) { write_file(path, encode_dataset(ds)); }

inline SyntheticDataset load_dataset(const std::string& path) { return decode_dataset(read_file(path), path); }

}  // namespace saplab
