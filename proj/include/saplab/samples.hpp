#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "saplab/errors.hpp"
#include "saplab/tensor.hpp"

namespace saplab {

/// Labeled points of one split.
struct Samples {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<Tensor> x;
  std::vector<std::size_t> y;

  std::size_t size() const noexcept { return x.size(); }

  void validate() const {
    if (x.size() != y.size()) throw ShapeError("sample/label count mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].rank() != 1 || x[i].size() != dim) {
        throw ShapeError("sample " + std::to_string(i) + " has shape " + x[i].shape_string());
      }
      if (y[i] >= classes) throw ShapeError("label " + std::to_string(y[i]) + " out of range");
    }
  }

  /// First n points (or all of them).
  Samples head(std::size_t n) const {
    Samples s{dim, classes, {}, {}};
    n = std::min(n, size());
    s.x.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
    s.y.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
    return s;
  }

  friend bool operator==(const Samples&, const Samples&) = default;
};

}  // namespace saplab
