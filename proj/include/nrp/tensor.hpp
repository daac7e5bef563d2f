#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nrp {

// Row-major dense array. Kept deliberately dumb: layers know their own
// shapes, this only guards the data-length invariant and gives Adam and
// the weights file one uniform thing to iterate.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(t.expected_size(), 0.0);
    return t;
  }

  size_t expected_size() const {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension " + std::to_string(d));
      n *= size_t(d);
    }
    return n;
  }

  size_t size() const { return data.size(); }

  void check() const {
    if (data.size() != expected_size())
      throw std::logic_error("tensor: data length does not match shape");
  }
};

}  // namespace nrp
