#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fl4s/matrix.hpp"

namespace fl4s {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed list of parameter matrices.
class Adam {
 public:
  Adam(std::vector<Matrix*> params, AdamOptions options);

  /// grads[i] must have the shape of params[i].
  void step(std::span<const Matrix> grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions opt_;
  std::size_t t_ = 0;
};

}  // namespace fl4s
