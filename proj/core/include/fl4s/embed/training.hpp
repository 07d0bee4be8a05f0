#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fl4s/matrix.hpp"
#include "fl4s/rng.hpp"

namespace fl4s {

/// Raised when training diverges (non-finite loss or parameters).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform initialisation in [-limit, limit].
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng);

/// Shuffled minibatch index lists for one epoch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

void check_finite_loss(double loss, std::size_t epoch, double learning_rate, const char* model);

}  // namespace fl4s
