#include "fl4s/embed/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace fl4s {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
  return m;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void check_finite_loss(double loss, std::size_t epoch, double learning_rate, const char* model) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << model << ": loss became non-finite in epoch " << epoch
        << " (learning rate " << learning_rate << " is probably too high)";
    throw TrainingError(msg.str());
  }
}

}  // namespace fl4s
