#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fl4s/matrix.hpp"

namespace fl4s {

struct PcaModel {
  std::vector<double> mean;
  Matrix components;                // d x p, orthonormal columns
  std::vector<double> eigenvalues;  // top p, descending

  std::size_t input_dim() const noexcept { return components.rows(); }
  std::size_t output_dim() const noexcept { return components.cols(); }
};

/// Top-p eigenvectors of the (n - 1)-normalised covariance of x.
PcaModel pca_fit(const Matrix& x, std::size_t p);
std::vector<double> pca_encode(const PcaModel& model, std::span<const double> x);
std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> x);

}  // namespace fl4s
