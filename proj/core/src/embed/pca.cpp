#include "fl4s/embed/pca.hpp"

#include <stdexcept>
#include <string>

#include "fl4s/linalg.hpp"

namespace fl4s {

PcaModel pca_fit(const Matrix& x, std::size_t p) {
  const std::size_t n = x.rows(), d = x.cols();
  if (p < 1 || p > d) {
    throw std::invalid_argument("pca_fit: p=" + std::to_string(p) + " must lie in [1, d=" +
                                std::to_string(d) + "]");
  }
  if (n < 2) throw std::invalid_argument("pca_fit: need at least two rows");

  PcaModel model;
  model.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) model.mean[c] += x(r, c);
  for (double& m : model.mean) m /= static_cast<double>(n);

  Matrix centered(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = x(r, c) - model.mean[c];
  Matrix cov(d, d);
  gemm_tn_acc(centered, centered, cov);
  for (double& v : cov.data()) v /= static_cast<double>(n - 1);
  // Exact symmetry for the eigensolver's input check.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) cov(j, i) = cov(i, j);

  const SymmetricEigen eig = sym_eig(cov);
  model.components = Matrix(d, p);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < p; ++c) model.components(r, c) = eig.vectors(r, c);
  model.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(p));
  return model;
}

std::vector<double> pca_encode(const PcaModel& model, std::span<const double> x) {
  const std::size_t d = model.input_dim(), p = model.output_dim();
  if (x.size() != d) {
    throw std::invalid_argument("pca_encode: expected " + std::to_string(d) + " values, got " +
                                std::to_string(x.size()));
  }
  std::vector<double> z(p, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    const double centered = x[r] - model.mean[r];
    for (std::size_t c = 0; c < p; ++c) z[c] += model.components(r, c) * centered;
  }
  return z;
}

std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> x) {
  const auto z = pca_encode(model, x);
  std::vector<double> out = model.mean;
  for (std::size_t r = 0; r < model.input_dim(); ++r)
    for (std::size_t c = 0; c < model.output_dim(); ++c) out[r] += model.components(r, c) * z[c];
  return out;
}

}  // namespace fl4s
