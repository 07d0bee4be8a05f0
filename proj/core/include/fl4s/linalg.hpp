#pragma once

#include <span>
#include <vector>

#include "fl4s/matrix.hpp"

namespace fl4s {

/// Numerically stable softmax (max-subtracted). Rejects an empty input.
std::vector<double> softmax(std::span<const double> logits);

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column i pairs with values[i]
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Each eigenvector is sign-normalised so that its first component with
/// magnitude above 1e-12 is positive.
SymmetricEigen sym_eig(const Matrix& s);

}  // namespace fl4s
