#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fl4s/embed/config.hpp"
#include "fl4s/matrix.hpp"
#include "fl4s/tape.hpp"

namespace fl4s {

/// Input -> tanh hidden layer (p units) -> linear output layer.
struct AeModel {
  Matrix w_enc;  // d x p
  Matrix b_enc;  // 1 x p
  Matrix w_dec;  // p x d
  Matrix b_dec;  // 1 x d
  EmbedderConfig config;
  std::vector<double> loss_history;

  std::size_t input_dim() const noexcept { return w_enc.rows(); }
  std::size_t hidden_dim() const noexcept { return w_enc.cols(); }
  std::vector<Matrix*> parameters();
};

AeModel ae_init(std::size_t d, const EmbedderConfig& cfg);

struct AeVars {
  ad::Var w_enc, b_enc, w_dec, b_dec;
};

AeVars ae_record(ad::Tape& tape, const AeModel& model);
/// Mean squared reconstruction error over the batch rows: sum / (n * d).
ad::Var ae_loss(ad::Tape& tape, const AeVars& vars, const Matrix& batch);

/// Minibatch Adam training on the rows of x; throws TrainingError on a
/// non-finite loss.
AeModel ae_fit(const Matrix& x, const EmbedderConfig& cfg);
std::vector<double> ae_encode(const AeModel& model, std::span<const double> x);

}  // namespace fl4s
