#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fl4s/matrix.hpp"
#include "fl4s/rng.hpp"
#include "fl4s/tape.hpp"

namespace fl4s {

/// One LSTM layer. Gate blocks are laid out along the columns in the order
/// input, forget, candidate, output:
///   [i f g o] = x * w_input + h_prev * w_hidden + bias
///   i, f, o = sigmoid(.), g = tanh(.)
///   c = f * c_prev + i * g,  h = o * tanh(c)
struct LstmParams {
  Matrix w_input;   // in x 4p
  Matrix w_hidden;  // p x 4p
  Matrix bias;      // 1 x 4p

  std::size_t input_size() const noexcept { return w_input.rows(); }
  std::size_t hidden_size() const noexcept { return w_hidden.rows(); }
};

/// Uniform(-1/sqrt(p), 1/sqrt(p)) weights, zero biases except +1 on the
/// forget gate.
LstmParams lstm_init(std::size_t input, std::size_t hidden, Rng& rng);

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

/// Single-example step.
LstmState lstm_step(const LstmParams& params, std::span<const double> x, const LstmState& prev);

struct LstmVars {
  ad::Var w_input, w_hidden, bias;
};

struct LstmStateVars {
  ad::Var h, c;  // batch x p
};

LstmVars lstm_record(ad::Tape& tape, const LstmParams& params, bool trainable);
/// Batched step on a tape: x is batch x in.
LstmStateVars lstm_step(const LstmVars& params, ad::Var x, const LstmStateVars& prev);

}  // namespace fl4s
