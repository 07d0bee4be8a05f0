#include "fl4s/embed/lstm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fl4s/embed/training.hpp"

namespace fl4s {

LstmParams lstm_init(std::size_t input, std::size_t hidden, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmParams p;
  p.w_input = uniform_matrix(input, 4 * hidden, limit, rng);
  p.w_hidden = uniform_matrix(hidden, 4 * hidden, limit, rng);
  p.bias = Matrix(1, 4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) p.bias(0, j) = 1.0;
  return p;
}

LstmVars lstm_record(ad::Tape& tape, const LstmParams& params, bool trainable) {
  if (trainable) {
    return {tape.parameter(params.w_input), tape.parameter(params.w_hidden),
            tape.parameter(params.bias)};
  }
  return {tape.constant(params.w_input), tape.constant(params.w_hidden), tape.constant(params.bias)};
}

LstmStateVars lstm_step(const LstmVars& params, ad::Var x, const LstmStateVars& prev) {
  const std::size_t p = params.w_hidden.rows();
  if (x.cols() != params.w_input.rows()) {
    throw std::invalid_argument("lstm_step: input width " + std::to_string(x.cols()) +
                                " does not match parameters (" + shape_of(params.w_input.value()) + ")");
  }
  if (prev.h.cols() != p || prev.c.cols() != p || prev.h.rows() != x.rows()) {
    throw std::invalid_argument("lstm_step: state shape " + shape_of(prev.h.value()) +
                                " does not match hidden size " + std::to_string(p));
  }
  const ad::Var gates = ad::add_row(
      ad::add(ad::matmul(x, params.w_input), ad::matmul(prev.h, params.w_hidden)), params.bias);
  const ad::Var i = ad::sigmoid(ad::slice_cols(gates, 0, p));
  const ad::Var f = ad::sigmoid(ad::slice_cols(gates, p, p));
  const ad::Var g = ad::tanh(ad::slice_cols(gates, 2 * p, p));
  const ad::Var o = ad::sigmoid(ad::slice_cols(gates, 3 * p, p));
  const ad::Var c = ad::add(ad::hadamard(f, prev.c), ad::hadamard(i, g));
  const ad::Var h = ad::hadamard(o, ad::tanh(c));
  return {h, c};
}

LstmState lstm_step(const LstmParams& params, std::span<const double> x, const LstmState& prev) {
  const std::size_t p = params.hidden_size();
  if (x.size() != params.input_size()) {
    throw std::invalid_argument("lstm_step: input length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(params.input_size()));
  }
  if (prev.h.size() != p || prev.c.size() != p) {
    throw std::invalid_argument("lstm_step: state length does not match hidden size " +
                                std::to_string(p));
  }
  ad::Tape tape;
  const LstmVars vars = lstm_record(tape, params, false);
  const LstmStateVars s = lstm_step(vars, tape.constant(Matrix::row_vector(x)),
                                    {tape.constant(Matrix::row_vector(prev.h)),
                                     tape.constant(Matrix::row_vector(prev.c))});
  const auto h = s.h.value().data();
  const auto c = s.c.value().data();
  return {{h.begin(), h.end()}, {c.begin(), c.end()}};
}

}  // namespace fl4s
