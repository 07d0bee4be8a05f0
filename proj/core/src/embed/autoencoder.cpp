#include "fl4s/embed/autoencoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fl4s/embed/optimizer.hpp"
#include "fl4s/embed/training.hpp"

namespace fl4s {

std::vector<Matrix*> AeModel::parameters() { return {&w_enc, &b_enc, &w_dec, &b_dec}; }

AeModel ae_init(std::size_t d, const EmbedderConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::derive(cfg.seed, "ae-init");
  AeModel m;
  m.config = cfg;
  const double enc_limit = 1.0 / std::sqrt(static_cast<double>(d));
  const double dec_limit = 1.0 / std::sqrt(static_cast<double>(cfg.p));
  m.w_enc = uniform_matrix(d, cfg.p, enc_limit, rng);
  m.b_enc = Matrix(1, cfg.p);
  m.w_dec = uniform_matrix(cfg.p, d, dec_limit, rng);
  m.b_dec = Matrix(1, d);
  return m;
}

AeVars ae_record(ad::Tape& tape, const AeModel& model) {
  return {tape.parameter(model.w_enc), tape.parameter(model.b_enc), tape.parameter(model.w_dec),
          tape.parameter(model.b_dec)};
}

ad::Var ae_loss(ad::Tape& tape, const AeVars& vars, const Matrix& batch) {
  const ad::Var x = tape.constant(batch);
  const ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(x, vars.w_enc), vars.b_enc));
  const ad::Var out = ad::add_row(ad::matmul(hidden, vars.w_dec), vars.b_dec);
  const double scale = 1.0 / static_cast<double>(batch.rows() * batch.cols());
  return ad::scale(ad::sum_squares(ad::sub(out, x)), scale);
}

AeModel ae_fit(const Matrix& x, const EmbedderConfig& cfg) {
  if (x.rows() == 0) throw std::invalid_argument("ae_fit: empty training set");
  AeModel model = ae_init(x.cols(), cfg);
  Adam adam(model.parameters(),
            {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon});
  Rng rng = Rng::derive(cfg.seed, "ae-batches");
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& idx : make_batches(x.rows(), cfg.batch_size, rng)) {
      Matrix batch(idx.size(), x.cols());
      for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(x.row(idx[r]).begin(), x.row(idx[r]).end(), batch.row(r).begin());
      ad::Tape tape;
      const AeVars vars = ae_record(tape, model);
      const ad::Var loss = ae_loss(tape, vars, batch);
      const double value = loss.value()(0, 0);
      check_finite_loss(value, epoch, cfg.learning_rate, "ae_fit");
      const auto grads = tape.backward(loss);
      const Matrix g[] = {grads.at(vars.w_enc), grads.at(vars.b_enc), grads.at(vars.w_dec),
                          grads.at(vars.b_dec)};
      adam.step(g);
      epoch_loss += value * static_cast<double>(idx.size());
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(x.rows()));
  }
  return model;
}

std::vector<double> ae_encode(const AeModel& model, std::span<const double> x) {
  const std::size_t d = model.input_dim(), p = model.hidden_dim();
  if (x.size() != d) {
    throw std::invalid_argument("ae_encode: expected " + std::to_string(d) + " values, got " +
                                std::to_string(x.size()));
  }
  std::vector<double> h(model.b_enc.data().begin(), model.b_enc.data().end());
  for (std::size_t r = 0; r < d; ++r) {
    if (x[r] == 0.0) continue;
    for (std::size_t c = 0; c < p; ++c) h[c] += x[r] * model.w_enc(r, c);
  }
  for (double& v : h) v = std::tanh(v);
  return h;
}

}  // namespace fl4s
