#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fl4s/embed/as2s.hpp"
#include "fl4s/embed/autoencoder.hpp"
#include "fl4s/embed/lstm.hpp"
#include "fl4s/tape.hpp"

namespace fl4s::check {

namespace {

// Perturbs the parameters away from their initial symmetric values (zero
// biases) so every derivative path is exercised.
void jitter(const std::vector<Matrix*>& params, Rng& rng, double scale) {
  for (Matrix* m : params)
    for (double& v : m->data()) v += scale * rng.normal();
}

}  // namespace

oracle::GradCheck ae_gradients(std::uint64_t seed) {
  Rng rng(seed);
  EmbedderConfig cfg;
  cfg.p = 4;
  cfg.seed = seed;
  AeModel model = ae_init(6, cfg);
  jitter(model.parameters(), rng, 0.1);
  const Matrix batch = oracle::random_matrix(7, 6, rng);

  auto loss_and_grads = [&](bool want_grads) {
    ad::Tape tape;
    const AeVars vars = ae_record(tape, model);
    const ad::Var loss = ae_loss(tape, vars, batch);
    std::vector<Matrix> grads;
    if (want_grads) {
      const auto g = tape.backward(loss);
      for (const ad::Var& v : {vars.w_enc, vars.b_enc, vars.w_dec, vars.b_dec}) grads.push_back(g.at(v));
    }
    return std::pair{loss.value()(0, 0), grads};
  };
  const auto analytic = loss_and_grads(true).second;
  return oracle::check_gradients(model.parameters(), analytic, [&] { return loss_and_grads(false).first; });
}

oracle::GradCheck as2s_gradients(std::uint64_t seed) {
  Rng rng(seed);
  EmbedderConfig cfg;
  cfg.p = 4;
  cfg.seed = seed;
  As2sModel model = as2s_init(3, 5, cfg);
  jitter(model.parameters(), rng, 0.1);
  std::vector<Matrix> seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(oracle::random_matrix(5, 3, rng));
  std::vector<const Matrix*> batch;
  for (const auto& s : seqs) batch.push_back(&s);

  auto loss_and_grads = [&](bool want_grads) {
    ad::Tape tape;
    const As2sVars vars = as2s_record(tape, model, true);
    const As2sTrace trace = as2s_trace(tape, vars, batch, DecoderInput::teacher_forcing);
    std::vector<Matrix> grads;
    if (want_grads) {
      const auto g = tape.backward(trace.loss);
      for (const ad::Var& v : vars.all()) grads.push_back(g.at(v));
    }
    return std::pair{trace.loss.value()(0, 0), grads};
  };
  const auto analytic = loss_and_grads(true).second;
  return oracle::check_gradients(model.parameters(), analytic, [&] { return loss_and_grads(false).first; });
}

oracle::GradCheck lstm_gradients(std::uint64_t seed) {
  Rng rng(seed);
  LstmParams params = lstm_init(3, 4, rng);
  jitter({&params.w_input, &params.w_hidden, &params.bias}, rng, 0.1);
  const Matrix x = oracle::random_matrix(2, 3, rng);
  const Matrix h0 = oracle::random_matrix(2, 4, rng, 0.5), c0 = oracle::random_matrix(2, 4, rng, 0.5);

  auto loss_and_grads = [&](bool want_grads) {
    ad::Tape tape;
    const LstmVars vars = lstm_record(tape, params, true);
    const LstmStateVars next = lstm_step(vars, tape.constant(x), {tape.constant(h0), tape.constant(c0)});
    const ad::Var loss = ad::sum_squares(next.h);
    std::vector<Matrix> grads;
    if (want_grads) {
      const auto g = tape.backward(loss);
      for (const ad::Var& v : {vars.w_input, vars.w_hidden, vars.bias}) grads.push_back(g.at(v));
    }
    return std::pair{loss.value()(0, 0), grads};
  };
  const auto analytic = loss_and_grads(true).second;
  return oracle::check_gradients({&params.w_input, &params.w_hidden, &params.bias}, analytic,
                                 [&] { return loss_and_grads(false).first; });
}

double as2s_forward_gap(std::uint64_t seed) {
  Rng rng(seed);
  EmbedderConfig cfg;
  cfg.p = 4;
  cfg.seed = seed;
  As2sModel model = as2s_init(3, 5, cfg);
  jitter(model.parameters(), rng, 0.2);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const double lib = as2s_forward(model, x, DecoderInput::teacher_forcing).loss;
  return std::abs(lib - oracle::as2s_loss_straight_line(model, x));
}

AttentionCheck attention_sums(std::uint64_t seed, std::size_t cases) {
  Rng rng(seed);
  AttentionCheck out;
  for (std::size_t i = 0; i < cases; ++i) {
    EmbedderConfig cfg;
    cfg.p = 1 + rng.below(6);
    cfg.seed = rng.next_u64();
    const std::size_t n = 1 + rng.below(8);
    As2sModel model = as2s_init(2, n, cfg);
    const double scale = std::exp(rng.uniform(-3.0, 3.0));
    jitter(model.parameters(), rng, scale);
    const Matrix states = oracle::random_matrix(n, cfg.p, rng, scale);
    const Matrix s = oracle::random_matrix(1, cfg.p, rng, scale);
    const auto alpha = attention_weights(model, s.row(0), states);
    out.max_sum_error = std::max(out.max_sum_error, std::abs(std::accumulate(alpha.begin(), alpha.end(), 0.0) - 1.0));
    out.min_weight = std::min(out.min_weight, *std::min_element(alpha.begin(), alpha.end()));
  }
  return out;
}

}  // namespace fl4s::check
