#include "fl4s/embed/as2s.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fl4s/embed/optimizer.hpp"
#include "fl4s/embed/training.hpp"

namespace fl4s {

std::vector<Matrix*> As2sModel::parameters() {
  std::vector<Matrix*> out;
  for (auto* stack : {&encoder, &decoder})
    for (auto& layer : *stack) {
      out.push_back(&layer.w_input);
      out.push_back(&layer.w_hidden);
      out.push_back(&layer.bias);
    }
  for (Matrix* m : {&attn_state, &attn_hidden, &attn_v, &out_weight, &out_bias}) out.push_back(m);
  return out;
}

std::vector<const Matrix*> As2sModel::parameters() const {
  auto mut = const_cast<As2sModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> As2sModel::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [prefix, stack] : {std::pair{"encoder", &encoder}, std::pair{"decoder", &decoder}})
    for (std::size_t l = 0; l < stack->size(); ++l) {
      const std::string base = std::string(prefix) + "." + std::to_string(l) + ".";
      out.push_back(base + "w_input");
      out.push_back(base + "w_hidden");
      out.push_back(base + "bias");
    }
  for (const char* name : {"attn_state", "attn_hidden", "attn_v", "out_weight", "out_bias"})
    out.emplace_back(name);
  return out;
}

As2sModel as2s_init(std::size_t input_dim, std::size_t seq_len, const EmbedderConfig& cfg) {
  cfg.validate();
  if (input_dim == 0 || seq_len == 0) throw std::invalid_argument("as2s_init: empty input shape");
  Rng rng = Rng::derive(cfg.seed, "as2s-init");
  As2sModel m;
  m.input_dim = input_dim;
  m.hidden = cfg.p;
  m.seq_len = seq_len;
  m.config = cfg;
  const std::size_t p = cfg.p;
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l)
    m.encoder.push_back(lstm_init(l == 0 ? input_dim : p, p, rng));
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l)
    m.decoder.push_back(lstm_init(l == 0 ? input_dim + p : p, p, rng));
  const double limit = 1.0 / std::sqrt(static_cast<double>(p));
  m.attn_state = uniform_matrix(p, p, limit, rng);
  m.attn_hidden = uniform_matrix(p, p, limit, rng);
  m.attn_v = uniform_matrix(p, 1, limit, rng);
  m.out_weight = uniform_matrix(p, input_dim, limit, rng);
  m.out_bias = Matrix(1, input_dim);
  return m;
}

std::vector<ad::Var> As2sVars::all() const {
  std::vector<ad::Var> out;
  for (const auto* stack : {&encoder, &decoder})
    for (const auto& layer : *stack) {
      out.push_back(layer.w_input);
      out.push_back(layer.w_hidden);
      out.push_back(layer.bias);
    }
  for (const ad::Var& v : {attn_state, attn_hidden, attn_v, out_weight, out_bias}) out.push_back(v);
  return out;
}

As2sVars as2s_record(ad::Tape& tape, const As2sModel& model, bool trainable) {
  As2sVars v;
  for (const auto& layer : model.encoder) v.encoder.push_back(lstm_record(tape, layer, trainable));
  for (const auto& layer : model.decoder) v.decoder.push_back(lstm_record(tape, layer, trainable));
  auto rec = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
  v.attn_state = rec(model.attn_state);
  v.attn_hidden = rec(model.attn_hidden);
  v.attn_v = rec(model.attn_v);
  v.out_weight = rec(model.out_weight);
  v.out_bias = rec(model.out_bias);
  return v;
}

namespace {

struct EncoderRun {
  std::vector<ad::Var> states;             // top-layer h per step
  std::vector<LstmStateVars> final_state;  // per layer
};

EncoderRun run_encoder(ad::Tape& tape, const std::vector<LstmVars>& layers,
                       std::span<const ad::Var> inputs, std::size_t batch, std::size_t p) {
  EncoderRun run;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    run.final_state.push_back({tape.constant(Matrix(batch, p)), tape.constant(Matrix(batch, p))});
  }
  for (const ad::Var& x : inputs) {
    ad::Var layer_input = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      run.final_state[l] = lstm_step(layers[l], layer_input, run.final_state[l]);
      layer_input = run.final_state[l].h;
    }
    run.states.push_back(layer_input);
  }
  return run;
}

/// Additive attention scores of `s` against precomputed W_h h_j terms.
ad::Var attend(const As2sVars& vars, ad::Var s, std::span<const ad::Var> projected_states) {
  const ad::Var query = ad::matmul(s, vars.attn_state);
  std::vector<ad::Var> logits;
  logits.reserve(projected_states.size());
  for (const ad::Var& hw : projected_states) {
    logits.push_back(ad::matmul(ad::tanh(ad::add(query, hw)), vars.attn_v));
  }
  return ad::row_softmax(ad::concat_cols(logits));
}

std::vector<ad::Var> step_inputs(ad::Tape& tape, std::span<const Matrix* const> batch,
                                 std::size_t n_steps, std::size_t d) {
  std::vector<ad::Var> xs;
  for (std::size_t t = 0; t < n_steps; ++t) {
    Matrix x(batch.size(), d);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto row = batch[b]->row(t);
      std::copy(row.begin(), row.end(), x.row(b).begin());
    }
    xs.push_back(tape.constant(std::move(x)));
  }
  return xs;
}

void check_batch(std::span<const Matrix* const> batch, std::size_t n, std::size_t d) {
  if (batch.empty()) throw std::invalid_argument("as2s: empty batch");
  for (const Matrix* m : batch) {
    if (m->rows() != n || m->cols() != d) {
      throw std::invalid_argument("as2s: sequence shape " + shape_of(*m) + " does not match model (" +
                                  std::to_string(n) + "x" + std::to_string(d) + ")");
    }
  }
}

}  // namespace

As2sTrace as2s_trace(ad::Tape& tape, const As2sVars& vars, std::span<const Matrix* const> batch,
                     DecoderInput mode) {
  const std::size_t p = vars.attn_state.rows();
  const std::size_t d = vars.out_weight.cols();
  const std::size_t n = batch.empty() ? 0 : batch.front()->rows();
  check_batch(batch, n, d);
  const std::size_t bsz = batch.size();

  const auto xs = step_inputs(tape, batch, n, d);
  EncoderRun enc = run_encoder(tape, vars.encoder, xs, bsz, p);

  std::vector<ad::Var> projected;
  projected.reserve(n);
  for (const ad::Var& h : enc.states) projected.push_back(ad::matmul(h, vars.attn_hidden));

  As2sTrace trace;
  trace.encoder_states = enc.states;
  trace.reconstruction.resize(n);
  std::vector<LstmStateVars> dec = enc.final_state;
  ad::Var prev_output = tape.constant(Matrix(bsz, d));
  ad::Var total;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t target = n - 1 - i;
    const ad::Var alpha = attend(vars, dec.back().h, projected);
    trace.attention.push_back(alpha);
    std::vector<ad::Var> weighted;
    for (std::size_t j = 0; j < n; ++j) {
      weighted.push_back(ad::scale_rows(enc.states[j], ad::slice_cols(alpha, j, 1)));
    }
    ad::Var context = weighted.front();
    for (std::size_t j = 1; j < n; ++j) context = ad::add(context, weighted[j]);

    const ad::Var parts[] = {prev_output, context};
    ad::Var layer_input = ad::concat_cols(parts);
    for (std::size_t l = 0; l < dec.size(); ++l) {
      dec[l] = lstm_step(vars.decoder[l], layer_input, dec[l]);
      layer_input = dec[l].h;
    }
    const ad::Var out = ad::add_row(ad::matmul(layer_input, vars.out_weight), vars.out_bias);
    trace.reconstruction[target] = out;
    const ad::Var err = ad::sum_squares(ad::sub(out, xs[target]));
    total = i == 0 ? err : ad::add(total, err);
    prev_output = mode == DecoderInput::teacher_forcing ? xs[target] : out;
  }
  trace.loss = ad::scale(total, 1.0 / static_cast<double>(bsz * n * d));
  return trace;
}

As2sOutput as2s_forward(const As2sModel& model, const Matrix& x_seq, DecoderInput mode) {
  if (x_seq.rows() != model.seq_len || x_seq.cols() != model.input_dim) {
    throw std::invalid_argument("as2s_forward: sequence shape " + shape_of(x_seq) +
                                " does not match model (" + std::to_string(model.seq_len) + "x" +
                                std::to_string(model.input_dim) + ")");
  }
  ad::Tape tape;
  const As2sVars vars = as2s_record(tape, model, false);
  const Matrix* batch[] = {&x_seq};
  const As2sTrace trace = as2s_trace(tape, vars, batch, mode);
  As2sOutput out;
  out.loss = trace.loss.value()(0, 0);
  out.reconstruction = Matrix(model.seq_len, model.input_dim);
  for (std::size_t t = 0; t < model.seq_len; ++t) {
    const auto row = trace.reconstruction[t].value().row(0);
    std::copy(row.begin(), row.end(), out.reconstruction.row(t).begin());
  }
  return out;
}

std::vector<double> attention_weights(const As2sModel& model, std::span<const double> s_prev,
                                      const Matrix& encoder_states) {
  if (encoder_states.rows() == 0) throw std::invalid_argument("attention_weights: no encoder states");
  if (s_prev.size() != model.hidden || encoder_states.cols() != model.hidden) {
    throw std::invalid_argument("attention_weights: expected hidden size " +
                                std::to_string(model.hidden));
  }
  ad::Tape tape;
  As2sVars vars;
  vars.attn_state = tape.constant(model.attn_state);
  vars.attn_hidden = tape.constant(model.attn_hidden);
  vars.attn_v = tape.constant(model.attn_v);
  std::vector<ad::Var> projected;
  for (std::size_t j = 0; j < encoder_states.rows(); ++j) {
    projected.push_back(
        ad::matmul(tape.constant(Matrix::row_vector(encoder_states.row(j))), vars.attn_hidden));
  }
  const ad::Var alpha = attend(vars, tape.constant(Matrix::row_vector(s_prev)), projected);
  const auto a = alpha.value().data();
  return {a.begin(), a.end()};
}

namespace {

Matrix encode_batch(const As2sModel& model, std::span<const Matrix* const> batch) {
  check_batch(batch, model.seq_len, model.input_dim);
  ad::Tape tape;
  std::vector<LstmVars> layers;
  for (const auto& layer : model.encoder) layers.push_back(lstm_record(tape, layer, false));
  const auto xs = step_inputs(tape, batch, model.seq_len, model.input_dim);
  const EncoderRun run = run_encoder(tape, layers, xs, batch.size(), model.hidden);
  if (model.config.representation == Representation::final_state) return run.states.back().value();
  Matrix mean(batch.size(), model.hidden);
  for (const ad::Var& h : run.states) {
    const auto src = h.value().data();
    auto dst = mean.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  for (double& v : mean.data()) v /= static_cast<double>(run.states.size());
  return mean;
}

Matrix encode_all(const As2sModel& model, std::span<const Matrix> sequences) {
  Matrix out(sequences.size(), model.hidden);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < sequences.size(); start += kChunk) {
    const std::size_t end = std::min(sequences.size(), start + kChunk);
    std::vector<const Matrix*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&sequences[i]);
    const Matrix reps = encode_batch(model, chunk);
    for (std::size_t r = 0; r < reps.rows(); ++r)
      std::copy(reps.row(r).begin(), reps.row(r).end(), out.row(start + r).begin());
  }
  return out;
}

}  // namespace

std::vector<double> as2s_encode(const As2sModel& model, const Matrix& x_seq) {
  const Matrix* batch[] = {&x_seq};
  const Matrix reps = encode_batch(model, batch);
  return {reps.data().begin(), reps.data().end()};
}

As2sFit as2s_fit(std::span<const Matrix> sequences, const EmbedderConfig& cfg,
                 const As2sFitOptions& options) {
  if (sequences.empty()) throw std::invalid_argument("as2s_fit: empty training set");
  const std::size_t n = sequences.front().rows(), d = sequences.front().cols();
  As2sFit fit{as2s_init(d, n, cfg), {}};
  As2sModel& model = fit.model;
  Adam adam(model.parameters(), {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon});
  Rng rng = Rng::derive(cfg.seed, "as2s-batches");
  const DecoderInput mode = cfg.teacher_forcing ? DecoderInput::teacher_forcing : DecoderInput::own_output;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& idx : make_batches(sequences.size(), cfg.batch_size, rng)) {
      std::vector<const Matrix*> batch;
      batch.reserve(idx.size());
      for (std::size_t i : idx) batch.push_back(&sequences[i]);
      ad::Tape tape;
      const As2sVars vars = as2s_record(tape, model, true);
      const As2sTrace trace = as2s_trace(tape, vars, batch, mode);
      const double value = trace.loss.value()(0, 0);
      check_finite_loss(value, epoch, cfg.learning_rate, "as2s_fit");
      const auto grads = tape.backward(trace.loss);
      std::vector<Matrix> g;
      for (const ad::Var& v : vars.all()) g.push_back(grads.at(v));
      adam.step(g);
      epoch_loss += value * static_cast<double>(idx.size());
    }
    for (const Matrix* p : std::as_const(model).parameters()) {
      if (!p->all_finite()) {
        throw TrainingError("as2s_fit: parameters became non-finite in epoch " + std::to_string(epoch));
      }
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(sequences.size()));
    if (std::find(options.snapshot_epochs.begin(), options.snapshot_epochs.end(), epoch) !=
            options.snapshot_epochs.end() &&
        !options.snapshot_inputs.empty()) {
      fit.snapshots.push_back({epoch, encode_all(model, options.snapshot_inputs)});
    }
  }
  return fit;
}

}  // namespace fl4s
