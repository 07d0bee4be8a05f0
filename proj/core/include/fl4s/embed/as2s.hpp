#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fl4s/embed/config.hpp"
#include "fl4s/embed/lstm.hpp"
#include "fl4s/matrix.hpp"
#include "fl4s/tape.hpp"

namespace fl4s {

/// Attention-based sequence-to-sequence auto-encoder.
///
/// The encoder LSTM reads x_1..x_N. The decoder starts from the final
/// encoder state and reconstructs the sequence in reverse (x_N first). At
/// every decoder step the previous decoder state s scores each encoder
/// state h_j with additive attention
///   a_j = v^T tanh(W_s s + W_h h_j),  alpha = softmax(a),
/// and the context sum_j alpha_j h_j is fed to the decoder together with the
/// previous reconstruction target (zeros at the first step).
struct As2sModel {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::size_t seq_len = 0;
  std::vector<LstmParams> encoder;  // layer 0: d -> p
  std::vector<LstmParams> decoder;  // layer 0: d + p -> p
  Matrix attn_state;                // W_s, p x p
  Matrix attn_hidden;               // W_h, p x p
  Matrix attn_v;                    // p x 1
  Matrix out_weight;                // p x d
  Matrix out_bias;                  // 1 x d
  EmbedderConfig config;
  std::vector<double> loss_history;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

As2sModel as2s_init(std::size_t input_dim, std::size_t seq_len, const EmbedderConfig& cfg);

enum class DecoderInput { teacher_forcing, own_output };

struct As2sVars {
  std::vector<LstmVars> encoder;
  std::vector<LstmVars> decoder;
  ad::Var attn_state, attn_hidden, attn_v, out_weight, out_bias;

  std::vector<ad::Var> all() const;  // same order as As2sModel::parameters()
};

As2sVars as2s_record(ad::Tape& tape, const As2sModel& model, bool trainable);

struct As2sTrace {
  ad::Var loss;                          // 1x1, sum of squared errors / (B * N * d)
  std::vector<ad::Var> encoder_states;   // top layer h_1..h_N, each B x p
  std::vector<ad::Var> reconstruction;   // indexed by original time step, each B x d
  std::vector<ad::Var> attention;        // per decoder step, B x N
};

/// Runs a batch of equally shaped sequences (each N x d) through the model.
As2sTrace as2s_trace(ad::Tape& tape, const As2sVars& vars, std::span<const Matrix* const> batch,
                     DecoderInput mode);

struct As2sOutput {
  Matrix reconstruction;  // N x d in original order
  double loss = 0.0;
};

As2sOutput as2s_forward(const As2sModel& model, const Matrix& x_seq,
                        DecoderInput mode = DecoderInput::own_output);

/// Attention distribution over the rows of `encoder_states` (N x p) for the
/// previous decoder state s_prev.
std::vector<double> attention_weights(const As2sModel& model, std::span<const double> s_prev,
                                      const Matrix& encoder_states);

std::vector<double> as2s_encode(const As2sModel& model, const Matrix& x_seq);

struct As2sSnapshot {
  std::size_t epoch = 0;
  Matrix representations;  // one row per snapshot input
};

struct As2sFitOptions {
  /// Sequences encoded after each epoch listed in snapshot_epochs.
  std::span<const Matrix> snapshot_inputs;
  std::vector<std::size_t> snapshot_epochs;
};

struct As2sFit {
  As2sModel model;
  std::vector<As2sSnapshot> snapshots;
};

As2sFit as2s_fit(std::span<const Matrix> sequences, const EmbedderConfig& cfg,
                 const As2sFitOptions& options = {});

}  // namespace fl4s
