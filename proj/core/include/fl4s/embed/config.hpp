#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fl4s {

enum class EmbedderKind { pca, ae, as2s };

std::string_view to_string(EmbedderKind k);
EmbedderKind embedder_kind_from_string(std::string_view s);

/// Which encoder output is used as the AS2S representation.
enum class Representation { final_state, mean_state };

struct EmbedderConfig {
  std::size_t p = 32;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t lstm_layers = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Decoder input during training: ground-truth previous window (true) or
  /// the model's own previous reconstruction (false).
  bool teacher_forcing = true;
  Representation representation = Representation::final_state;

  void validate() const;
};

}  // namespace fl4s
