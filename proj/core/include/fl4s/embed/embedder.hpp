#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fl4s/dataset.hpp"
#include "fl4s/embed/as2s.hpp"
#include "fl4s/embed/autoencoder.hpp"
#include "fl4s/embed/config.hpp"
#include "fl4s/embed/pca.hpp"
#include "fl4s/matrix.hpp"

namespace fl4s {

/// Any of the three representation learners behind one encode interface.
/// PCA and the auto-encoder see the user-week flattened day by day into a
/// single 5*d row; AS2S sees the sequence.
struct Embedder {
  EmbedderKind kind = EmbedderKind::pca;
  std::variant<PcaModel, AeModel, As2sModel> model;

  std::size_t output_dim() const;
  std::vector<double> encode(const Matrix& x_seq) const;
  /// One representation per row.
  Matrix encode_all(std::span<const Matrix> sequences) const;
  const std::vector<double>& loss_history() const;
};

std::vector<double> flatten(const Matrix& x_seq);

struct EmbedderFit {
  Embedder embedder;
  std::vector<As2sSnapshot> snapshots;  // AS2S only
};

/// Trains the chosen embedder on already preprocessed sequences.
EmbedderFit fit_embedder(EmbedderKind kind, std::span<const Matrix> sequences,
                         const EmbedderConfig& cfg, const As2sFitOptions& options = {});

/// Everything a model file carries besides the parameters.
struct ModelFileMeta {
  std::size_t cluster_id = 0;
  std::size_t input_dim = 0;
  std::size_t seq_len = kWeekdays;
  std::string config_hash;
  std::vector<std::size_t> log1p_indices;
  Standardizer standardizer;
};

struct ModelFile {
  ModelFileMeta meta;
  Embedder embedder;
};

/// JSON text. Doubles are written with round-trip precision, so reading a
/// file back gives bit-identical parameters.
std::string model_file_to_text(const ModelFile& file);
ModelFile model_file_from_text(std::string_view text);

}  // namespace fl4s
