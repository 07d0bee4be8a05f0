#include "fl4s/embed/embedder.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace fl4s {

using nlohmann::json;

std::vector<double> flatten(const Matrix& x_seq) {
  const auto d = x_seq.data();
  return {d.begin(), d.end()};
}

std::size_t Embedder::output_dim() const {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PcaModel>) return m.output_dim();
        else if constexpr (std::is_same_v<T, AeModel>) return m.hidden_dim();
        else return m.hidden;
      },
      model);
}

std::vector<double> Embedder::encode(const Matrix& x_seq) const {
  return std::visit(
      [&](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PcaModel>) return pca_encode(m, x_seq.data());
        else if constexpr (std::is_same_v<T, AeModel>) return ae_encode(m, x_seq.data());
        else return as2s_encode(m, x_seq);
      },
      model);
}

Matrix Embedder::encode_all(std::span<const Matrix> sequences) const {
  Matrix out(sequences.size(), output_dim());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto z = encode(sequences[i]);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

const std::vector<double>& Embedder::loss_history() const {
  static const std::vector<double> none;
  if (const auto* ae = std::get_if<AeModel>(&model)) return ae->loss_history;
  if (const auto* s2s = std::get_if<As2sModel>(&model)) return s2s->loss_history;
  return none;
}

EmbedderFit fit_embedder(EmbedderKind kind, std::span<const Matrix> sequences,
                         const EmbedderConfig& cfg, const As2sFitOptions& options) {
  cfg.validate();
  if (sequences.empty()) throw std::invalid_argument("fit_embedder: no training sequences");
  EmbedderFit fit;
  fit.embedder.kind = kind;
  if (kind == EmbedderKind::as2s) {
    As2sFit f = as2s_fit(sequences, cfg, options);
    fit.embedder.model = std::move(f.model);
    fit.snapshots = std::move(f.snapshots);
    return fit;
  }
  const std::size_t width = sequences.front().size();
  Matrix flat(sequences.size(), width);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].size() != width) {
      throw std::invalid_argument("fit_embedder: sequences differ in shape");
    }
    std::copy(sequences[i].data().begin(), sequences[i].data().end(), flat.row(i).begin());
  }
  if (kind == EmbedderKind::pca) {
    fit.embedder.model = pca_fit(flat, cfg.p);
  } else {
    fit.embedder.model = ae_fit(flat, cfg);
  }
  return fit;
}

namespace {

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw std::invalid_argument("model file: matrix size mismatch");
  return Matrix(rows, cols, std::move(data));
}

std::string_view to_string(Representation r) {
  return r == Representation::final_state ? "final_state" : "mean_state";
}

Representation representation_from(std::string_view s) {
  if (s == "final_state") return Representation::final_state;
  if (s == "mean_state") return Representation::mean_state;
  throw std::invalid_argument("unknown representation '" + std::string(s) + "'");
}

json config_json(const EmbedderConfig& c) {
  return {{"p", c.p},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"lstm_layers", c.lstm_layers},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"teacher_forcing", c.teacher_forcing},
          {"representation", to_string(c.representation)}};
}

EmbedderConfig config_from(const json& j) {
  EmbedderConfig c;
  c.p = j.at("p").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.teacher_forcing = j.at("teacher_forcing").get<bool>();
  c.representation = representation_from(j.at("representation").get<std::string>());
  return c;
}

json lstm_json(const LstmParams& p) {
  return {{"w_input", matrix_json(p.w_input)}, {"w_hidden", matrix_json(p.w_hidden)},
          {"bias", matrix_json(p.bias)}};
}

LstmParams lstm_from(const json& j) {
  return {matrix_from(j.at("w_input")), matrix_from(j.at("w_hidden")), matrix_from(j.at("bias"))};
}

}  // namespace

std::string model_file_to_text(const ModelFile& file) {
  const Embedder& e = file.embedder;
  json j;
  j["format"] = "fl4s-model-v1";
  j["method"] = to_string(e.kind);
  j["cluster_id"] = file.meta.cluster_id;
  j["d"] = file.meta.input_dim;
  j["p"] = e.output_dim();
  j["N"] = file.meta.seq_len;
  j["config_hash"] = file.meta.config_hash;
  j["log1p_indices"] = file.meta.log1p_indices;
  j["standardizer"] = {{"mean", file.meta.standardizer.mean()},
                       {"stddev", file.meta.standardizer.stddev()}};
  json params;
  if (const auto* pca = std::get_if<PcaModel>(&e.model)) {
    params = {{"mean", pca->mean},
              {"components", matrix_json(pca->components)},
              {"eigenvalues", pca->eigenvalues}};
  } else if (const auto* ae = std::get_if<AeModel>(&e.model)) {
    j["config"] = config_json(ae->config);
    j["seed"] = ae->config.seed;
    j["epochs"] = ae->config.epochs;
    j["loss_history"] = ae->loss_history;
    params = {{"w_enc", matrix_json(ae->w_enc)},
              {"b_enc", matrix_json(ae->b_enc)},
              {"w_dec", matrix_json(ae->w_dec)},
              {"b_dec", matrix_json(ae->b_dec)}};
  } else {
    const auto& m = std::get<As2sModel>(e.model);
    j["config"] = config_json(m.config);
    j["seed"] = m.config.seed;
    j["epochs"] = m.config.epochs;
    j["loss_history"] = m.loss_history;
    json enc = json::array(), dec = json::array();
    for (const auto& l : m.encoder) enc.push_back(lstm_json(l));
    for (const auto& l : m.decoder) dec.push_back(lstm_json(l));
    params = {{"input_dim", m.input_dim},
              {"hidden", m.hidden},
              {"seq_len", m.seq_len},
              {"encoder", std::move(enc)},
              {"decoder", std::move(dec)},
              {"attn_state", matrix_json(m.attn_state)},
              {"attn_hidden", matrix_json(m.attn_hidden)},
              {"attn_v", matrix_json(m.attn_v)},
              {"out_weight", matrix_json(m.out_weight)},
              {"out_bias", matrix_json(m.out_bias)}};
  }
  j["params"] = std::move(params);
  return j.dump();
}

ModelFile model_file_from_text(std::string_view text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "fl4s-model-v1") {
    throw std::invalid_argument("model file: unsupported format");
  }
  ModelFile file;
  file.meta.cluster_id = j.at("cluster_id").get<std::size_t>();
  file.meta.input_dim = j.at("d").get<std::size_t>();
  file.meta.seq_len = j.at("N").get<std::size_t>();
  file.meta.config_hash = j.at("config_hash").get<std::string>();
  file.meta.log1p_indices = j.at("log1p_indices").get<std::vector<std::size_t>>();
  const json& st = j.at("standardizer");
  auto mean = st.at("mean").get<std::vector<double>>();
  if (!mean.empty()) {
    file.meta.standardizer = Standardizer(std::move(mean), st.at("stddev").get<std::vector<double>>());
  }

  Embedder& e = file.embedder;
  e.kind = embedder_kind_from_string(j.at("method").get<std::string>());
  const json& p = j.at("params");
  switch (e.kind) {
    case EmbedderKind::pca: {
      PcaModel m;
      m.mean = p.at("mean").get<std::vector<double>>();
      m.components = matrix_from(p.at("components"));
      m.eigenvalues = p.at("eigenvalues").get<std::vector<double>>();
      e.model = std::move(m);
      break;
    }
    case EmbedderKind::ae: {
      AeModel m;
      m.config = config_from(j.at("config"));
      m.loss_history = j.at("loss_history").get<std::vector<double>>();
      m.w_enc = matrix_from(p.at("w_enc"));
      m.b_enc = matrix_from(p.at("b_enc"));
      m.w_dec = matrix_from(p.at("w_dec"));
      m.b_dec = matrix_from(p.at("b_dec"));
      e.model = std::move(m);
      break;
    }
    case EmbedderKind::as2s: {
      As2sModel m;
      m.config = config_from(j.at("config"));
      m.loss_history = j.at("loss_history").get<std::vector<double>>();
      m.input_dim = p.at("input_dim").get<std::size_t>();
      m.hidden = p.at("hidden").get<std::size_t>();
      m.seq_len = p.at("seq_len").get<std::size_t>();
      for (const auto& l : p.at("encoder")) m.encoder.push_back(lstm_from(l));
      for (const auto& l : p.at("decoder")) m.decoder.push_back(lstm_from(l));
      m.attn_state = matrix_from(p.at("attn_state"));
      m.attn_hidden = matrix_from(p.at("attn_hidden"));
      m.attn_v = matrix_from(p.at("attn_v"));
      m.out_weight = matrix_from(p.at("out_weight"));
      m.out_bias = matrix_from(p.at("out_bias"));
      e.model = std::move(m);
      break;
    }
  }
  return file;
}

}  // namespace fl4s
