#include "fl4s/embed/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "fl4s/embed/config.hpp"

namespace fl4s {

std::string_view to_string(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::pca: return "pca";
    case EmbedderKind::ae: return "ae";
    case EmbedderKind::as2s: return "as2s";
  }
  return "pca";
}

EmbedderKind embedder_kind_from_string(std::string_view s) {
  if (s == "pca") return EmbedderKind::pca;
  if (s == "ae") return EmbedderKind::ae;
  if (s == "as2s") return EmbedderKind::as2s;
  throw std::invalid_argument("unknown embedder '" + std::string(s) + "' (pca|ae|as2s)");
}

void EmbedderConfig::validate() const {
  if (p < 1) throw std::invalid_argument("embedder: p must be >= 1");
  if (epochs < 1) throw std::invalid_argument("embedder: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("embedder: batch_size must be >= 1");
  if (lstm_layers < 1) throw std::invalid_argument("embedder: lstm_layers must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("embedder: learning_rate must be > 0");
}

Adam::Adam(std::vector<Matrix*> params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const Matrix* p : params_) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void Adam::step(std::span<const Matrix> grads) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("Adam::step: expected " + std::to_string(params_.size()) +
                                " gradients, got " + std::to_string(grads.size()));
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const auto g = grads[i].data();
    if (g.size() != w.size()) {
      throw std::invalid_argument("Adam::step: gradient " + std::to_string(i) + " has shape " +
                                  shape_of(grads[i]) + ", parameter is " + shape_of(*params_[i]));
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
      v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.epsilon);
    }
  }
}

}  // namespace fl4s
