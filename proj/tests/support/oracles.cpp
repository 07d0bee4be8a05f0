#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fl4s::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

GradCheck check_gradients(const std::vector<Matrix*>& params, const std::vector<Matrix>& analytic,
                          const std::function<double()>& loss, double step, double floor) {
  GradCheck out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& m = *params[p];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + step;
      const double up = loss();
      m.data()[i] = saved - step;
      const double down = loss();
      m.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
      ++out.entries;
    }
  }
  return out;
}

namespace {

using Vec = std::vector<double>;

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row-vector convention: out = x W (+ b).
Vec affine(const Vec& x, const Matrix& w) {
  Vec out(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[i] * w(i, j);
  return out;
}

struct State {
  Vec h, c;
};

State lstm(const LstmParams& p, const Vec& x, const State& prev) {
  const std::size_t n = p.w_hidden.rows();
  Vec a = affine(x, p.w_input);
  const Vec b = affine(prev.h, p.w_hidden);
  for (std::size_t j = 0; j < 4 * n; ++j) a[j] += b[j] + p.bias(0, j);
  State s{Vec(n), Vec(n)};
  for (std::size_t j = 0; j < n; ++j) {
    const double i = sigm(a[j]), f = sigm(a[n + j]), g = std::tanh(a[2 * n + j]), o = sigm(a[3 * n + j]);
    s.c[j] = f * prev.c[j] + i * g;
    s.h[j] = o * std::tanh(s.c[j]);
  }
  return s;
}

Vec row_of(const Matrix& m, std::size_t r) { return {m.row(r).begin(), m.row(r).end()}; }

}  // namespace

std::vector<double> encoder_final_state(const As2sModel& model, const Matrix& x_seq) {
  const std::size_t p = model.hidden;
  std::vector<State> st(model.encoder.size(), State{Vec(p, 0.0), Vec(p, 0.0)});
  for (std::size_t t = 0; t < x_seq.rows(); ++t) {
    Vec in = row_of(x_seq, t);
    for (std::size_t l = 0; l < st.size(); ++l) {
      st[l] = lstm(model.encoder[l], in, st[l]);
      in = st[l].h;
    }
  }
  return st.back().h;
}

double as2s_loss_straight_line(const As2sModel& model, const Matrix& x_seq) {
  const std::size_t n = x_seq.rows(), d = x_seq.cols(), p = model.hidden;
  std::vector<State> enc(model.encoder.size(), State{Vec(p, 0.0), Vec(p, 0.0)});
  std::vector<Vec> hs;
  for (std::size_t t = 0; t < n; ++t) {
    Vec in = row_of(x_seq, t);
    for (std::size_t l = 0; l < enc.size(); ++l) {
      enc[l] = lstm(model.encoder[l], in, enc[l]);
      in = enc[l].h;
    }
    hs.push_back(in);
  }

  std::vector<State> dec = enc;
  Vec prev_target(d, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = n - 1 - i;
    // a_j = v . tanh(s W_s + h_j W_h)
    const Vec q = affine(dec.back().h, model.attn_state);
    Vec scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      const Vec k = affine(hs[j], model.attn_hidden);
      double a = 0.0;
      for (std::size_t u = 0; u < p; ++u) a += model.attn_v(u, 0) * std::tanh(q[u] + k[u]);
      scores[j] = a;
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double& s : scores) z += (s = std::exp(s - mx));
    Vec context(p, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t u = 0; u < p; ++u) context[u] += scores[j] / z * hs[j][u];

    Vec in = prev_target;
    in.insert(in.end(), context.begin(), context.end());
    for (std::size_t l = 0; l < dec.size(); ++l) {
      dec[l] = lstm(model.decoder[l], in, dec[l]);
      in = dec[l].h;
    }
    Vec out = affine(in, model.out_weight);
    for (std::size_t c = 0; c < d; ++c) {
      const double e = out[c] + model.out_bias(0, c) - x_seq(t, c);
      loss += e * e;
    }
    prev_target = row_of(x_seq, t);
  }
  return loss / static_cast<double>(n * d);
}

double knn_brute_force(const Matrix& reference, std::span<const double> q, std::size_t k) {
  std::vector<double> d;
  for (std::size_t r = 0; r < reference.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < reference.cols(); ++c) s += (q[c] - reference(r, c)) * (q[c] - reference(r, c));
    d.push_back(std::sqrt(s));
  }
  std::sort(d.begin(), d.end());
  return std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
}

double average_precision_enumerated(std::span<const double> scores, std::span<const Label> labels) {
  const std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), Label::anomalous));
  double area = 0.0, prev_recall = 0.0;
  for (double th : thresholds) {
    double tp = 0.0, flagged = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= th) {
        flagged += 1.0;
        if (labels[i] == Label::anomalous) tp += 1.0;
      }
    }
    const double recall = tp / positives;
    area += (recall - prev_recall) * (tp / flagged);
    prev_recall = recall;
  }
  return area;
}

Matrix gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t per_blob, double sigma,
                      Rng& rng, std::vector<std::size_t>* truth) {
  const std::size_t dim = centers.front().size();
  Matrix x(centers.size() * per_blob, dim);
  if (truth) truth->clear();
  for (std::size_t b = 0; b < centers.size(); ++b)
    for (std::size_t i = 0; i < per_blob; ++i) {
      for (std::size_t c = 0; c < dim; ++c) x(b * per_blob + i, c) = centers[b][c] + sigma * rng.normal();
      if (truth) truth->push_back(b);
    }
  return x;
}

}  // namespace fl4s::oracle
