#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "checks.hpp"
#include "fl4s/embed/as2s.hpp"
#include "fl4s/embed/autoencoder.hpp"
#include "fl4s/embed/embedder.hpp"
#include "fl4s/embed/lstm.hpp"
#include "fl4s/embed/optimizer.hpp"
#include "fl4s/embed/pca.hpp"
#include "fl4s/embed/training.hpp"
#include "fl4s/linalg.hpp"
#include "oracles.hpp"

using namespace fl4s;

namespace {

EmbedderConfig small_config(std::size_t p, std::size_t epochs, std::uint64_t seed) {
  EmbedderConfig cfg;
  cfg.p = p;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 8;
  return cfg;
}

// Sequences that share a smooth low-dimensional structure, so there is
// something to learn.
std::vector<Matrix> structured_sequences(std::size_t n, std::size_t len, std::size_t d, Rng& rng) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(), b = rng.normal();
    Matrix m(len, d);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j < d; ++j)
        m(t, j) = a * std::sin(0.7 * static_cast<double>(t + j)) + b * std::cos(0.3 * static_cast<double>(j)) +
                  0.05 * rng.normal();
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST(Pca, FullBasisReconstructsExactly) {
  Rng rng(1);
  const Matrix x = oracle::random_matrix(30, 4, rng);
  const auto model = pca_fit(x, 4);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = pca_reconstruct(model, x.row(i));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r[j], x(i, j), 1e-8);
  }
}

TEST(Pca, CollinearDataHasOneComponent) {
  Matrix x(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    x(i, 0) = static_cast<double>(i) - 3.0;
    x(i, 1) = 2.0 * x(i, 0);
  }
  const auto model = pca_fit(x, 2);
  EXPECT_GT(model.eigenvalues[0], 0.0);
  EXPECT_NEAR(model.eigenvalues[1], 0.0, 1e-9 * model.eigenvalues[0]);
  EXPECT_NEAR(std::abs(model.components(1, 0) / model.components(0, 0)), 2.0, 1e-9);
}

TEST(Pca, MatchesSymEigOnFiveByFive) {
  Rng rng(2);
  const Matrix x = oracle::random_matrix(40, 5, rng);
  const auto model = pca_fit(x, 5);
  // Covariance by plain loops.
  Matrix cov(5, 5);
  std::vector<double> mean(5, 0.0);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 5; ++j) mean[j] += x(i, j) / 40.0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = 0; b < 5; ++b) cov(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]) / 39.0;
  const auto eig = sym_eig(cov);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_NEAR(model.eigenvalues[c], eig.values[c], 1e-10);
    for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(model.components(r, c), eig.vectors(r, c), 1e-8);
  }
}

TEST(Pca, ComponentsOrthonormal) {
  Rng rng(3);
  const auto model = pca_fit(oracle::random_matrix(50, 8, rng), 3);
  const Matrix gram = matmul(transpose(model.components), model.components);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(gram(i, j), i == j ? 1.0 : 0.0, 1e-8);
}

TEST(Pca, ReconstructionErrorNonIncreasingInP) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Matrix x = oracle::random_matrix(25, 6, rng);
    double prev = INFINITY;
    for (std::size_t p = 1; p <= 6; ++p) {
      const auto model = pca_fit(x, p);
      double err = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) err += squared_distance(pca_reconstruct(model, x.row(i)), x.row(i));
      EXPECT_LE(err, prev + 1e-9);
      prev = err;
    }
  }
}

TEST(Pca, RejectsTooManyComponents) { EXPECT_THROW(pca_fit(Matrix(10, 3), 4), std::invalid_argument); }

TEST(Lstm, ZeroParametersGiveZeroState) {
  LstmParams params{Matrix(3, 8), Matrix(2, 8), Matrix(1, 8)};
  const std::vector<double> x{1.0, -2.0, 3.0};
  const auto s = lstm_step(params, x, {{0, 0}, {0, 0}});
  EXPECT_EQ(s.h, (std::vector<double>{0, 0}));
  EXPECT_EQ(s.c, (std::vector<double>{0, 0}));
}

TEST(Lstm, HandEvaluatedGates) {
  // One unit, bias only: i = f = o = sigmoid(0) = 0.5, g = tanh(1).
  LstmParams params{Matrix(1, 4), Matrix(1, 4), Matrix{{0, 0, 1, 0}}};
  const auto s = lstm_step(params, std::vector<double>{0.0}, {{0.0}, {2.0}});
  EXPECT_NEAR(s.c[0], 0.5 * 2.0 + 0.5 * std::tanh(1.0), 1e-15);
  EXPECT_NEAR(s.h[0], 0.5 * std::tanh(s.c[0]), 1e-15);
}

TEST(Lstm, DimensionMismatchRejected) {
  Rng rng(1);
  const auto params = lstm_init(3, 2, rng);
  EXPECT_THROW(lstm_step(params, std::vector<double>{1.0}, {{0, 0}, {0, 0}}), std::invalid_argument);
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LT(check::lstm_gradients(seed).max_rel_error, 1e-4);
}

TEST(Autoencoder, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = check::ae_gradients(seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_EQ(r.entries, 6u * 4 + 4 + 4 * 6 + 6);
  }
}

TEST(Autoencoder, TrainingLowersLossAndEncodesToP) {
  Rng rng(5);
  Matrix x(64, 10);
  const auto seqs = structured_sequences(64, 1, 10, rng);
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 10; ++j) x(i, j) = seqs[i](0, j);
  const auto model = ae_fit(x, small_config(3, 30, 1));
  ASSERT_EQ(model.loss_history.size(), 30u);
  EXPECT_LT(model.loss_history.back(), model.loss_history.front());
  EXPECT_EQ(ae_encode(model, x.row(0)).size(), 3u);
}

TEST(Autoencoder, DivergenceReported) {
  Rng rng(6);
  Matrix x = oracle::random_matrix(16, 4, rng, 1e200);
  EXPECT_THROW(ae_fit(x, small_config(2, 3, 1)), TrainingError);
}

TEST(Attention, WeightsSumToOneAndAreNonNegative) {
  const auto r = check::attention_sums(7, 2000);
  EXPECT_LT(r.max_sum_error, 1e-12);
  EXPECT_GE(r.min_weight, 0.0);
}

TEST(Attention, IdenticalStatesGiveUniformWeights) {
  EmbedderConfig cfg;
  cfg.p = 3;
  const auto model = as2s_init(2, 4, cfg);
  const Matrix states(4, 3, 0.3);
  for (double a : attention_weights(model, std::vector<double>{0.1, -0.2, 0.5}, states)) EXPECT_NEAR(a, 0.25, 1e-15);
}

TEST(Attention, HandEvaluatedTwoStates) {
  EmbedderConfig cfg;
  cfg.p = 1;
  auto model = as2s_init(1, 2, cfg);
  model.attn_state = Matrix{{0.5}};
  model.attn_hidden = Matrix{{2.0}};
  model.attn_v = Matrix{{1.5}};
  const Matrix states{{0.1}, {-0.4}};
  const double s = 0.3;
  const double a0 = 1.5 * std::tanh(0.5 * s + 2.0 * 0.1), a1 = 1.5 * std::tanh(0.5 * s - 2.0 * 0.4);
  const double z = std::exp(a0) + std::exp(a1);
  const auto alpha = attention_weights(model, std::vector<double>{s}, states);
  EXPECT_NEAR(alpha[0], std::exp(a0) / z, 1e-15);
  EXPECT_NEAR(alpha[1], std::exp(a1) / z, 1e-15);
}

TEST(As2s, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    EXPECT_LT(check::as2s_gradients(seed).max_rel_error, 1e-4) << "seed " << seed;
}

TEST(As2s, TeacherForcedLossMatchesStraightLine) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LT(check::as2s_forward_gap(seed), 1e-10);
}

TEST(As2s, ForwardShapesAndNonNegativeLoss) {
  Rng rng(8);
  EmbedderConfig cfg;
  cfg.p = 4;
  const auto model = as2s_init(3, 5, cfg);
  for (int i = 0; i < 20; ++i) {
    const Matrix x = oracle::random_matrix(5, 3, rng, 3.0);
    for (auto mode : {DecoderInput::teacher_forcing, DecoderInput::own_output}) {
      const auto out = as2s_forward(model, x, mode);
      EXPECT_EQ(out.reconstruction.rows(), 5u);
      EXPECT_EQ(out.reconstruction.cols(), 3u);
      EXPECT_GE(out.loss, 0.0);
    }
  }
  EXPECT_THROW(as2s_forward(model, Matrix(4, 3)), std::invalid_argument);
}

TEST(As2s, EncodeIsFinalEncoderState) {
  Rng rng(9);
  EmbedderConfig cfg;
  cfg.p = 5;
  auto model = as2s_init(3, 5, cfg);
  for (Matrix* m : model.parameters())
    for (double& v : m->data()) v += 0.1 * rng.normal();
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const auto rep = as2s_encode(model, x);
  ASSERT_EQ(rep.size(), 5u);
  // Five explicit single-example steps.
  LstmState s{std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)};
  for (std::size_t t = 0; t < 5; ++t) s = lstm_step(model.encoder[0], x.row(t), s);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(rep[j], s.h[j], 1e-14);
  const auto manual = oracle::encoder_final_state(model, x);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(manual[j], s.h[j], 1e-14);
  EXPECT_EQ(as2s_encode(model, x), rep);
}

TEST(As2s, MeanStateOption) {
  Rng rng(10);
  EmbedderConfig cfg;
  cfg.p = 3;
  cfg.representation = Representation::mean_state;
  const auto model = as2s_init(2, 5, cfg);
  const Matrix x = oracle::random_matrix(5, 2, rng);
  LstmState s{std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)};
  std::vector<double> mean(3, 0.0);
  for (std::size_t t = 0; t < 5; ++t) {
    s = lstm_step(model.encoder[0], x.row(t), s);
    for (std::size_t j = 0; j < 3; ++j) mean[j] += s.h[j] / 5.0;
  }
  const auto rep = as2s_encode(model, x);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(rep[j], mean[j], 1e-14);
}

TEST(As2s, TrainingLowersLossDeterministically) {
  Rng rng(11);
  const auto seqs = structured_sequences(48, 5, 4, rng);
  const auto cfg = small_config(4, 12, 3);
  As2sFitOptions opts;
  opts.snapshot_inputs = std::span<const Matrix>(seqs).first(10);
  opts.snapshot_epochs = {1, 12};
  const auto a = as2s_fit(seqs, cfg, opts);
  ASSERT_EQ(a.model.loss_history.size(), 12u);
  EXPECT_LT(a.model.loss_history.back(), a.model.loss_history.front());
  ASSERT_EQ(a.snapshots.size(), 2u);
  EXPECT_EQ(a.snapshots[1].epoch, 12u);
  EXPECT_EQ(a.snapshots[1].representations.rows(), 10u);
  EXPECT_EQ(a.snapshots[1].representations.row(3).size(), 4u);
  const auto last = as2s_encode(a.model, seqs[3]);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a.snapshots[1].representations(3, j), last[j]);

  const auto b = as2s_fit(seqs, cfg, opts);
  const auto pa = a.model.parameters();
  const auto pb = b.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i], *pb[i]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix w{{1.0, -1.0}};
  Adam adam({&w}, AdamOptions{0.1, 0.9, 0.999, 1e-8});
  const Matrix g{{3.0, -0.5}};
  adam.step(std::span<const Matrix>(&g, 1));
  EXPECT_NEAR(w(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(w(0, 1), -0.9, 1e-7);
}

TEST(Embedder, UniformInterfaceAcrossKinds) {
  Rng rng(12);
  const auto seqs = structured_sequences(40, 5, 3, rng);
  for (auto kind : {EmbedderKind::pca, EmbedderKind::ae, EmbedderKind::as2s}) {
    const auto fit = fit_embedder(kind, seqs, small_config(2, 3, 1));
    EXPECT_EQ(fit.embedder.output_dim(), 2u);
    EXPECT_EQ(fit.embedder.encode(seqs[0]).size(), 2u);
    const Matrix all = fit.embedder.encode_all(seqs);
    EXPECT_EQ(all.rows(), 40u);
    const auto one = fit.embedder.encode(seqs[7]);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(all(7, j), one[j]) << to_string(kind);
  }
}

TEST(Embedder, FlattenIsDayByDay) {
  EXPECT_EQ(flatten(Matrix{{1, 2}, {3, 4}}), (std::vector<double>{1, 2, 3, 4}));
}

TEST(ModelFile, RoundTripIsBitExact) {
  Rng rng(13);
  const auto seqs = structured_sequences(30, 5, 3, rng);
  for (auto kind : {EmbedderKind::pca, EmbedderKind::ae, EmbedderKind::as2s}) {
    ModelFile file;
    file.meta.cluster_id = 1;
    file.meta.input_dim = 3;
    file.meta.config_hash = "cafe";
    file.meta.log1p_indices = {0, 2};
    file.meta.standardizer = Standardizer({0.1, 1.0 / 3.0, 2.0}, {1.0, 0.7, 1e-3});
    file.embedder = fit_embedder(kind, seqs, small_config(2, 2, 4)).embedder;
    const ModelFile back = model_file_from_text(model_file_to_text(file));
    EXPECT_EQ(back.meta.standardizer.mean(), file.meta.standardizer.mean());
    EXPECT_EQ(back.meta.log1p_indices, file.meta.log1p_indices);
    EXPECT_EQ(back.meta.config_hash, "cafe");
    for (const auto& s : seqs) EXPECT_EQ(back.embedder.encode(s), file.embedder.encode(s)) << to_string(kind);
  }
}
