#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fl4s/linalg.hpp"
#include "fl4s/matrix.hpp"
#include "fl4s/rng.hpp"
#include "fl4s/tape.hpp"
#include "oracles.hpp"

using namespace fl4s;

TEST(Matmul, IdentityAndZero) {
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(Matrix::identity(2), b), b);
  EXPECT_EQ(matmul(Matrix(2, 2), b), Matrix(2, 2));
}

TEST(Matmul, MatchesTripleLoop) {
  const Matrix a{{1, 2}, {3, 4}}, b{{5, 6}, {7, 8}};
  EXPECT_EQ(oracle::naive_matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
  EXPECT_EQ(matmul(a, b), oracle::naive_matmul(a, b));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = 1 + rng.below(7), k = 1 + rng.below(7), n = 1 + rng.below(7);
    const Matrix x = oracle::random_matrix(m, k, rng), y = oracle::random_matrix(k, n, rng);
    const Matrix got = matmul(x, y), want = oracle::naive_matmul(x, y);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
  }
}

TEST(Matmul, MismatchReportsBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(4, 5));
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
  }
}

TEST(Softmax, Examples) {
  for (double v : softmax(std::vector<double>{0, 0, 0})) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const auto big = softmax(std::vector<double>{1000, 0});
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_GE(big[1], 0.0);
  EXPECT_LT(big[1], 1e-300);
  const auto two = softmax(std::vector<double>{1, 2});
  const double z = std::exp(1.0) + std::exp(2.0);
  EXPECT_NEAR(two[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(two[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(two[0], 0.26894142136999512, 1e-15);
  EXPECT_THROW(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST(Softmax, SumsToOneOnRandomInputs) {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> v(1 + rng.below(40));
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    for (double& x : v) x = scale * rng.normal();
    const auto s = softmax(v);
    double total = 0.0;
    for (double x : s) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SymEig, DiagonalAndIdentity) {
  const auto e = sym_eig(Matrix{{3, 0}, {0, 1}});
  EXPECT_NEAR(e.values[0], 3.0, 1e-12);
  EXPECT_NEAR(e.values[1], 1.0, 1e-12);
  EXPECT_NEAR(e.vectors(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(e.vectors(1, 1), 1.0, 1e-12);
  const auto id = sym_eig(Matrix::identity(3));
  for (double v : id.values) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(SymEig, TwoByTwoByHand) {
  // Characteristic polynomial (2 - l)^2 - 1 = 0 gives 3 and 1.
  const auto e = sym_eig(Matrix{{2, 1}, {1, 2}});
  EXPECT_NEAR(e.values[0], 3.0, 1e-12);
  EXPECT_NEAR(e.values[1], 1.0, 1e-12);
  EXPECT_NEAR(e.vectors(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(e.vectors(1, 0), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(SymEig, RejectsAsymmetric) {
  EXPECT_THROW(sym_eig(Matrix{{1, 2}, {0, 1}}), std::invalid_argument);
  EXPECT_THROW(sym_eig(Matrix(2, 3)), std::invalid_argument);
}

TEST(SymEig, ReconstructsRandomSymmetric) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.below(12);
    const Matrix a = oracle::random_matrix(d, d, rng);
    Matrix s = matmul(transpose(a), a);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < i; ++j) s(i, j) = s(j, i);
    const auto e = sym_eig(s);
    Matrix rebuilt(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) rebuilt(i, j) += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
    Matrix diff = rebuilt;
    for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] -= s.data()[i];
    EXPECT_LT(frobenius_norm(diff), 1e-8);
    for (std::size_t k = 0; k + 1 < d; ++k) EXPECT_GE(e.values[k], e.values[k + 1]);
    // S v = l v per component, first significant component positive.
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < d; ++i) {
        double sv = 0.0;
        for (std::size_t j = 0; j < d; ++j) sv += s(i, j) * e.vectors(j, k);
        EXPECT_NEAR(sv, e.values[k] * e.vectors(i, k), 1e-8);
      }
      for (std::size_t i = 0; i < d; ++i) {
        if (std::abs(e.vectors(i, k)) > 1e-12) {
          EXPECT_GT(e.vectors(i, k), 0.0);
          break;
        }
      }
    }
  }
}

TEST(Tape, SquareHasGradientSix) {
  ad::Tape tape;
  const auto x = tape.parameter(Matrix{{3.0}});
  const auto loss = ad::hadamard(x, x);
  const auto g = tape.backward(loss);
  EXPECT_DOUBLE_EQ(g.at(x)(0, 0), 6.0);
}

TEST(Tape, ConstantLossGivesZeroGradients) {
  ad::Tape tape;
  const auto w = tape.parameter(Matrix{{1.0, 2.0}});
  const auto c = tape.constant(Matrix{{4.0}});
  const auto g = tape.backward(ad::scale(c, 2.0));
  EXPECT_EQ(g.at(w), Matrix(1, 2));
  EXPECT_FALSE(g.of(c).has_value());
}

TEST(Tape, UntrackedLeavesHaveNoGradient) {
  ad::Tape tape;
  const auto w = tape.parameter(Matrix{{2.0}});
  const auto x = tape.constant(Matrix{{5.0}});
  const auto g = tape.backward(ad::sum_squares(ad::hadamard(w, x)));
  EXPECT_DOUBLE_EQ(g.at(w)(0, 0), 2.0 * 10.0 * 5.0);
  EXPECT_FALSE(g.of(x).has_value());
}

TEST(Tape, RejectsForeignOrNonScalarLoss) {
  ad::Tape a, b;
  const auto x = a.parameter(Matrix{{1.0}});
  EXPECT_THROW(b.backward(x), std::invalid_argument);
  const auto v = a.parameter(Matrix{{1.0, 2.0}});
  EXPECT_THROW(a.backward(v), std::invalid_argument);
}

TEST(Tape, TwoLayerTanhMatchesFiniteDifferences) {
  // 10 parameters: 2x2 + 1x2 hidden layer, 2x1 + 1x1 output, plus a 1x1 scale.
  Rng rng(21);
  Matrix w1 = oracle::random_matrix(2, 2, rng), b1 = oracle::random_matrix(1, 2, rng);
  Matrix w2 = oracle::random_matrix(2, 1, rng), b2 = oracle::random_matrix(1, 1, rng);
  Matrix s = oracle::random_matrix(1, 1, rng);
  const Matrix x = oracle::random_matrix(4, 2, rng);
  std::vector<Matrix*> params = {&w1, &b1, &w2, &b2, &s};
  auto build = [&](ad::Tape& t, bool track) {
    std::vector<ad::Var> v;
    for (auto* p : params) v.push_back(track ? t.parameter(*p) : t.constant(*p));
    const auto h = ad::tanh(ad::add_row(ad::matmul(t.constant(x), v[0]), v[1]));
    const auto y = ad::add_row(ad::matmul(h, v[2]), v[3]);
    return std::pair{ad::sum_squares(ad::matmul(y, v[4])), v};
  };
  ad::Tape tape;
  auto [loss, vars] = build(tape, true);
  const auto g = tape.backward(loss);
  std::vector<Matrix> analytic;
  for (const auto& v : vars) analytic.push_back(g.at(v));
  const auto check = oracle::check_gradients(params, analytic, [&] {
    ad::Tape t;
    return build(t, false).first.value()(0, 0);
  });
  EXPECT_EQ(check.entries, 10u);
  EXPECT_LT(check.max_rel_error, 1e-4);
}

namespace {

// Random graph mixing every operation, with parameter count near `target`.
double random_graph_check(std::uint64_t seed, std::size_t width) {
  Rng rng(seed);
  const std::size_t batch = 3;
  Matrix w1 = oracle::random_matrix(width, width, rng, 0.5), b1 = oracle::random_matrix(1, width, rng, 0.5);
  Matrix w2 = oracle::random_matrix(width, width, rng, 0.5), gate = oracle::random_matrix(batch, 1, rng);
  Matrix w3 = oracle::random_matrix(2 * width, 3, rng, 0.5);
  const Matrix x = oracle::random_matrix(batch, width, rng);
  std::vector<Matrix*> params = {&w1, &b1, &w2, &gate, &w3};
  auto build = [&](ad::Tape& t, bool track) {
    std::vector<ad::Var> v;
    for (auto* p : params) v.push_back(track ? t.parameter(*p) : t.constant(*p));
    const auto in = t.constant(x);
    const auto h1 = ad::tanh(ad::add_row(ad::matmul(in, v[0]), v[1]));
    const auto h2 = ad::sigmoid(ad::matmul(h1, v[2]));
    const auto mixed = ad::hadamard(h1, h2) - ad::scale_rows(h2, v[3]);
    const ad::Var parts[] = {mixed, h1 + in};
    const auto cat = ad::concat_cols(parts);
    const auto att = ad::row_softmax(ad::matmul(cat, v[4]));
    const auto picked = ad::slice_cols(att, 1, 2);
    return std::pair{ad::sum(picked) + ad::scale(ad::sum_squares(h2), 0.1), v};
  };
  ad::Tape tape;
  auto [loss, vars] = build(tape, true);
  const auto g = tape.backward(loss);
  std::vector<Matrix> analytic;
  for (const auto& v : vars) analytic.push_back(g.at(v));
  return oracle::check_gradients(params, analytic, [&] {
           ad::Tape t;
           return build(t, false).first.value()(0, 0);
         }).max_rel_error;
}

}  // namespace

TEST(Tape, RandomGraphsMatchFiniteDifferences) {
  // width 20 gives 20*20*2 + 20 + 3 + 120 = 943 parameters.
  for (std::size_t width : {2, 5, 9, 20}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      EXPECT_LT(random_graph_check(seed * 100 + width, width), 1e-4) << "width " << width << " seed " << seed;
    }
  }
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
  // SplitMix64 reference values for seed 0.
  Rng z(0);
  EXPECT_EQ(z.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(z.next_u64(), 0x6e789e6aa1b965f4ULL);
}

TEST(Rng, DerivedStreamsAreIndependentAndStable) {
  EXPECT_EQ(Rng::derive(7, "x").next_u64(), Rng::derive(7, "x").next_u64());
  EXPECT_NE(Rng::derive(7, "x").next_u64(), Rng::derive(7, "y").next_u64());
  EXPECT_NE(Rng::derive(7, 1).next_u64(), Rng::derive(7, 2).next_u64());
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
}
