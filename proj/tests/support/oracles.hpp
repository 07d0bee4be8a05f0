#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code they check beyond reading model parameters.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fl4s/dataset.hpp"
#include "fl4s/embed/as2s.hpp"
#include "fl4s/matrix.hpp"
#include "fl4s/rng.hpp"

namespace fl4s::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b);

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// entries of all parameters, numeric by central differences.
struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

GradCheck check_gradients(const std::vector<Matrix*>& params, const std::vector<Matrix>& analytic,
                          const std::function<double()>& loss, double step = 1e-5,
                          double floor = 1e-6);

/// Teacher-forced AS2S loss of one sequence, written out step by step with
/// plain loops: LSTM encoder, reversed decoding, additive attention over
/// the encoder states, linear output layer.
double as2s_loss_straight_line(const As2sModel& model, const Matrix& x_seq);

/// Final top-layer encoder state by repeated single-example LSTM steps.
std::vector<double> encoder_final_state(const As2sModel& model, const Matrix& x_seq);

/// Mean distance to the k nearest rows, ordering every pair by brute force.
double knn_brute_force(const Matrix& reference, std::span<const double> q, std::size_t k);

/// Average precision by enumerating every candidate threshold separately.
double average_precision_enumerated(std::span<const double> scores, std::span<const Label> labels);

/// Isotropic Gaussian blobs; returns points and the blob of each point.
Matrix gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t per_blob, double sigma,
                      Rng& rng, std::vector<std::size_t>* truth = nullptr);

}  // namespace fl4s::oracle
