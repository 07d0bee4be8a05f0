#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fl4s/matrix.hpp"

namespace fl4s {

enum class ClusterMethod { kmeans, kmodes };
enum class DistanceMetric { euclidean, hamming };

/// Rows of categorical attributes, each value a category index >= 0.
using CategoricalTable = std::vector<std::vector<int>>;

struct ClusterModel {
  ClusterMethod method = ClusterMethod::kmeans;
  std::size_t k = 0;
  Matrix centers;                       // k x m centroids (k-means)
  std::vector<std::vector<int>> modes;  // k modes (k-modes)
  std::vector<std::size_t> assignments; // one cluster id per input row
  double inertia = 0.0;                 // squared-Euclidean or Hamming cost
  std::vector<double> cost_history;     // cost after each assignment step
  std::size_t iterations = 0;
  std::uint64_t seed = 0;

  /// Nearest center for a new row (ties to the lower cluster id).
  std::size_t assign(std::span<const double> row) const;
  std::size_t assign(std::span<const int> row) const;
};

/// Lloyd iterations from k-means++ seeding. An empty cluster is reseeded at
/// the point farthest from its current center.
ClusterModel kmeans_fit(const Matrix& x, std::size_t k, std::uint64_t seed,
                        std::size_t max_iter = 300);

/// Huang-style k-modes: Hamming dissimilarity, per-attribute modes with ties
/// going to the lowest category index.
ClusterModel kmodes_fit(const CategoricalTable& x, std::size_t k, std::uint64_t seed,
                        std::size_t max_iter = 100);

struct SilhouetteReport {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> sc;
  std::vector<std::size_t> rows;  // input rows the values refer to
  double mean = 0.0;
};

struct SilhouetteOptions {
  std::size_t exact_cap = 20000;  // above this, a subsample is scored
  std::size_t sample_size = 5000;
  std::uint64_t seed = 0;
};

SilhouetteReport silhouette(const Matrix& x, std::span<const std::size_t> assignments,
                            const SilhouetteOptions& options = {});
SilhouetteReport silhouette(const CategoricalTable& x, std::span<const std::size_t> assignments,
                            const SilhouetteOptions& options = {});

struct KSelection {
  std::size_t best_k = 0;
  std::vector<std::pair<std::size_t, double>> mean_sc;  // (k, mean silhouette)
};

/// Fits every k in [k_min, k_max] and keeps the highest mean silhouette;
/// ties go to the smaller k. Each k uses the stream derived from (seed, k).
KSelection select_k(const Matrix& x, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                    const SilhouetteOptions& options = {});
KSelection select_k(const CategoricalTable& x, std::size_t k_min, std::size_t k_max,
                    std::uint64_t seed, const SilhouetteOptions& options = {});

std::size_t hamming_distance(std::span<const int> a, std::span<const int> b);

std::string_view to_string(ClusterMethod m);
ClusterMethod cluster_method_from_string(std::string_view s);

/// Structured text for a cluster model (JSON object).
std::string cluster_model_to_text(const ClusterModel& model, double mean_sc,
                                  const std::string& config_hash);
ClusterModel cluster_model_from_text(std::string_view text);

}  // namespace fl4s
