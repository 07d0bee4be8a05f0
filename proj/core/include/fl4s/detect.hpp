#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fl4s/dataset.hpp"
#include "fl4s/matrix.hpp"

namespace fl4s {

struct KnnResult {
  double mean_distance = 0.0;  // the anomaly score
  double kth_distance = 0.0;
};

/// Exhaustive k-nearest-neighbour scorer over one cluster's training
/// representations. Neighbours are ordered by (distance, reference index).
class KnnScorer {
 public:
  KnnScorer(Matrix reference, std::size_t k_nn = 5);

  KnnResult score(std::span<const double> query) const;
  /// One result per query row, in row order.
  std::vector<KnnResult> score_all(const Matrix& queries) const;

  std::size_t k() const noexcept { return k_; }
  const Matrix& reference() const noexcept { return reference_; }

 private:
  Matrix reference_;
  std::size_t k_;
};

struct AnomalyScore {
  std::string user_id;
  std::int64_t week_index = 0;
  std::size_t cluster_id = 0;
  double score = 0.0;
  double kth_distance = 0.0;
  std::optional<Label> label;
};

/// CSV: user_id,week_index,cluster_id,score,kth_distance,label ('' when unknown).
/// Lines starting with '#' carry metadata.
void write_scores(std::ostream& out, std::span<const AnomalyScore> scores,
                  std::span<const std::string> comments = {});
std::vector<AnomalyScore> read_scores(std::istream& in);

}  // namespace fl4s
