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

struct ClusterSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct Split {
  std::vector<ClusterSplit> clusters;
  double ratio = 0.15;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  bool is_test(std::size_t cluster, const std::string& user) const;
};

/// Per cluster, round(ratio * n) users (at least one) are drawn without
/// replacement for the test side. A cluster with a single user keeps it in
/// training and records a warning. Users are sorted before sampling, so the
/// input order does not matter.
Split split_users(const std::vector<std::vector<std::string>>& users_per_cluster, double ratio,
                  std::uint64_t seed);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // thresholds descending
  double area = 0.0;            // average precision
  std::size_t positives = 0;
  std::size_t total = 0;
};

/// Sweeps every distinct score as a threshold (score >= threshold flags an
/// anomaly). Tied scores enter together, and the area is the step-wise
/// average precision over those thresholds.
PrCurve pr_curve(std::span<const double> scores, std::span<const Label> labels);

void write_pr_curve(std::ostream& out, const PrCurve& curve,
                    std::span<const std::string> comments = {});

/// Projects every epoch's representations (rows = examples) onto the top two
/// principal axes of the last epoch, so all epochs share axes. With fewer
/// than two columns or two rows the inputs are returned unchanged.
std::vector<Matrix> scatter_project(std::span<const Matrix> epochs);

/// CSV rows "x,y,label" (or every column when the projection kept them).
void write_scatter(std::ostream& out, const Matrix& points,
                   std::span<const std::optional<Label>> labels,
                   std::span<const std::string> comments = {});

}  // namespace fl4s
