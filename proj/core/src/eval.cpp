#include "fl4s/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fl4s/embed/pca.hpp"
#include "fl4s/rng.hpp"

namespace fl4s {

bool Split::is_test(std::size_t cluster, const std::string& user) const {
  const auto& test = clusters.at(cluster).test;
  return std::binary_search(test.begin(), test.end(), user);
}

Split split_users(const std::vector<std::vector<std::string>>& users_per_cluster, double ratio,
                  std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split_users: ratio must lie in [0, 1)");
  }
  Split split;
  split.ratio = ratio;
  split.seed = seed;
  for (std::size_t c = 0; c < users_per_cluster.size(); ++c) {
    std::vector<std::string> users = users_per_cluster[c];
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    ClusterSplit cs;
    if (users.size() < 2) {
      split.warnings.push_back("cluster " + std::to_string(c) + " has " +
                               std::to_string(users.size()) + " user(s); nothing held out");
      cs.train = std::move(users);
      split.clusters.push_back(std::move(cs));
      continue;
    }
    const auto n = users.size();
    std::size_t n_test = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    Rng rng = Rng::derive(seed, c);
    std::vector<std::string> order = users;
    rng.shuffle(std::span<std::string>(order));
    cs.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    cs.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(cs.test.begin(), cs.test.end());
    std::sort(cs.train.begin(), cs.train.end());
    split.clusters.push_back(std::move(cs));
  }
  return split;
}

PrCurve pr_curve(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("pr_curve: " + std::to_string(scores.size()) + " scores but " +
                                std::to_string(labels.size()) + " labels");
  }
  PrCurve curve;
  curve.total = scores.size();
  curve.positives = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), Label::anomalous));
  if (curve.positives == 0) {
    throw std::invalid_argument("pr_curve: no anomalous labels, recall is undefined");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("pr_curve: non-finite score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double p = static_cast<double>(curve.positives);
  std::size_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]] == Label::anomalous) ++tp;
      ++seen;
      ++i;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    const double recall = static_cast<double>(tp) / p;
    curve.area += (recall - prev_recall) * precision;
    prev_recall = recall;
    curve.points.push_back({threshold, precision, recall});
  }
  curve.area = std::clamp(curve.area, 0.0, 1.0);
  return curve;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace

void write_pr_curve(std::ostream& out, const PrCurve& curve, std::span<const std::string> comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "# area=" << fmt(curve.area) << " positives=" << curve.positives
      << " total=" << curve.total << '\n';
  out << "threshold,precision,recall\n";
  for (const auto& pt : curve.points) {
    out << fmt(pt.threshold) << ',' << fmt(pt.precision) << ',' << fmt(pt.recall) << '\n';
  }
}

std::vector<Matrix> scatter_project(std::span<const Matrix> epochs) {
  if (epochs.empty()) return {};
  const Matrix& last = epochs.back();
  for (const Matrix& e : epochs) {
    if (e.cols() != last.cols()) throw std::invalid_argument("scatter_project: epoch widths differ");
  }
  if (last.cols() < 2 || last.rows() < 2) return {epochs.begin(), epochs.end()};
  const PcaModel pca = pca_fit(last, 2);
  std::vector<Matrix> out;
  for (const Matrix& e : epochs) {
    Matrix proj(e.rows(), 2);
    for (std::size_t r = 0; r < e.rows(); ++r) {
      const auto z = pca_encode(pca, e.row(r));
      proj(r, 0) = z[0];
      proj(r, 1) = z[1];
    }
    out.push_back(std::move(proj));
  }
  return out;
}

void write_scatter(std::ostream& out, const Matrix& points,
                   std::span<const std::optional<Label>> labels,
                   std::span<const std::string> comments) {
  if (labels.size() != points.rows()) {
    throw std::invalid_argument("write_scatter: label count does not match point count");
  }
  for (const auto& c : comments) out << "# " << c << '\n';
  if (points.cols() == 2) {
    out << "x,y";
  } else {
    for (std::size_t c = 0; c < points.cols(); ++c) out << (c ? ",c" : "c") << c;
  }
  out << ",label\n";
  for (std::size_t r = 0; r < points.rows(); ++r) {
    for (std::size_t c = 0; c < points.cols(); ++c) out << fmt(points(r, c)) << ',';
    out << (labels[r] ? to_string(*labels[r]) : "") << '\n';
  }
}

}  // namespace fl4s
