#include "fl4s/detect.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <stdexcept>
#include <utility>

#include "fl4s/records.hpp"

namespace fl4s {

KnnScorer::KnnScorer(Matrix reference, std::size_t k_nn) : reference_(std::move(reference)), k_(k_nn) {
  if (reference_.rows() == 0) throw std::invalid_argument("KnnScorer: empty reference set");
  if (k_ == 0 || k_ > reference_.rows()) {
    throw std::invalid_argument("KnnScorer: k_nn=" + std::to_string(k_) + " must lie in [1, " +
                                std::to_string(reference_.rows()) + "]");
  }
  if (!reference_.all_finite()) throw std::invalid_argument("KnnScorer: non-finite reference");
}

KnnResult KnnScorer::score(std::span<const double> query) const {
  if (query.size() != reference_.cols()) {
    throw std::invalid_argument("KnnScorer: query length " + std::to_string(query.size()) +
                                ", expected " + std::to_string(reference_.cols()));
  }
  std::vector<std::pair<double, std::size_t>> dist(reference_.rows());
  for (std::size_t r = 0; r < reference_.rows(); ++r) {
    dist[r] = {euclidean_distance(query, reference_.row(r)), r};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k_; ++i) sum += dist[i].first;
  return {sum / static_cast<double>(k_), dist[k_ - 1].first};
}

std::vector<KnnResult> KnnScorer::score_all(const Matrix& queries) const {
  std::vector<KnnResult> out;
  out.reserve(queries.rows());
  for (std::size_t r = 0; r < queries.rows(); ++r) out.push_back(score(queries.row(r)));
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("scores: bad number '" + s + "'");
  }
  return v;
}

}  // namespace

void write_scores(std::ostream& out, std::span<const AnomalyScore> scores,
                  std::span<const std::string> comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "user_id,week_index,cluster_id,score,kth_distance,label\n";
  for (const auto& s : scores) {
    out << s.user_id << ',' << s.week_index << ',' << s.cluster_id << ',' << format_double(s.score)
        << ',' << format_double(s.kth_distance) << ',' << (s.label ? to_string(*s.label) : "")
        << '\n';
  }
}

std::vector<AnomalyScore> read_scores(std::istream& in) {
  std::vector<AnomalyScore> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw std::invalid_argument("scores: expected 6 fields in '" + line + "'");
    AnomalyScore s;
    s.user_id = f[0];
    s.week_index = std::stoll(f[1]);
    s.cluster_id = std::stoul(f[2]);
    s.score = parse_double(f[3]);
    s.kth_distance = parse_double(f[4]);
    if (!f[5].empty()) s.label = label_from_string(f[5]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fl4s
