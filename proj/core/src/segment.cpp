#include "fl4s/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "fl4s/rng.hpp"

namespace fl4s {

using nlohmann::json;

std::string_view to_string(ClusterMethod m) { return m == ClusterMethod::kmeans ? "kmeans" : "kmodes"; }

ClusterMethod cluster_method_from_string(std::string_view s) {
  if (s == "kmeans") return ClusterMethod::kmeans;
  if (s == "kmodes") return ClusterMethod::kmodes;
  throw std::invalid_argument("unknown clustering method '" + std::string(s) + "'");
}

std::size_t hamming_distance(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming: length mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

std::size_t ClusterModel::assign(std::span<const double> row) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(row, centers.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::size_t ClusterModel::assign(std::span<const int> row) const {
  std::size_t best = 0;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < modes.size(); ++c) {
    const std::size_t d = hamming_distance(row, modes[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace {

void check_k(std::size_t n, std::size_t k, const char* who) {
  if (k < 1) throw std::invalid_argument(std::string(who) + ": k must be >= 1");
  if (k > n) {
    throw std::invalid_argument(std::string(who) + ": k=" + std::to_string(k) +
                                " exceeds the number of rows (" + std::to_string(n) + ")");
  }
}

/// Seeding by sampling proportional to weight(distance to nearest chosen
/// center); falls back to a uniform pick among unchosen rows when every
/// weight is zero.
template <typename Dist>
std::vector<std::size_t> plus_plus_seeds(std::size_t n, std::size_t k, Rng& rng, Dist dist) {
  std::vector<std::size_t> chosen;
  std::vector<bool> used(n, false);
  chosen.push_back(static_cast<std::size_t>(rng.below(n)));
  used[chosen.back()] = true;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const std::size_t last = chosen.back();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist(i, last));
      if (!used[i]) total += nearest[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (used[i] || nearest[i] <= 0.0) continue;
        pick = i;
        u -= nearest[i];
        if (u < 0.0) break;
      }
    }
    if (pick == n) {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!used[i]) free.push_back(i);
      pick = free[static_cast<std::size_t>(rng.below(free.size()))];
    }
    used[pick] = true;
    chosen.push_back(pick);
  }
  return chosen;
}

}  // namespace

ClusterModel kmeans_fit(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  const std::size_t n = x.rows(), m = x.cols();
  check_k(n, k, "kmeans_fit");
  Rng rng(seed);
  ClusterModel model;
  model.method = ClusterMethod::kmeans;
  model.k = k;
  model.seed = seed;
  model.centers = Matrix(k, m);
  const auto seeds = plus_plus_seeds(n, k, rng, [&](std::size_t i, std::size_t j) {
    return squared_distance(x.row(i), x.row(j));
  });
  for (std::size_t c = 0; c < k; ++c)
    std::copy(x.row(seeds[c]).begin(), x.row(seeds[c]).end(), model.centers.row(c).begin());

  std::vector<std::size_t> assign(n, k);
  std::vector<double> cost(n, 0.0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(x.row(i), model.centers.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      cost[i] = best_d;
    }
    // Reseed empty clusters at the currently worst-served point.
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assign) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assign[i]] <= 1) continue;
        if (far == n || cost[i] > cost[far]) far = i;
      }
      if (far == n) continue;
      --sizes[assign[far]];
      assign[far] = c;
      ++sizes[c];
      cost[far] = 0.0;
      std::copy(x.row(far).begin(), x.row(far).end(), model.centers.row(c).begin());
      changed = true;
    }
    model.cost_history.push_back(std::accumulate(cost.begin(), cost.end(), 0.0));
    model.iterations = iter + 1;
    if (!changed && iter > 0) break;

    model.centers.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = model.centers.row(assign[i]);
      const auto src = x.row(i);
      for (std::size_t j = 0; j < m; ++j) dst[j] += src[j];
    }
    for (std::size_t c = 0; c < k; ++c)
      for (double& v : model.centers.row(c)) v /= static_cast<double>(sizes[c]);
  }
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) inertia += squared_distance(x.row(i), model.centers.row(assign[i]));
  model.inertia = inertia;
  model.assignments = std::move(assign);
  return model;
}

namespace {

std::vector<int> column_modes(const CategoricalTable& x, std::span<const std::size_t> members,
                              std::size_t m) {
  std::vector<int> mode(m, 0);
  for (std::size_t a = 0; a < m; ++a) {
    std::map<int, std::size_t> freq;  // ordered: ties resolve to the lowest category
    for (std::size_t i : members) ++freq[x[i][a]];
    std::size_t best = 0;
    for (const auto& [cat, count] : freq) {
      if (count > best) {
        best = count;
        mode[a] = cat;
      }
    }
  }
  return mode;
}

}  // namespace

ClusterModel kmodes_fit(const CategoricalTable& x, std::size_t k, std::uint64_t seed,
                        std::size_t max_iter) {
  const std::size_t n = x.size();
  check_k(n, k, "kmodes_fit");
  const std::size_t m = x.front().size();
  for (const auto& row : x) {
    if (row.size() != m) throw std::invalid_argument("kmodes_fit: ragged categorical table");
  }
  Rng rng(seed);
  ClusterModel model;
  model.method = ClusterMethod::kmodes;
  model.k = k;
  model.seed = seed;
  const auto seeds = plus_plus_seeds(n, k, rng, [&](std::size_t i, std::size_t j) {
    return static_cast<double>(hamming_distance(x[i], x[j]));
  });
  for (std::size_t c = 0; c < k; ++c) model.modes.push_back(x[seeds[c]]);

  std::vector<std::size_t> assign(n, k);
  std::vector<std::size_t> cost(n, 0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0, best_d = std::numeric_limits<std::size_t>::max();
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t d = hamming_distance(x[i], model.modes[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      cost[i] = best_d;
    }
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);
    for (std::size_t c = 0; c < k; ++c) {
      if (!members[c].empty()) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (members[assign[i]].size() <= 1) continue;
        if (far == n || cost[i] > cost[far]) far = i;
      }
      if (far == n) continue;
      auto& from = members[assign[far]];
      from.erase(std::find(from.begin(), from.end(), far));
      assign[far] = c;
      members[c].push_back(far);
      cost[far] = 0;
      model.modes[c] = x[far];
      changed = true;
    }
    model.cost_history.push_back(static_cast<double>(std::accumulate(cost.begin(), cost.end(), std::size_t{0})));
    model.iterations = iter + 1;
    if (!changed && iter > 0) break;
    for (std::size_t c = 0; c < k; ++c) {
      std::sort(members[c].begin(), members[c].end());
      model.modes[c] = column_modes(x, members[c], m);
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += static_cast<double>(hamming_distance(x[i], model.modes[assign[i]]));
  model.inertia = total;
  model.assignments = std::move(assign);
  return model;
}

namespace {

template <typename Distance>
SilhouetteReport silhouette_impl(std::size_t n, std::span<const std::size_t> assignments,
                                 Distance distance, const SilhouetteOptions& options) {
  if (assignments.size() != n) {
    throw std::invalid_argument("silhouette: " + std::to_string(assignments.size()) +
                                " assignments for " + std::to_string(n) + " rows");
  }
  SilhouetteReport report;
  report.rows.resize(n);
  std::iota(report.rows.begin(), report.rows.end(), 0);
  if (n > options.exact_cap) {
    Rng rng = Rng::derive(options.seed, "silhouette");
    rng.shuffle(std::span<std::size_t>(report.rows));
    report.rows.resize(std::min(options.sample_size, n));
    std::sort(report.rows.begin(), report.rows.end());
  }
  const auto& rows = report.rows;
  std::size_t k = 0;
  for (std::size_t r : rows) k = std::max(k, assignments[r] + 1);
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t r : rows) ++sizes[assignments[r]];
  const auto populated = std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
  if (populated < 2) throw std::invalid_argument("silhouette: needs at least two non-empty clusters");

  const std::size_t m = rows.size();
  report.a.assign(m, 0.0);
  report.b.assign(m, 0.0);
  report.sc.assign(m, 0.0);
  std::vector<double> sums(k);
  double total = 0.0;
  for (std::size_t ii = 0; ii < m; ++ii) {
    std::fill(sums.begin(), sums.end(), 0.0);
    const std::size_t i = rows[ii];
    for (std::size_t jj = 0; jj < m; ++jj) {
      if (jj == ii) continue;
      sums[assignments[rows[jj]]] += distance(i, rows[jj]);
    }
    const std::size_t own = assignments[i];
    if (sizes[own] <= 1) {
      report.sc[ii] = 0.0;  // singleton convention
      total += 0.0;
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c)
        if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
      report.b[ii] = b;
      continue;
    }
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    report.a[ii] = a;
    report.b[ii] = b;
    report.sc[ii] = denom > 0.0 ? (b - a) / denom : 0.0;
    total += report.sc[ii];
  }
  report.mean = total / static_cast<double>(m);
  return report;
}

void check_range(std::size_t n, std::size_t k_min, std::size_t k_max) {
  if (k_min > k_max) throw std::invalid_argument("select_k: empty k range");
  if (k_min < 2 || k_max + 1 > n) {
    throw std::invalid_argument("select_k: k range [" + std::to_string(k_min) + ", " +
                                std::to_string(k_max) + "] must lie within [2, " +
                                std::to_string(n > 0 ? n - 1 : 0) + "]");
  }
}

template <typename Fit, typename Score>
KSelection select_impl(std::size_t k_min, std::size_t k_max, std::uint64_t seed, Fit fit, Score score) {
  KSelection out;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const std::uint64_t k_seed = Rng::derive(seed, static_cast<std::uint64_t>(k)).next_u64();
    const ClusterModel model = fit(k, k_seed);
    const double sc = score(model);
    out.mean_sc.emplace_back(k, sc);
    if (sc > best) {
      best = sc;
      out.best_k = k;
    }
  }
  return out;
}

}  // namespace

SilhouetteReport silhouette(const Matrix& x, std::span<const std::size_t> assignments,
                            const SilhouetteOptions& options) {
  return silhouette_impl(
      x.rows(), assignments,
      [&](std::size_t i, std::size_t j) { return euclidean_distance(x.row(i), x.row(j)); }, options);
}

SilhouetteReport silhouette(const CategoricalTable& x, std::span<const std::size_t> assignments,
                            const SilhouetteOptions& options) {
  return silhouette_impl(
      x.size(), assignments,
      [&](std::size_t i, std::size_t j) { return static_cast<double>(hamming_distance(x[i], x[j])); },
      options);
}

KSelection select_k(const Matrix& x, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                    const SilhouetteOptions& options) {
  check_range(x.rows(), k_min, k_max);
  return select_impl(
      k_min, k_max, seed, [&](std::size_t k, std::uint64_t s) { return kmeans_fit(x, k, s); },
      [&](const ClusterModel& m) { return silhouette(x, m.assignments, options).mean; });
}

KSelection select_k(const CategoricalTable& x, std::size_t k_min, std::size_t k_max,
                    std::uint64_t seed, const SilhouetteOptions& options) {
  check_range(x.size(), k_min, k_max);
  return select_impl(
      k_min, k_max, seed, [&](std::size_t k, std::uint64_t s) { return kmodes_fit(x, k, s); },
      [&](const ClusterModel& m) { return silhouette(x, m.assignments, options).mean; });
}

std::string cluster_model_to_text(const ClusterModel& model, double mean_sc,
                                  const std::string& config_hash) {
  json j;
  j["format"] = "fl4s-cluster-model-v1";
  j["method"] = to_string(model.method);
  j["k"] = model.k;
  j["seed"] = model.seed;
  j["mean_sc"] = mean_sc;
  j["inertia"] = model.inertia;
  j["iterations"] = model.iterations;
  j["config_hash"] = config_hash;
  if (model.method == ClusterMethod::kmeans) {
    json centers = json::array();
    for (std::size_t c = 0; c < model.centers.rows(); ++c)
      centers.push_back(std::vector<double>(model.centers.row(c).begin(), model.centers.row(c).end()));
    j["centers"] = std::move(centers);
  } else {
    j["modes"] = model.modes;
  }
  return j.dump(2);
}

ClusterModel cluster_model_from_text(std::string_view text) {
  const json j = json::parse(text);
  ClusterModel m;
  m.method = cluster_method_from_string(j.at("method").get<std::string>());
  m.k = j.at("k").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.inertia = j.at("inertia").get<double>();
  m.iterations = j.value("iterations", std::size_t{0});
  if (m.method == ClusterMethod::kmeans) {
    const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    m.centers = Matrix(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy(rows[r].begin(), rows[r].end(), m.centers.row(r).begin());
  } else {
    m.modes = j.at("modes").get<std::vector<std::vector<int>>>();
  }
  return m;
}

}  // namespace fl4s
