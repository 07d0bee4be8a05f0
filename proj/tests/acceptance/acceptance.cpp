// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Usage: fl4s_acceptance [scratch-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "fl4s/detect.hpp"
#include "fl4s/embed/pca.hpp"
#include "fl4s/eval.hpp"
#include "fl4s/linalg.hpp"
#include "fl4s/pipeline.hpp"
#include "fl4s/segment.hpp"
#include "oracles.hpp"

using namespace fl4s;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double ae = 0.0, as2s = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ae = std::max(ae, check::ae_gradients(seed).max_rel_error);
    as2s = std::max(as2s, check::as2s_gradients(seed).max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {ae < 1e-4 && as2s < 1e-4 && secs < 30.0,
          "max rel error ae " + fmt(ae) + ", as2s " + fmt(as2s) + " over 5 seeds in " + fmt(secs) + " s"};
}

Outcome oracle_equivalence() {
  Rng rng(2024);
  std::vector<std::string> bad;

  // kNN against the brute-force ordering on 200 points.
  const Matrix pts = oracle::random_matrix(200, 6, rng);
  const KnnScorer scorer(pts, 5);
  std::size_t knn_mismatch = 0;
  for (std::size_t i = 0; i < pts.rows(); ++i)
    knn_mismatch += scorer.score(pts.row(i)).mean_distance != oracle::knn_brute_force(pts, pts.row(i), 5);
  if (knn_mismatch) bad.push_back("knn " + std::to_string(knn_mismatch) + " mismatches");

  // PR-AUC: the 4-point hand example and 1000 random points.
  const std::vector<double> s4{4, 3, 2, 1};
  const std::vector<Label> l4{Label::anomalous, Label::normal, Label::anomalous, Label::normal};
  const double hand = pr_curve(s4, l4).area;
  if (std::abs(hand - 5.0 / 6.0) > 1e-15) bad.push_back("4-point area " + fmt(hand, 17));
  std::vector<double> s(1000);
  std::vector<Label> l(1000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::round(rng.normal() * 50.0) / 10.0;
    l[i] = rng.uniform() < 0.1 ? Label::anomalous : Label::normal;
  }
  const double gap = std::abs(pr_curve(s, l).area - oracle::average_precision_enumerated(s, l));
  if (gap > 1e-12) bad.push_back("random PR gap " + fmt(gap));

  // PCA components against sym_eig of a loop-built 5x5 covariance.
  const Matrix x = oracle::random_matrix(60, 5, rng);
  const auto model = pca_fit(x, 5);
  Matrix cov(5, 5);
  std::vector<double> mean(5, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < 5; ++j) mean[j] += x(i, j) / 60.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = 0; b < 5; ++b) cov(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]) / 59.0;
  const auto eig = sym_eig(cov);
  double pca_gap = 0.0;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) pca_gap = std::max(pca_gap, std::abs(model.components(r, c) - eig.vectors(r, c)));
  if (pca_gap > 1e-8) bad.push_back("pca component gap " + fmt(pca_gap));

  // Teacher-forced AS2S loss against the straight-line version.
  const double as2s_gap = check::as2s_forward_gap(2024);
  if (as2s_gap > 1e-10) bad.push_back("as2s loss gap " + fmt(as2s_gap));

  return {bad.empty(), bad.empty() ? "knn exact on 200 points, PR 5/6 and 1000-point oracle, pca gap " + fmt(pca_gap) +
                                         ", as2s loss gap " + fmt(as2s_gap)
                                   : bad.front()};
}

Outcome exact_properties() {
  std::vector<std::string> bad;
  const auto att = check::attention_sums(7, 10000);
  if (att.max_sum_error > 1e-12 || att.min_weight < 0.0) bad.push_back("attention sum error " + fmt(att.max_sum_error));

  Rng rng(99);
  std::size_t sil_out = 0, cost_up = 0, recon_up = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 10 + rng.below(80);
    const Matrix x = oracle::random_matrix(n, 1 + rng.below(5), rng, std::exp(rng.uniform(-2, 2)));
    const std::size_t k = 2 + rng.below(5);
    const auto km = kmeans_fit(x, k, rng.next_u64());
    for (std::size_t i = 1; i < km.cost_history.size(); ++i) cost_up += km.cost_history[i] > km.cost_history[i - 1];
    std::vector<std::size_t> assign(n);
    for (std::size_t i = 0; i < n; ++i) assign[i] = i < k ? i : rng.below(k);
    for (double v : silhouette(x, assign).sc) sil_out += v < -1.0 || v > 1.0;

    CategoricalTable cat(n, std::vector<int>(4));
    for (auto& row : cat)
      for (int& v : row) v = static_cast<int>(rng.below(4));
    const auto kmo = kmodes_fit(cat, k, rng.next_u64());
    for (std::size_t i = 1; i < kmo.cost_history.size(); ++i) cost_up += kmo.cost_history[i] > kmo.cost_history[i - 1];
    for (double v : silhouette(cat, assign).sc) sil_out += v < -1.0 || v > 1.0;

    const std::size_t d = 2 + rng.below(6);
    const Matrix y = oracle::random_matrix(d + 5 + rng.below(20), d, rng);
    double prev = INFINITY;
    for (std::size_t p = 1; p <= d; ++p) {
      const auto model = pca_fit(y, p);
      double err = 0.0;
      for (std::size_t i = 0; i < y.rows(); ++i) err += squared_distance(pca_reconstruct(model, y.row(i)), y.row(i));
      recon_up += err > prev + 1e-9 * (1.0 + prev);
      prev = err;
    }
  }
  if (sil_out) bad.push_back(std::to_string(sil_out) + " silhouette values outside [-1, 1]");
  if (cost_up) bad.push_back(std::to_string(cost_up) + " clustering cost increases");
  if (recon_up) bad.push_back(std::to_string(recon_up) + " PCA reconstruction increases");
  return {bad.empty(), bad.empty() ? "attention max |sum-1| " + fmt(att.max_sum_error) +
                                         " over 1e4 cases; silhouette, cost and reconstruction checks clean"
                                   : bad.front()};
}

struct BenchmarkRun {
  std::uint64_t seed = 0;
  fs::path workdir;
  std::map<std::string, double> pooled;  // embedder -> PR-AUC
  std::size_t k = 0;
  double seconds = 0.0;
};

BenchmarkRun run_benchmark(const fs::path& root, std::uint64_t seed, const std::string& tag) {
  BenchmarkRun run;
  run.seed = seed;
  run.workdir = root / (tag + "-seed-" + std::to_string(seed));
  fs::remove_all(run.workdir);
  PipelineConfig cfg;
  cfg.workdir = run.workdir;
  cfg.seed = seed;
  const auto t0 = Clock::now();
  for (const auto& row : cmd_repro(cfg))
    if (row.scope == "pooled" && row.pr_auc) run.pooled[row.embedder] = *row.pr_auc;
  run.seconds = seconds_since(t0);
  run.k = cluster_model_from_text(slurp(run.workdir / artifacts::cluster_model)).k;
  std::printf("  seed %llu: k=%zu pca %.3f ae %.3f as2s %.3f (%.0f s)\n", static_cast<unsigned long long>(seed), run.k,
              run.pooled["pca"], run.pooled["ae"], run.pooled["as2s"], run.seconds);
  std::fflush(stdout);
  return run;
}

Outcome clustering_recovery(const std::vector<BenchmarkRun>& runs) {
  std::size_t hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const Matrix x = oracle::gaussian_blobs({{0, 0, 0}, {8, 0, 0}, {4, 7, 0}}, 60, 1.0, rng);
    hits += select_k(x, 2, 8, seed).best_k == 3;
  }
  std::size_t two = 0;
  for (const auto& r : runs) two += r.k == 2;
  return {hits >= 9 && two == runs.size(), "3-blob k=3 on " + std::to_string(hits) + "/10 seeds; benchmark k=2 on " +
                                               std::to_string(two) + "/" + std::to_string(runs.size()) + " seeds"};
}

Outcome end_to_end(const std::vector<BenchmarkRun>& runs) {
  std::size_t wins = 0;
  double slowest = 0.0;
  std::string per_seed;
  for (const auto& r : runs) {
    const double as2s = r.pooled.at("as2s"), pca = r.pooled.at("pca");
    wins += as2s >= 0.5 && as2s >= pca;
    slowest = std::max(slowest, r.seconds);
    per_seed += (per_seed.empty() ? "" : ", ") + fmt(as2s) + " vs " + fmt(pca);
  }
  return {wins >= 4 && slowest < 600.0, "as2s >= max(0.5, pca) on " + std::to_string(wins) + "/" +
                                            std::to_string(runs.size()) + " seeds (as2s vs pca: " + per_seed +
                                            "); slowest run " + fmt(slowest) + " s"};
}

Outcome determinism(const fs::path& root, const BenchmarkRun& first) {
  std::vector<std::string> bad;
  PipelineConfig cfg;
  cfg.workdir = first.workdir;
  cfg.seed = first.seed;
  const std::string summary_before = slurp(first.workdir / artifacts::summary);

  // Same manifest, same workdir: every stage is a no-op.
  for (const auto& stage : {cmd_extract, cmd_cluster, cmd_train, cmd_score, cmd_eval})
    if (!stage(cfg, {}).skipped) bad.push_back("a stage reran with unchanged inputs");

  // Fresh workdir from scratch.
  const BenchmarkRun again = run_benchmark(root, first.seed, "rerun");
  for (auto kind : {EmbedderKind::pca, EmbedderKind::ae, EmbedderKind::as2s})
    if (slurp(first.workdir / artifacts::scores(kind)) != slurp(again.workdir / artifacts::scores(kind)))
      bad.push_back(std::string(to_string(kind)) + " scores differ");
  if (slurp(again.workdir / artifacts::summary) != summary_before) bad.push_back("summary differs");
  return {bad.empty(), bad.empty() ? "no-op rerun skipped every stage; fresh rerun byte-identical scores and summary"
                                   : bad.front()};
}

Outcome scatter_export(const BenchmarkRun& run) {
  PipelineConfig cfg;
  const auto scores = [&] {
    std::ifstream in(run.workdir / artifacts::scores(EmbedderKind::as2s));
    return read_scores(in);
  }();
  std::map<std::size_t, std::size_t> test_size;
  for (const auto& s : scores) ++test_size[s.cluster_id];
  std::size_t files = 0;
  std::vector<std::string> bad;
  for (std::size_t c = 0; c < run.k; ++c)
    for (std::size_t e : cfg.snapshot_epochs) {
      const fs::path p = run.workdir / "eval" /
                         ("scatter_as2s_cluster_" + std::to_string(c) + "_epoch_" + std::to_string(e) + ".csv");
      if (!fs::exists(p)) {
        bad.push_back("missing " + p.filename().string());
        continue;
      }
      ++files;
      std::ifstream in(p);
      std::string line;
      std::size_t rows = 0, cols = 0;
      bool header = true;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
          header = false;
          cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
          continue;
        }
        ++rows;
      }
      if (rows != test_size[c]) bad.push_back(p.filename().string() + " has " + std::to_string(rows) + " rows");
      if (cols != 3) bad.push_back(p.filename().string() + " is not x,y,label");
    }
  return {bad.empty(), bad.empty() ? std::to_string(files) + " files, each with one row per test example"
                                   : bad.front()};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "fl4s-acceptance";
  fs::create_directories(root);

  report(1, "gradient suite", gradient_suite());
  report(2, "oracle equivalence", oracle_equivalence());
  report(3, "exact properties", exact_properties());

  std::printf("  running the default benchmark on seeds 1-5 in %s\n", root.string().c_str());
  std::vector<BenchmarkRun> runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) runs.push_back(run_benchmark(root, seed, "bench"));

  report(4, "clustering recovery", clustering_recovery(runs));
  report(5, "end-to-end benchmark", end_to_end(runs));
  report(6, "determinism", determinism(root, runs.front()));
  report(7, "embedding-evolution export", scatter_export(runs.front()));

  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
