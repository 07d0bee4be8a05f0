#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fl4s/dataset.hpp"
#include "fl4s/embed/config.hpp"
#include "fl4s/features.hpp"
#include "fl4s/segment.hpp"
#include "fl4s/synth.hpp"

namespace fl4s {

struct ClusterSettings {
  ClusterMethod method = ClusterMethod::kmeans;
  std::size_t k = 0;  // 0 selects k by silhouette over [k_min, k_max]
  std::size_t k_min = 2;
  std::size_t k_max = 8;
  bool standardize = true;
  std::size_t categories = 4;  // quantile bins per attribute for k-modes
};

struct PipelineConfig {
  std::filesystem::path workdir = "fl4s-work";
  /// External inputs. Empty means the files written by `synth` in workdir.
  std::filesystem::path input_flows;
  std::filesystem::path input_labels;
  std::string schema = "netflow-v1";
  std::filesystem::path schema_file;  // overrides `schema` when set
  FeatureSpec features = default_netflow_spec();
  EventFeatureSpec event_features;
  WindowConfig windows;
  bool log1p = true;
  bool strict = false;
  ClusterSettings cluster;
  std::vector<EmbedderKind> embedders = {EmbedderKind::pca, EmbedderKind::ae, EmbedderKind::as2s};
  EmbedderConfig embed;
  std::size_t k_nn = 5;
  double test_ratio = 0.15;
  std::vector<std::size_t> snapshot_epochs = {1, 15, 24};
  SynthConfig synth = default_synth_config();
  std::uint64_t seed = 0;

  void validate() const;
  /// Hash of everything that changes results; excludes the workdir and the
  /// embedder selection.
  std::string hash() const;
};

std::string pipeline_config_to_text(const PipelineConfig& cfg);
/// Missing fields keep their defaults.
PipelineConfig pipeline_config_from_text(std::string_view text);

/// Raised when a stage is run before the stage producing its inputs.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LogLevel { debug, info, warn };
using Logger = std::function<void(LogLevel, const std::string&)>;

struct StageResult {
  bool skipped = false;  // inputs unchanged since the recorded run
  std::vector<std::filesystem::path> outputs;
};

StageResult cmd_synth(const PipelineConfig& cfg, const Logger& log = {});
StageResult cmd_extract(const PipelineConfig& cfg, const Logger& log = {});
StageResult cmd_cluster(const PipelineConfig& cfg, const Logger& log = {});
StageResult cmd_train(const PipelineConfig& cfg, const Logger& log = {});
StageResult cmd_score(const PipelineConfig& cfg, const Logger& log = {});
StageResult cmd_eval(const PipelineConfig& cfg, const Logger& log = {});

struct SummaryRow {
  std::string embedder;
  std::string scope;  // "pooled" or "cluster"
  std::optional<std::size_t> cluster;
  std::size_t examples = 0;
  std::size_t positives = 0;
  std::optional<double> pr_auc;  // empty when the scope has no anomalies
};

std::vector<SummaryRow> read_summary(const std::filesystem::path& path);

/// synth (unless external inputs are configured), extract, cluster, train,
/// score and eval; returns the summary table.
std::vector<SummaryRow> cmd_repro(const PipelineConfig& cfg, const Logger& log = {});

namespace artifacts {
inline constexpr const char* flows = "flows.csv";
inline constexpr const char* labels = "labels.csv";
inline constexpr const char* dataset = "dataset.jsonl";
inline constexpr const char* clusters = "clusters.csv";
inline constexpr const char* cluster_model = "cluster_model.json";
inline constexpr const char* split = "split.json";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* summary = "eval/summary.csv";
std::string scores(EmbedderKind kind);
std::string model(EmbedderKind kind, std::size_t cluster);
std::string snapshots(EmbedderKind kind, std::size_t cluster);
}  // namespace artifacts

}  // namespace fl4s
