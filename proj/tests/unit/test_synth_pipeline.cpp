#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fl4s/pipeline.hpp"
#include "fl4s/synth.hpp"

using namespace fl4s;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig cfg = default_synth_config();
  cfg.n_users = 30;
  cfg.n_weeks = 3;
  cfg.anomaly_rate = 0.05;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("fl4s-test-" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

PipelineConfig small_pipeline(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.workdir = dir;
  cfg.synth = small_synth(0);
  cfg.embed.p = 4;
  cfg.embed.epochs = 3;
  cfg.snapshot_epochs = {1, 3};
  cfg.cluster.k = 2;
  cfg.k_nn = 3;
  cfg.test_ratio = 0.3;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST(Synth, DefaultCountsAreExact) {
  const SynthConfig cfg = default_synth_config();
  EXPECT_EQ(cfg.anomaly_count(), 32u);
  std::ostringstream flows, labels;
  SynthConfig small = small_synth(3);
  const auto summary = generate(small, flows, labels);
  EXPECT_EQ(summary.user_weeks, 90u);
  EXPECT_EQ(summary.anomalous, small.anomaly_count());
  std::size_t anomalous = 0;
  for (const auto& [key, label] : summary.labels) anomalous += label == Label::anomalous;
  EXPECT_EQ(anomalous, summary.anomalous);
  EXPECT_EQ(summary.transform_of.size(), summary.anomalous);
}

TEST(Synth, ZeroRateIsAllNormal) {
  SynthConfig cfg = small_synth(1);
  cfg.anomaly_rate = 0.0;
  std::ostringstream flows, labels;
  const auto summary = generate(cfg, flows, labels);
  for (const auto& [key, label] : summary.labels) EXPECT_EQ(label, Label::normal);
}

TEST(Synth, SameSeedSameBytes) {
  std::ostringstream f1, l1, f2, l2, f3, l3;
  generate(small_synth(5), f1, l1);
  generate(small_synth(5), f2, l2);
  generate(small_synth(6), f3, l3);
  EXPECT_EQ(f1.str(), f2.str());
  EXPECT_EQ(l1.str(), l2.str());
  EXPECT_NE(f1.str(), f3.str());
}

TEST(Synth, OutputParsesWithoutSkips) {
  std::stringstream flows, labels;
  const auto summary = generate(small_synth(7), flows, labels);
  const auto parsed = parse_flows(flows, netflow_v1_schema(), ParseOptions{true, 20});
  EXPECT_EQ(parsed.report.skipped, 0u);
  EXPECT_EQ(parsed.records.size(), summary.flows);
  EXPECT_EQ(read_labels(labels), summary.labels);
}

TEST(Synth, InvalidConfigNamesField) {
  SynthConfig cfg = default_synth_config();
  cfg.archetypes[0].weight = 0.5;
  try {
    cfg.validate();
    FAIL() << "weights summing to 0.7 accepted";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("weight"), std::string::npos) << e.what();
  }
  cfg = default_synth_config();
  cfg.anomaly_rate = 0.6;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = default_synth_config();
  cfg.start_date = "2024-01-02";
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Synth, ConfigTextRoundTrip) {
  SynthConfig cfg = small_synth(9);
  cfg.transforms.scan_flows = 12;
  const SynthConfig back = synth_config_from_text(synth_config_to_text(cfg));
  EXPECT_EQ(synth_config_to_text(back), synth_config_to_text(cfg));
  EXPECT_THROW(synth_config_from_text(R"({"n_users": 3, "bogus": 1})"), std::invalid_argument);
}

TEST(PipelineConfig, HashIgnoresWorkdirAndEmbedders) {
  PipelineConfig a, b;
  b.workdir = "elsewhere";
  b.embedders = {EmbedderKind::pca};
  EXPECT_EQ(a.hash(), b.hash());
  b.k_nn = 7;
  EXPECT_NE(a.hash(), b.hash());
  const PipelineConfig back = pipeline_config_from_text(pipeline_config_to_text(a));
  EXPECT_EQ(back.hash(), a.hash());
}

TEST(Pipeline, StageBeforeItsInputsNamesTheProducer) {
  TempDir dir("missing");
  const PipelineConfig cfg = small_pipeline(dir.path);
  try {
    cmd_train(cfg);
    FAIL() << "train ran without a dataset";
  } catch (const MissingArtifact& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("extract"), std::string::npos) << msg;
  }
}

TEST(Pipeline, SmallReproIsDeterministicAndResumable) {
  TempDir a("repro-a"), b("repro-b");
  PipelineConfig cfg = small_pipeline(a.path);
  const auto rows = cmd_repro(cfg);
  std::size_t pooled = 0;
  for (const auto& r : rows) pooled += r.scope == "pooled";
  EXPECT_EQ(pooled, 3u);
  EXPECT_TRUE(fs::exists(a.path / artifacts::manifest));
  for (auto kind : {EmbedderKind::pca, EmbedderKind::ae, EmbedderKind::as2s}) {
    const std::string scores = slurp(a.path / artifacts::scores(kind));
    EXPECT_NE(scores.find("config_hash=" + cfg.hash()), std::string::npos);
  }

  // Nothing changed, so every stage is skipped.
  EXPECT_TRUE(cmd_train(cfg).skipped);
  EXPECT_TRUE(cmd_eval(cfg).skipped);

  cfg.workdir = b.path;
  cmd_repro(cfg);
  for (auto kind : {EmbedderKind::pca, EmbedderKind::ae, EmbedderKind::as2s})
    EXPECT_EQ(slurp(a.path / artifacts::scores(kind)), slurp(b.path / artifacts::scores(kind)));
  EXPECT_EQ(slurp(a.path / artifacts::summary), slurp(b.path / artifacts::summary));

  // A different config refuses artifacts made under the old one until the
  // producing stages are rerun.
  cfg.embed.epochs = 4;
  EXPECT_THROW(cmd_train(cfg), std::runtime_error);
  EXPECT_FALSE(cmd_extract(cfg).skipped);
  EXPECT_FALSE(cmd_cluster(cfg).skipped);
  EXPECT_FALSE(cmd_train(cfg).skipped);
}
