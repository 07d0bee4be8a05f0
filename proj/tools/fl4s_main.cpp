// fl4s command line: synth | extract | cluster | train | score | eval | repro
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fl4s/pipeline.hpp"

namespace {

fl4s::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fl4s::pipeline_config_from_text(ss.str());
}

void print_summary(const std::vector<fl4s::SummaryRow>& rows) {
  std::printf("%-8s %-8s %7s %9s %9s %8s\n", "embedder", "scope", "cluster", "examples", "anomalies", "pr_auc");
  for (const auto& r : rows) {
    const std::string cluster = r.cluster ? std::to_string(*r.cluster) : "-";
    const std::string auc = r.pr_auc ? std::to_string(*r.pr_auc) : "n/a";
    std::printf("%-8s %-8s %7s %9zu %9zu %8s\n", r.embedder.c_str(), r.scope.c_str(), cluster.c_str(),
                r.examples, r.positives, auc.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("fl4s");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"fl4s: self-supervised feature learning for security event sequences"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, workdir, embedder, dump_config;
  std::uint64_t seed = 0;
  bool strict = false, verbose = false;
  app.add_option("--config", config_path, "Pipeline config file (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed for every stage");
  auto* workdir_opt = app.add_option("--workdir", workdir, "Directory holding all artifacts");
  auto* embedder_opt = app.add_option("--embedder", embedder, "Restrict to one embedder: pca, ae or as2s");
  app.add_flag("--strict", strict, "Reject malformed input lines instead of skipping them");
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_option("--dump-config", dump_config, "Write the effective config to this path and exit");

  const char* names[] = {"synth", "extract", "cluster", "train", "score", "eval", "repro"};
  const char* help[] = {"Generate synthetic flows and labels", "Parse flows into user-week examples",
                        "Segment users into clusters", "Fit one embedder per cluster on the training users",
                        "Score held-out user-weeks with kNN distance", "PR curves, summary and scatter exports",
                        "Run every stage and print the PR-AUC summary"};
  for (std::size_t i = 0; i < std::size(names); ++i) app.add_subcommand(names[i], help[i]);

  CLI11_PARSE(app, argc, argv);
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    fl4s::PipelineConfig cfg = load_config(config_path);
    if (*seed_opt) cfg.seed = seed;
    if (*workdir_opt) cfg.workdir = workdir;
    if (*embedder_opt) cfg.embedders = {fl4s::embedder_kind_from_string(embedder)};
    if (strict) cfg.strict = true;
    cfg.validate();
    if (!dump_config.empty()) {
      std::ofstream(dump_config) << fl4s::pipeline_config_to_text(cfg) << '\n';
      return 0;
    }

    const fl4s::Logger log = [](fl4s::LogLevel level, const std::string& msg) {
      switch (level) {
        case fl4s::LogLevel::debug: spdlog::debug(msg); break;
        case fl4s::LogLevel::info: spdlog::info(msg); break;
        case fl4s::LogLevel::warn: spdlog::warn(msg); break;
      }
    };
    spdlog::info("config hash {} seed {} workdir {}", cfg.hash(), cfg.seed, cfg.workdir.string());

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") fl4s::cmd_synth(cfg, log);
    else if (cmd == "extract") fl4s::cmd_extract(cfg, log);
    else if (cmd == "cluster") fl4s::cmd_cluster(cfg, log);
    else if (cmd == "train") fl4s::cmd_train(cfg, log);
    else if (cmd == "score") fl4s::cmd_score(cfg, log);
    else if (cmd == "eval") {
      fl4s::cmd_eval(cfg, log);
      print_summary(fl4s::read_summary(cfg.workdir / fl4s::artifacts::summary));
    } else {
      print_summary(fl4s::cmd_repro(cfg, log));
    }
  } catch (const fl4s::MissingArtifact& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
