#include "fl4s/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fl4s/detect.hpp"
#include "fl4s/embed/embedder.hpp"
#include "fl4s/eval.hpp"
#include "fl4s/records.hpp"
#include "fl4s/rng.hpp"

#ifndef FL4S_VERSION
#define FL4S_VERSION "unknown"
#endif

namespace fl4s {

namespace fs = std::filesystem;
using nlohmann::json;

namespace artifacts {
std::string scores(EmbedderKind kind) { return "scores_" + std::string(to_string(kind)) + ".csv"; }
std::string model(EmbedderKind kind, std::size_t cluster) {
  return "models/" + std::string(to_string(kind)) + "/cluster_" + std::to_string(cluster) + ".json";
}
std::string snapshots(EmbedderKind kind, std::size_t cluster) {
  return "snapshots/" + std::string(to_string(kind)) + "/cluster_" + std::to_string(cluster) + ".json";
}
}  // namespace artifacts

// ---------------------------------------------------------------------------
// Configuration

namespace {

json feature_spec_json(const FeatureSpec& f) {
  json counts = json::array(), topk = json::array();
  for (auto c : f.counts) counts.push_back(to_string(c));
  for (const auto& t : f.topk) topk.push_back({{"key", to_string(t.key)}, {"k", t.k}});
  return {{"counts", counts}, {"tcp_flag_bitmap", f.tcp_flag_bitmap}, {"topk", topk},
          {"directional", f.directional}};
}

FeatureSpec feature_spec_from(const json& j) {
  FeatureSpec f = default_netflow_spec();
  if (j.contains("counts")) {
    f.counts.clear();
    for (const auto& c : j.at("counts")) f.counts.push_back(count_feature_from_string(c.get<std::string>()));
  }
  if (j.contains("tcp_flag_bitmap")) f.tcp_flag_bitmap = j.at("tcp_flag_bitmap").get<bool>();
  if (j.contains("topk")) {
    f.topk.clear();
    for (const auto& t : j.at("topk")) {
      f.topk.push_back({topk_key_from_string(t.at("key").get<std::string>()), t.value("k", std::size_t{5})});
    }
  }
  if (j.contains("directional")) f.directional = j.at("directional").get<bool>();
  return f;
}

std::string_view representation_name(Representation r) {
  return r == Representation::final_state ? "final_state" : "mean_state";
}

json config_json(const PipelineConfig& c, bool for_hash) {
  json embedders = json::array();
  for (auto k : c.embedders) embedders.push_back(to_string(k));
  json j = {
      {"input_flows", c.input_flows.string()},
      {"input_labels", c.input_labels.string()},
      {"schema", c.schema},
      {"schema_file", c.schema_file.string()},
      {"features", feature_spec_json(c.features)},
      {"event_features",
       {{"work_start_hour", c.event_features.work_start_hour},
        {"work_end_hour", c.event_features.work_end_hour},
        {"utc_offset_seconds", c.event_features.utc_offset_seconds}}},
      {"window_hours", c.windows.window_hours},
      {"utc_offset_seconds", c.windows.utc_offset_seconds},
      {"log1p", c.log1p},
      {"strict", c.strict},
      {"cluster",
       {{"method", to_string(c.cluster.method)},
        {"k", c.cluster.k},
        {"k_min", c.cluster.k_min},
        {"k_max", c.cluster.k_max},
        {"standardize", c.cluster.standardize},
        {"categories", c.cluster.categories}}},
      {"embed",
       {{"p", c.embed.p},
        {"epochs", c.embed.epochs},
        {"learning_rate", c.embed.learning_rate},
        {"batch_size", c.embed.batch_size},
        {"lstm_layers", c.embed.lstm_layers},
        {"adam_beta1", c.embed.adam_beta1},
        {"adam_beta2", c.embed.adam_beta2},
        {"adam_epsilon", c.embed.adam_epsilon},
        {"teacher_forcing", c.embed.teacher_forcing},
        {"representation", representation_name(c.embed.representation)}}},
      {"k_nn", c.k_nn},
      {"test_ratio", c.test_ratio},
      {"snapshot_epochs", c.snapshot_epochs},
      {"synth", json::parse(synth_config_to_text(c.synth))},
      {"seed", c.seed}};
  j["synth"].erase("seed");  // the pipeline seed drives generation
  if (!for_hash) {
    j["workdir"] = c.workdir.string();
    j["embedders"] = embedders;
  }
  return j;
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
  if (workdir.empty()) throw std::invalid_argument("config: workdir must be set");
  if (schema_file.empty()) (void)builtin_schema(schema);
  features.validate();
  windows.validate();
  if (embedders.empty()) throw std::invalid_argument("config: no embedders selected");
  embed.validate();
  if (k_nn < 1) throw std::invalid_argument("config: k_nn must be at least 1");
  if (!(test_ratio >= 0.0 && test_ratio < 1.0)) {
    throw std::invalid_argument("config: test_ratio must lie in [0, 1)");
  }
  if (cluster.k == 0 && (cluster.k_min < 2 || cluster.k_max < cluster.k_min)) {
    throw std::invalid_argument("config: cluster k range must satisfy 2 <= k_min <= k_max");
  }
  if (cluster.method == ClusterMethod::kmodes && cluster.categories < 2) {
    throw std::invalid_argument("config: cluster.categories must be at least 2");
  }
  if (input_flows.empty()) {
    SynthConfig s = synth;
    s.seed = seed;
    s.validate();
  }
}

std::string PipelineConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_json(*this, true).dump())));
  return buf;
}

std::string pipeline_config_to_text(const PipelineConfig& cfg) { return config_json(cfg, false).dump(2); }

PipelineConfig pipeline_config_from_text(std::string_view text) {
  const json j = json::parse(text);
  PipelineConfig c;
  if (j.contains("workdir")) c.workdir = j.at("workdir").get<std::string>();
  if (j.contains("input_flows")) c.input_flows = j.at("input_flows").get<std::string>();
  if (j.contains("input_labels")) c.input_labels = j.at("input_labels").get<std::string>();
  if (j.contains("schema_file")) c.schema_file = j.at("schema_file").get<std::string>();
  read(j, "schema", c.schema);
  if (j.contains("features")) c.features = feature_spec_from(j.at("features"));
  if (j.contains("event_features")) {
    const json& e = j.at("event_features");
    read(e, "work_start_hour", c.event_features.work_start_hour);
    read(e, "work_end_hour", c.event_features.work_end_hour);
    read(e, "utc_offset_seconds", c.event_features.utc_offset_seconds);
  }
  read(j, "window_hours", c.windows.window_hours);
  read(j, "utc_offset_seconds", c.windows.utc_offset_seconds);
  read(j, "log1p", c.log1p);
  read(j, "strict", c.strict);
  if (j.contains("cluster")) {
    const json& k = j.at("cluster");
    if (k.contains("method")) c.cluster.method = cluster_method_from_string(k.at("method").get<std::string>());
    read(k, "k", c.cluster.k);
    read(k, "k_min", c.cluster.k_min);
    read(k, "k_max", c.cluster.k_max);
    read(k, "standardize", c.cluster.standardize);
    read(k, "categories", c.cluster.categories);
  }
  if (j.contains("embedders")) {
    c.embedders.clear();
    for (const auto& e : j.at("embedders")) c.embedders.push_back(embedder_kind_from_string(e.get<std::string>()));
  }
  if (j.contains("embed")) {
    const json& e = j.at("embed");
    read(e, "p", c.embed.p);
    read(e, "epochs", c.embed.epochs);
    read(e, "learning_rate", c.embed.learning_rate);
    read(e, "batch_size", c.embed.batch_size);
    read(e, "lstm_layers", c.embed.lstm_layers);
    read(e, "adam_beta1", c.embed.adam_beta1);
    read(e, "adam_beta2", c.embed.adam_beta2);
    read(e, "adam_epsilon", c.embed.adam_epsilon);
    read(e, "teacher_forcing", c.embed.teacher_forcing);
    if (e.contains("representation")) {
      const auto r = e.at("representation").get<std::string>();
      if (r == "final_state") c.embed.representation = Representation::final_state;
      else if (r == "mean_state") c.embed.representation = Representation::mean_state;
      else throw std::invalid_argument("config: unknown representation '" + r + "'");
    }
  }
  read(j, "k_nn", c.k_nn);
  read(j, "test_ratio", c.test_ratio);
  read(j, "snapshot_epochs", c.snapshot_epochs);
  if (j.contains("synth")) c.synth = synth_config_from_text(j.at("synth").dump());
  read(j, "seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------
// Artifact plumbing

namespace {

void emit(const Logger& log, LogLevel level, const std::string& msg) {
  if (log) log(level, msg);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling and renames it into place.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string content_hash(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingArtifact("missing " + path.string() + "; run `fl4s " + producer + "` first");
  }
}

std::vector<std::string> stamp(const PipelineConfig& cfg) {
  return {"config_hash=" + cfg.hash(), "seed=" + std::to_string(cfg.seed)};
}

/// "# key=value" lines at the top of a CSV artifact.
std::map<std::string, std::string> comment_fields(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line) && !line.empty() && line.front() == '#') {
    std::istringstream words(line.substr(1));
    std::string w;
    while (words >> w) {
      const auto eq = w.find('=');
      if (eq != std::string::npos) out[w.substr(0, eq)] = w.substr(eq + 1);
    }
  }
  return out;
}

void check_hash(const fs::path& path, const std::string& expected, std::string_view found) {
  if (found != expected) {
    throw std::runtime_error(path.string() + " was produced with config hash '" + std::string(found) +
                             "', current config hash is '" + expected +
                             "'; rerun the producing stage");
  }
}

/// Records, per stage, a key over its inputs and the hashes of its outputs.
/// A stage whose key is unchanged and whose outputs are intact is skipped.
class Manifest {
 public:
  explicit Manifest(const PipelineConfig& cfg) : path_(cfg.workdir / artifacts::manifest) {
    if (fs::exists(path_)) {
      try {
        data_ = json::parse(read_file(path_));
      } catch (const json::exception&) {
        data_ = json::object();
      }
    }
    data_["format"] = "fl4s-manifest-v1";
    data_["version"] = FL4S_VERSION;
    data_["config_hash"] = cfg.hash();
    data_["seed"] = cfg.seed;
    if (!data_.contains("stages")) data_["stages"] = json::object();
  }

  bool up_to_date(const std::string& stage, const std::string& key, const fs::path& workdir) const {
    const json& stages = data_.at("stages");
    if (!stages.contains(stage)) return false;
    const json& s = stages.at(stage);
    if (s.value("key", "") != key) return false;
    for (const auto& [rel, hash] : s.at("outputs").items()) {
      const fs::path p = workdir / rel;
      if (!fs::exists(p) || content_hash(p) != hash.get<std::string>()) return false;
    }
    return true;
  }

  std::vector<fs::path> outputs(const std::string& stage, const fs::path& workdir) const {
    std::vector<fs::path> out;
    for (const auto& [rel, _] : data_.at("stages").at(stage).at("outputs").items()) out.push_back(workdir / rel);
    return out;
  }

  void record(const std::string& stage, const std::string& key, const fs::path& workdir,
              const std::vector<fs::path>& outputs, const json& extra = json::object()) {
    json outs = json::object();
    for (const auto& p : outputs) outs[fs::relative(p, workdir).generic_string()] = content_hash(p);
    json s = {{"key", key}, {"outputs", outs}};
    for (const auto& [k, v] : extra.items()) s[k] = v;
    data_["stages"][stage] = s;
    write_atomic(path_, data_.dump(2) + "\n");
  }

 private:
  fs::path path_;
  json data_;
};

std::string stage_key(const PipelineConfig& cfg, const std::string& stage,
                      const std::vector<fs::path>& inputs, const std::string& extra = {}) {
  std::string material = stage + "|" + cfg.hash() + "|" + extra;
  for (const auto& p : inputs) material += "|" + p.filename().string() + "=" + content_hash(p);
  return hex64(fnv1a64(material));
}

fs::path flows_path(const PipelineConfig& cfg) {
  return cfg.input_flows.empty() ? cfg.workdir / artifacts::flows : cfg.input_flows;
}

fs::path labels_path(const PipelineConfig& cfg) {
  if (!cfg.input_labels.empty()) return cfg.input_labels;
  return cfg.input_flows.empty() ? cfg.workdir / artifacts::labels : fs::path{};
}

Dataset load_dataset(const PipelineConfig& cfg) {
  const fs::path path = cfg.workdir / artifacts::dataset;
  require_artifact(path, "extract");
  std::ifstream in(path);
  Dataset ds = read_dataset(in);
  check_hash(path, cfg.hash(), ds.meta.config_hash);
  return ds;
}

std::map<std::string, std::size_t> load_clusters(const PipelineConfig& cfg, std::size_t& k) {
  const fs::path path = cfg.workdir / artifacts::clusters;
  require_artifact(path, "cluster");
  check_hash(path, cfg.hash(), comment_fields(path)["config_hash"]);
  std::map<std::string, std::size_t> out;
  std::ifstream in(path);
  std::string line;
  bool header = true;
  k = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw std::runtime_error(path.string() + ": malformed line '" + line + "'");
    const std::size_t c = std::stoul(f[1]);
    out[f[0]] = c;
    k = std::max(k, c + 1);
  }
  return out;
}

Split load_split(const PipelineConfig& cfg) {
  const fs::path path = cfg.workdir / artifacts::split;
  require_artifact(path, "train");
  const json j = json::parse(read_file(path));
  check_hash(path, cfg.hash(), j.at("config_hash").get<std::string>());
  Split s;
  s.ratio = j.at("ratio").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("clusters")) {
    s.clusters.push_back({c.at("train").get<std::vector<std::string>>(),
                          c.at("test").get<std::vector<std::string>>()});
  }
  return s;
}

/// Cluster-local view of the dataset: indices of train and test weeks.
struct ClusterRows {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

std::vector<ClusterRows> rows_per_cluster(const Dataset& ds, const std::map<std::string, std::size_t>& clusters,
                                          const Split& split) {
  std::vector<ClusterRows> out(split.clusters.size());
  for (std::size_t i = 0; i < ds.weeks.size(); ++i) {
    const auto it = clusters.find(ds.weeks[i].user_id);
    if (it == clusters.end()) continue;
    const std::size_t c = it->second;
    if (c >= out.size()) continue;
    (split.is_test(c, ds.weeks[i].user_id) ? out[c].test : out[c].train).push_back(i);
  }
  return out;
}

Matrix preprocess(const Matrix& x, std::span<const std::size_t> log_indices, const Standardizer* st) {
  Matrix y = x;
  log1p_features(y, log_indices);
  return st ? st->apply(y) : y;
}

std::uint64_t embed_seed(const PipelineConfig& cfg, EmbedderKind kind, std::size_t cluster) {
  return Rng::derive(cfg.seed, "embed-" + std::string(to_string(kind)) + "-" + std::to_string(cluster))
      .next_u64();
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

StageResult cmd_synth(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path flows = cfg.workdir / artifacts::flows, labels = cfg.workdir / artifacts::labels;
  Manifest manifest(cfg);
  const std::string key = stage_key(cfg, "synth", {});
  if (manifest.up_to_date("synth", key, cfg.workdir)) {
    emit(log, LogLevel::info, "synth: inputs unchanged, skipping");
    return {true, {flows, labels}};
  }
  SynthConfig s = cfg.synth;
  s.seed = cfg.seed;
  std::ostringstream f, l;
  const auto comments = stamp(cfg);
  const SynthSummary summary = generate(s, f, l, comments);
  write_atomic(flows, f.str());
  write_atomic(labels, l.str());
  emit(log, LogLevel::info,
       "synth: " + std::to_string(summary.flows) + " flows, " + std::to_string(summary.user_weeks) +
           " user-weeks, " + std::to_string(summary.anomalous) + " anomalous");
  manifest.record("synth", key, cfg.workdir, {flows, labels},
                  {{"flows", summary.flows}, {"anomalous", summary.anomalous}});
  return {false, {flows, labels}};
}

StageResult cmd_extract(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path flows = flows_path(cfg);
  require_artifact(flows, cfg.input_flows.empty() ? "synth" : "synth (or fix input_flows)");
  const fs::path labels = labels_path(cfg);
  std::vector<fs::path> inputs = {flows};
  const bool have_labels = !labels.empty() && fs::exists(labels);
  if (have_labels) inputs.push_back(labels);
  if (!cfg.schema_file.empty()) inputs.push_back(cfg.schema_file);

  const fs::path out = cfg.workdir / artifacts::dataset;
  Manifest manifest(cfg);
  const std::string key = stage_key(cfg, "extract", inputs);
  if (manifest.up_to_date("extract", key, cfg.workdir)) {
    emit(log, LogLevel::info, "extract: inputs unchanged, skipping");
    return {true, {out}};
  }

  const SchemaDescriptor schema =
      cfg.schema_file.empty() ? builtin_schema(cfg.schema) : schema_from_text(read_file(cfg.schema_file));
  ParseOptions popts;
  popts.strict = cfg.strict;
  std::ifstream in(flows);
  if (!in) throw std::runtime_error("cannot read " + flows.string());

  Dataset ds;
  ds.meta.schema = schema.name;
  ds.meta.window_hours = cfg.windows.window_hours;
  ds.meta.config_hash = cfg.hash();
  ds.meta.seed = cfg.seed;
  ParseReport report;
  std::vector<DayVector> days;
  if (schema.kind == RecordKind::flow) {
    auto parsed = parse_flows(in, schema, popts);
    report = parsed.report;
    days = extract_day_vectors(parsed.records, cfg.features, cfg.windows);
  } else {
    auto parsed = parse_events(in, schema, popts);
    report = parsed.report;
    days = extract_day_vectors(parsed.records, cfg.event_features, cfg.windows);
  }
  for (const auto& e : report.errors) emit(log, LogLevel::warn, "extract: " + e);

  // Sub-day windows are concatenated into the day vector.
  const std::size_t wpd = cfg.windows.windows_per_day();
  const bool flow_kind = schema.kind == RecordKind::flow;
  const auto names = flow_kind ? cfg.features.names() : cfg.event_features.names();
  const auto cluster_idx = flow_kind ? cfg.features.clustering_indices() : cfg.event_features.clustering_indices();
  std::vector<std::size_t> count_idx;
  if (flow_kind) {
    count_idx = cfg.features.count_like_indices();
  } else {
    for (std::size_t i = 0; i < cfg.event_features.dimension(); ++i) count_idx.push_back(i);
  }
  const std::size_t base = names.size();
  for (std::size_t w = 0; w < wpd; ++w) {
    for (const auto& n : names) {
      ds.meta.feature_names.push_back(wpd == 1 ? n : n + "@w" + std::to_string(w));
    }
    for (auto i : cluster_idx) ds.meta.clustering_indices.push_back(w * base + i);
    for (auto i : count_idx) ds.meta.count_indices.push_back(w * base + i);
  }
  ds.meta.dimension = ds.meta.feature_names.size();

  UserWeekBuild build = build_user_weeks(days);
  ds.meta.records_parsed = report.parsed;
  ds.meta.records_skipped = report.skipped;
  ds.meta.dropped_incomplete_weeks = build.dropped_incomplete_weeks;
  ds.meta.dropped_weekend_days = build.dropped_weekend_days;
  ds.weeks = std::move(build.weeks);

  LabelTable table;
  if (have_labels) {
    std::ifstream lin(labels);
    table = read_labels(lin);
  }
  std::size_t labelled = 0;
  for (const auto& w : ds.weeks) {
    const auto it = table.find({w.user_id, w.week_index});
    ds.labels.push_back(it == table.end() ? std::nullopt : std::optional<Label>(it->second));
    labelled += it == table.end() ? 0 : 1;
  }

  std::ostringstream text;
  write_dataset(text, ds);
  write_atomic(out, text.str());
  emit(log, LogLevel::info,
       "extract: " + std::to_string(report.parsed) + " records parsed, " + std::to_string(report.skipped) +
           " skipped; " + std::to_string(ds.weeks.size()) + " user-weeks (d=" + std::to_string(ds.meta.dimension) +
           "), " + std::to_string(build.dropped_incomplete_weeks) + " incomplete weeks dropped, " +
           std::to_string(labelled) + " labelled");
  manifest.record("extract", key, cfg.workdir, {out},
                  {{"parsed", report.parsed}, {"skipped", report.skipped}, {"weeks", ds.weeks.size()}});
  return {false, {out}};
}

namespace {

/// One row per user: the mean over all of the user's weekdays of the
/// clustering features, log-compressed where they are counts.
Matrix user_profiles(const Dataset& ds, const PipelineConfig& cfg, std::vector<std::string>& users) {
  const auto& idx = ds.meta.clustering_indices;
  const std::set<std::size_t> counts(ds.meta.count_indices.begin(), ds.meta.count_indices.end());
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> acc;
  for (const auto& w : ds.weeks) {
    auto& [sum, n] = acc[w.user_id];
    sum.resize(idx.size(), 0.0);
    for (std::size_t r = 0; r < w.x_seq.rows(); ++r, ++n)
      for (std::size_t j = 0; j < idx.size(); ++j) sum[j] += w.x_seq(r, idx[j]);
  }
  Matrix out(acc.size(), idx.size());
  std::size_t row = 0;
  users.clear();
  for (const auto& [user, entry] : acc) {
    users.push_back(user);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double mean = entry.first[j] / static_cast<double>(entry.second);
      out(row, j) = cfg.log1p && counts.count(idx[j]) ? std::log1p(std::max(0.0, mean)) : mean;
    }
    ++row;
  }
  return out;
}

/// Quantile bins per column, for k-modes.
CategoricalTable categorize(const Matrix& x, std::size_t bins) {
  CategoricalTable t(x.rows(), std::vector<int>(x.cols(), 0));
  for (std::size_t c = 0; c < x.cols(); ++c) {
    std::vector<double> col(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) col[r] = x(r, c);
    std::sort(col.begin(), col.end());
    std::vector<double> cuts;
    for (std::size_t b = 1; b < bins; ++b) cuts.push_back(col[b * (col.size() - 1) / bins]);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      t[r][c] = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), x(r, c)) - cuts.begin());
    }
  }
  return t;
}

}  // namespace

StageResult cmd_cluster(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path in = cfg.workdir / artifacts::dataset;
  require_artifact(in, "extract");
  const fs::path assign_path = cfg.workdir / artifacts::clusters, model_path = cfg.workdir / artifacts::cluster_model;
  Manifest manifest(cfg);
  const std::string key = stage_key(cfg, "cluster", {in});
  if (manifest.up_to_date("cluster", key, cfg.workdir)) {
    emit(log, LogLevel::info, "cluster: inputs unchanged, skipping");
    return {true, {assign_path, model_path}};
  }
  const Dataset ds = load_dataset(cfg);
  std::vector<std::string> users;
  Matrix profiles = user_profiles(ds, cfg, users);
  if (users.size() < 2) throw std::runtime_error("cluster: need at least two users, found " + std::to_string(users.size()));
  if (cfg.cluster.standardize) {
    Standardizer st;
    st.fit_rows(profiles);
    for (std::size_t r = 0; r < profiles.rows(); ++r) {
      const auto z = st.apply_row(profiles.row(r));
      std::copy(z.begin(), z.end(), profiles.row(r).begin());
    }
  }

  const bool modes = cfg.cluster.method == ClusterMethod::kmodes;
  const CategoricalTable cats = modes ? categorize(profiles, cfg.cluster.categories) : CategoricalTable{};
  SilhouetteOptions sopts;
  sopts.seed = cfg.seed;
  std::size_t k = cfg.cluster.k;
  std::uint64_t fit_seed = cfg.seed;
  json k_table = json::array();
  if (k == 0) {
    const std::size_t k_max = std::min(cfg.cluster.k_max, users.size() - 1);
    const std::size_t k_min = std::min(cfg.cluster.k_min, k_max);
    const KSelection sel = modes ? select_k(cats, k_min, k_max, cfg.seed, sopts)
                                 : select_k(profiles, k_min, k_max, cfg.seed, sopts);
    k = sel.best_k;
    fit_seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(k)).next_u64();
    for (const auto& [kk, sc] : sel.mean_sc) {
      k_table.push_back({{"k", kk}, {"mean_sc", sc}});
      emit(log, LogLevel::info, "cluster: k=" + std::to_string(kk) + " mean silhouette " + fmt(sc));
    }
  }
  if (k > users.size()) throw std::runtime_error("cluster: k exceeds the number of users");
  ClusterModel model = modes ? kmodes_fit(cats, k, fit_seed) : kmeans_fit(profiles, k, fit_seed);
  double mean_sc = 0.0;
  std::set<std::size_t> used(model.assignments.begin(), model.assignments.end());
  if (used.size() >= 2) {
    mean_sc = modes ? silhouette(cats, model.assignments, sopts).mean
                    : silhouette(profiles, model.assignments, sopts).mean;
  }

  std::ostringstream csv;
  for (const auto& c : stamp(cfg)) csv << "# " << c << '\n';
  csv << "user_id,cluster_id\n";
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < users.size(); ++i) {
    csv << users[i] << ',' << model.assignments[i] << '\n';
    ++sizes[model.assignments[i]];
  }
  json mj = json::parse(cluster_model_to_text(model, mean_sc, cfg.hash()));
  mj["k_selection"] = k_table;
  mj["cluster_sizes"] = sizes;
  mj["users"] = users.size();
  write_atomic(assign_path, csv.str());
  write_atomic(model_path, mj.dump(2) + "\n");
  std::string size_text;
  for (auto s : sizes) size_text += (size_text.empty() ? "" : "/") + std::to_string(s);
  emit(log, LogLevel::info, "cluster: k=" + std::to_string(k) + ", sizes " + size_text + ", mean silhouette " + fmt(mean_sc));
  manifest.record("cluster", key, cfg.workdir, {assign_path, model_path}, {{"k", k}});
  return {false, {assign_path, model_path}};
}

StageResult cmd_train(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path ds_path = cfg.workdir / artifacts::dataset, cl_path = cfg.workdir / artifacts::clusters;
  require_artifact(ds_path, "extract");
  require_artifact(cl_path, "cluster");
  Manifest manifest(cfg);
  StageResult result;
  result.skipped = true;

  std::optional<Dataset> ds;
  std::map<std::string, std::size_t> clusters;
  std::size_t k = 0;
  Split split;
  std::vector<ClusterRows> rows;
  auto load = [&] {
    if (ds) return;
    ds = load_dataset(cfg);
    clusters = load_clusters(cfg, k);
    std::vector<std::vector<std::string>> users(k);
    for (const auto& [u, c] : clusters) users[c].push_back(u);
    split = split_users(users, cfg.test_ratio, cfg.seed);
    for (const auto& w : split.warnings) emit(log, LogLevel::warn, "train: " + w);
    rows = rows_per_cluster(*ds, clusters, split);
  };

  const fs::path split_path = cfg.workdir / artifacts::split;
  {
    const std::string key = stage_key(cfg, "split", {cl_path});
    if (!manifest.up_to_date("split", key, cfg.workdir)) {
      load();
      json j = {{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"ratio", cfg.test_ratio},
                {"warnings", split.warnings}};
      json cl = json::array();
      for (const auto& c : split.clusters) cl.push_back({{"train", c.train}, {"test", c.test}});
      j["clusters"] = std::move(cl);
      write_atomic(split_path, j.dump(2) + "\n");
      manifest.record("split", key, cfg.workdir, {split_path});
      result.skipped = false;
    }
    result.outputs.push_back(split_path);
  }

  for (const EmbedderKind kind : cfg.embedders) {
    const std::string stage = "train-" + std::string(to_string(kind));
    const std::string key = stage_key(cfg, stage, {ds_path, cl_path, split_path});
    if (manifest.up_to_date(stage, key, cfg.workdir)) {
      emit(log, LogLevel::info, stage + ": inputs unchanged, skipping");
      for (auto& p : manifest.outputs(stage, cfg.workdir)) result.outputs.push_back(p);
      continue;
    }
    load();
    result.skipped = false;
    std::vector<fs::path> outputs;
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const auto& cr = rows[c];
      if (cr.train.size() < 2) {
        emit(log, LogLevel::warn, stage + ": cluster " + std::to_string(c) + " has " +
                                      std::to_string(cr.train.size()) + " training week(s); no model");
        continue;
      }
      const auto& log_idx = cfg.log1p ? ds->meta.count_indices : std::vector<std::size_t>{};
      std::vector<Matrix> train;
      for (std::size_t i : cr.train) train.push_back(preprocess(ds->weeks[i].x_seq, log_idx, nullptr));
      Standardizer st;
      st.fit(train);
      for (auto& m : train) m = st.apply(m);
      std::vector<Matrix> test;
      for (std::size_t i : cr.test) test.push_back(preprocess(ds->weeks[i].x_seq, log_idx, &st));

      EmbedderConfig ecfg = cfg.embed;
      ecfg.seed = embed_seed(cfg, kind, c);
      As2sFitOptions opts;
      if (kind == EmbedderKind::as2s && !test.empty()) {
        opts.snapshot_inputs = test;
        for (auto e : cfg.snapshot_epochs)
          if (e >= 1 && e <= ecfg.epochs) opts.snapshot_epochs.push_back(e);
      }
      EmbedderFit fit = fit_embedder(kind, train, ecfg, opts);
      const auto& hist = fit.embedder.loss_history();
      emit(log, LogLevel::info,
           stage + ": cluster " + std::to_string(c) + " trained on " + std::to_string(train.size()) + " weeks" +
               (hist.empty() ? std::string{} : ", loss " + fmt(hist.front()) + " -> " + fmt(hist.back())));

      ModelFile file;
      file.meta.cluster_id = c;
      file.meta.input_dim = ds->meta.dimension;
      file.meta.seq_len = ds->meta.sequence_length;
      file.meta.config_hash = cfg.hash();
      file.meta.log1p_indices = log_idx;
      file.meta.standardizer = st;
      file.embedder = std::move(fit.embedder);
      const fs::path mpath = cfg.workdir / artifacts::model(kind, c);
      write_atomic(mpath, model_file_to_text(file) + "\n");
      outputs.push_back(mpath);

      if (!fit.snapshots.empty()) {
        json snaps = json::array();
        for (const auto& s : fit.snapshots) {
          json reps = json::array();
          for (std::size_t r = 0; r < s.representations.rows(); ++r)
            reps.push_back(std::vector<double>(s.representations.row(r).begin(), s.representations.row(r).end()));
          snaps.push_back({{"epoch", s.epoch}, {"representations", std::move(reps)}});
        }
        json keys = json::array();
        for (std::size_t i : cr.test) keys.push_back({ds->weeks[i].user_id, ds->weeks[i].week_index});
        const json sj = {{"config_hash", cfg.hash()}, {"seed", ecfg.seed}, {"cluster_id", c},
                         {"examples", std::move(keys)}, {"snapshots", std::move(snaps)}};
        const fs::path spath = cfg.workdir / artifacts::snapshots(kind, c);
        write_atomic(spath, sj.dump() + "\n");
        outputs.push_back(spath);
      }
    }
    manifest.record(stage, key, cfg.workdir, outputs);
    for (auto& p : outputs) result.outputs.push_back(p);
  }
  return result;
}

StageResult cmd_score(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path ds_path = cfg.workdir / artifacts::dataset, cl_path = cfg.workdir / artifacts::clusters,
                 split_path = cfg.workdir / artifacts::split;
  require_artifact(ds_path, "extract");
  require_artifact(cl_path, "cluster");
  require_artifact(split_path, "train");
  Manifest manifest(cfg);
  StageResult result;
  result.skipped = true;
  std::optional<Dataset> ds;
  std::map<std::string, std::size_t> clusters;
  std::vector<ClusterRows> rows;

  for (const EmbedderKind kind : cfg.embedders) {
    const std::string stage = "score-" + std::string(to_string(kind));
    std::vector<fs::path> inputs = {ds_path, cl_path, split_path};
    std::size_t k = 0;
    const auto cl = load_clusters(cfg, k);
    for (std::size_t c = 0; c < k; ++c) {
      const fs::path m = cfg.workdir / artifacts::model(kind, c);
      if (fs::exists(m)) inputs.push_back(m);
    }
    if (inputs.size() == 3) {
      throw MissingArtifact("no " + std::string(to_string(kind)) + " models in " + (cfg.workdir / "models").string() +
                            "; run `fl4s train --embedder " + std::string(to_string(kind)) + "` first");
    }
    const fs::path out = cfg.workdir / artifacts::scores(kind);
    const std::string key = stage_key(cfg, stage, inputs);
    if (manifest.up_to_date(stage, key, cfg.workdir)) {
      emit(log, LogLevel::info, stage + ": inputs unchanged, skipping");
      result.outputs.push_back(out);
      continue;
    }
    result.skipped = false;
    if (!ds) {
      ds = load_dataset(cfg);
      clusters = cl;
      rows = rows_per_cluster(*ds, clusters, load_split(cfg));
    }
    std::vector<AnomalyScore> scores;
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const fs::path mpath = cfg.workdir / artifacts::model(kind, c);
      if (!fs::exists(mpath)) continue;
      const ModelFile file = model_file_from_text(read_file(mpath));
      check_hash(mpath, cfg.hash(), file.meta.config_hash);
      const Standardizer* st = file.meta.standardizer.fitted() ? &file.meta.standardizer : nullptr;
      std::vector<Matrix> train, test;
      for (std::size_t i : rows[c].train) train.push_back(preprocess(ds->weeks[i].x_seq, file.meta.log1p_indices, st));
      for (std::size_t i : rows[c].test) test.push_back(preprocess(ds->weeks[i].x_seq, file.meta.log1p_indices, st));
      if (test.empty()) continue;
      std::size_t knn = cfg.k_nn;
      if (knn > train.size()) {
        emit(log, LogLevel::warn, stage + ": cluster " + std::to_string(c) + " has only " +
                                      std::to_string(train.size()) + " reference weeks; k_nn lowered");
        knn = train.size();
      }
      const KnnScorer scorer(file.embedder.encode_all(train), knn);
      const auto results = scorer.score_all(file.embedder.encode_all(test));
      for (std::size_t t = 0; t < rows[c].test.size(); ++t) {
        const std::size_t i = rows[c].test[t];
        scores.push_back({ds->weeks[i].user_id, ds->weeks[i].week_index, c, results[t].mean_distance,
                          results[t].kth_distance, ds->labels[i]});
      }
    }
    auto comments = stamp(cfg);
    comments.push_back("embedder=" + std::string(to_string(kind)) + " k_nn=" + std::to_string(cfg.k_nn));
    std::ostringstream text;
    write_scores(text, scores, comments);
    write_atomic(out, text.str());
    emit(log, LogLevel::info, stage + ": " + std::to_string(scores.size()) + " test weeks scored");
    manifest.record(stage, key, cfg.workdir, {out});
    result.outputs.push_back(out);
  }
  return result;
}

namespace {

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows, const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "embedder,scope,cluster,examples,positives,pr_auc\n";
  for (const auto& r : rows) {
    out << r.embedder << ',' << r.scope << ',' << (r.cluster ? std::to_string(*r.cluster) : "") << ','
        << r.examples << ',' << r.positives << ',' << (r.pr_auc ? fmt(*r.pr_auc) : "") << '\n';
  }
}

std::optional<PrCurve> curve_for(const std::vector<AnomalyScore>& scores, std::optional<std::size_t> cluster,
                                 std::size_t& examples, std::size_t& positives) {
  std::vector<double> s;
  std::vector<Label> l;
  for (const auto& a : scores) {
    if (cluster && a.cluster_id != *cluster) continue;
    if (!a.label) continue;
    s.push_back(a.score);
    l.push_back(*a.label);
  }
  examples = s.size();
  positives = static_cast<std::size_t>(std::count(l.begin(), l.end(), Label::anomalous));
  if (positives == 0) return std::nullopt;
  return pr_curve(s, l);
}

}  // namespace

StageResult cmd_eval(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path ds_path = cfg.workdir / artifacts::dataset;
  require_artifact(ds_path, "extract");
  std::size_t k = 0;
  load_clusters(cfg, k);
  std::vector<fs::path> inputs = {ds_path, cfg.workdir / artifacts::clusters};
  for (const EmbedderKind kind : cfg.embedders) {
    const fs::path p = cfg.workdir / artifacts::scores(kind);
    require_artifact(p, "score --embedder " + std::string(to_string(kind)));
    check_hash(p, cfg.hash(), comment_fields(p)["config_hash"]);
    inputs.push_back(p);
    for (std::size_t c = 0; c < k; ++c) {
      const fs::path s = cfg.workdir / artifacts::snapshots(kind, c);
      if (fs::exists(s)) inputs.push_back(s);
    }
  }
  const fs::path summary_path = cfg.workdir / artifacts::summary;
  Manifest manifest(cfg);
  std::string selection;
  for (auto k : cfg.embedders) selection += std::string(to_string(k)) + ",";
  const std::string key = stage_key(cfg, "eval", inputs, selection);
  if (manifest.up_to_date("eval", key, cfg.workdir)) {
    emit(log, LogLevel::info, "eval: inputs unchanged, skipping");
    return {true, manifest.outputs("eval", cfg.workdir)};
  }

  const Dataset ds = load_dataset(cfg);
  std::map<WeekKey, std::optional<Label>> labels;
  for (std::size_t i = 0; i < ds.weeks.size(); ++i) labels[{ds.weeks[i].user_id, ds.weeks[i].week_index}] = ds.labels[i];

  std::vector<SummaryRow> summary;
  std::vector<fs::path> outputs;
  const auto comments = stamp(cfg);
  for (const EmbedderKind kind : cfg.embedders) {
    const std::string name(to_string(kind));
    const fs::path spath = cfg.workdir / artifacts::scores(kind);
    std::ifstream in(spath);
    const auto scores = read_scores(in);

    SummaryRow pooled{name, "pooled", std::nullopt, 0, 0, std::nullopt};
    if (auto curve = curve_for(scores, std::nullopt, pooled.examples, pooled.positives)) {
      pooled.pr_auc = curve->area;
      std::ostringstream text;
      write_pr_curve(text, *curve, comments);
      const fs::path p = cfg.workdir / ("eval/pr_" + name + ".csv");
      write_atomic(p, text.str());
      outputs.push_back(p);
    } else {
      emit(log, LogLevel::warn, "eval: " + name + " has no labelled anomalies in the test set; PR-AUC undefined");
    }
    summary.push_back(pooled);

    std::set<std::size_t> cluster_ids;
    for (const auto& s : scores) cluster_ids.insert(s.cluster_id);
    for (std::size_t c : cluster_ids) {
      SummaryRow row{name, "cluster", c, 0, 0, std::nullopt};
      if (auto curve = curve_for(scores, c, row.examples, row.positives)) {
        row.pr_auc = curve->area;
        std::ostringstream text;
        write_pr_curve(text, *curve, comments);
        const fs::path p = cfg.workdir / ("eval/pr_" + name + "_cluster_" + std::to_string(c) + ".csv");
        write_atomic(p, text.str());
        outputs.push_back(p);
      }
      summary.push_back(row);
    }

    for (std::size_t c = 0; c < k; ++c) {
      const fs::path snap = cfg.workdir / artifacts::snapshots(kind, c);
      if (!fs::exists(snap)) continue;
      const json sj = json::parse(read_file(snap));
      check_hash(snap, cfg.hash(), sj.at("config_hash").get<std::string>());
      std::vector<std::optional<Label>> lab;
      for (const auto& k : sj.at("examples")) {
        const auto it = labels.find({k.at(0).get<std::string>(), k.at(1).get<std::int64_t>()});
        lab.push_back(it == labels.end() ? std::nullopt : it->second);
      }
      std::vector<Matrix> epochs;
      std::vector<std::size_t> epoch_ids;
      for (const auto& s : sj.at("snapshots")) {
        const auto reps = s.at("representations").get<std::vector<std::vector<double>>>();
        Matrix m(reps.size(), reps.empty() ? 0 : reps.front().size());
        for (std::size_t r = 0; r < reps.size(); ++r) std::copy(reps[r].begin(), reps[r].end(), m.row(r).begin());
        epochs.push_back(std::move(m));
        epoch_ids.push_back(s.at("epoch").get<std::size_t>());
      }
      const auto projected = scatter_project(epochs);
      for (std::size_t e = 0; e < projected.size(); ++e) {
        auto cm = comments;
        cm.push_back("cluster=" + std::to_string(c) + " epoch=" + std::to_string(epoch_ids[e]));
        std::ostringstream text;
        write_scatter(text, projected[e], lab, cm);
        const fs::path p = cfg.workdir / ("eval/scatter_" + name + "_cluster_" + std::to_string(c) + "_epoch_" +
                                          std::to_string(epoch_ids[e]) + ".csv");
        write_atomic(p, text.str());
        outputs.push_back(p);
      }
    }
  }
  std::ostringstream text;
  write_summary(text, summary, comments);
  write_atomic(summary_path, text.str());
  outputs.push_back(summary_path);
  for (const auto& r : summary) {
    if (r.scope == "pooled") {
      emit(log, LogLevel::info, "eval: " + r.embedder + " PR-AUC " + (r.pr_auc ? fmt(*r.pr_auc) : "n/a") + " (" +
                                    std::to_string(r.positives) + "/" + std::to_string(r.examples) + " anomalous)");
    }
  }
  manifest.record("eval", key, cfg.workdir, outputs);
  return {false, outputs};
}

std::vector<SummaryRow> read_summary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("missing " + path.string() + "; run `fl4s eval` first");
  std::vector<SummaryRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    auto f = split_csv_line(line);
    f.resize(6);
    SummaryRow r;
    r.embedder = f[0];
    r.scope = f[1];
    if (!f[2].empty()) r.cluster = std::stoul(f[2]);
    r.examples = std::stoul(f[3]);
    r.positives = std::stoul(f[4]);
    if (!f[5].empty()) r.pr_auc = std::stod(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> cmd_repro(const PipelineConfig& cfg, const Logger& log) {
  cfg.validate();
  if (cfg.input_flows.empty()) cmd_synth(cfg, log);
  cmd_extract(cfg, log);
  cmd_cluster(cfg, log);
  cmd_train(cfg, log);
  cmd_score(cfg, log);
  cmd_eval(cfg, log);
  return read_summary(cfg.workdir / artifacts::summary);
}

}  // namespace fl4s
