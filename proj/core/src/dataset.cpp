#include "fl4s/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace fl4s {

using nlohmann::json;

std::size_t WindowConfig::windows_per_day() const {
  return static_cast<std::size_t>(24 / window_hours);
}

void WindowConfig::validate() const {
  if (window_hours <= 0 || window_hours > 24 || 24 % window_hours != 0) {
    throw std::invalid_argument("window_hours must divide 24 (e.g. 3, 6, 12, 24), got " +
                                std::to_string(window_hours));
  }
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

std::size_t slot_of(std::int64_t timestamp, const WindowConfig& cfg) {
  const std::int64_t seconds = floor_mod(timestamp + cfg.utc_offset_seconds, 86400);
  return static_cast<std::size_t>(seconds / (static_cast<std::int64_t>(cfg.window_hours) * 3600));
}

template <typename Record, typename UserOf, typename Extract>
std::vector<DayVector> group_days(std::span<const Record> records, const WindowConfig& windows,
                                  std::size_t window_dim, UserOf user_of, Extract extract) {
  windows.validate();
  const std::size_t slots = windows.windows_per_day();
  std::map<std::pair<std::string, std::int64_t>, std::vector<std::vector<Record>>> groups;
  for (const auto& r : records) {
    auto& day = groups[{user_of(r), local_day(r.timestamp, windows)}];
    if (day.empty()) day.resize(slots);
    day[slot_of(r.timestamp, windows)].push_back(r);
  }
  std::vector<DayVector> out;
  out.reserve(groups.size());
  for (auto& [key, day] : groups) {
    DayVector dv{key.first, key.second, {}};
    dv.values.reserve(window_dim * slots);
    for (const auto& slot : day) {
      const auto v = extract(std::span<const Record>(slot));
      dv.values.insert(dv.values.end(), v.begin(), v.end());
    }
    out.push_back(std::move(dv));
  }
  return out;
}

}  // namespace

std::int64_t local_day(std::int64_t timestamp, const WindowConfig& cfg) {
  return floor_div(timestamp + cfg.utc_offset_seconds, 86400);
}

// 1970-01-01 was a Thursday (weekday 3 with Monday = 0).
int weekday_of(std::int64_t day) { return static_cast<int>(floor_mod(day + 3, 7)); }

std::int64_t week_of(std::int64_t day) { return floor_div(day + 3, 7); }

std::vector<DayVector> extract_day_vectors(std::span<const FlowRecord> records,
                                           const FeatureSpec& spec, const WindowConfig& windows) {
  spec.validate();
  return group_days(
      records, windows, spec.dimension(), [](const FlowRecord& r) { return r.user(); },
      [&spec](std::span<const FlowRecord> w) { return extract_window(w, spec); });
}

std::vector<DayVector> extract_day_vectors(std::span<const EventRecord> records,
                                           const EventFeatureSpec& spec,
                                           const WindowConfig& windows) {
  return group_days(
      records, windows, spec.dimension(), [](const EventRecord& r) { return r.user_id; },
      [&spec](std::span<const EventRecord> w) { return extract_event_window(w, spec); });
}

UserWeekBuild build_user_weeks(std::span<const DayVector> days) {
  UserWeekBuild out;
  std::map<WeekKey, std::array<const DayVector*, kWeekdays>> weeks;
  std::size_t dim = 0;
  bool have_dim = false;
  for (const auto& dv : days) {
    if (!have_dim) {
      dim = dv.values.size();
      have_dim = true;
    } else if (dv.values.size() != dim) {
      throw std::invalid_argument("build_user_weeks: day vectors have different dimensions (" +
                                  std::to_string(dim) + " vs " + std::to_string(dv.values.size()) + ")");
    }
    const int wd = weekday_of(dv.day);
    if (wd >= static_cast<int>(kWeekdays)) {
      ++out.dropped_weekend_days;
      continue;
    }
    auto [it, inserted] = weeks.try_emplace({dv.user_id, week_of(dv.day)});
    if (inserted) it->second.fill(nullptr);
    it->second[static_cast<std::size_t>(wd)] = &dv;
  }
  for (const auto& [key, slots] : weeks) {
    if (std::any_of(slots.begin(), slots.end(), [](const DayVector* p) { return p == nullptr; })) {
      ++out.dropped_incomplete_weeks;
      continue;
    }
    UserWeek uw{key.first, key.second, Matrix(kWeekdays, dim)};
    for (std::size_t t = 0; t < kWeekdays; ++t) {
      std::copy(slots[t]->values.begin(), slots[t]->values.end(), uw.x_seq.row(t).begin());
    }
    out.weeks.push_back(std::move(uw));
  }
  return out;
}

std::string_view to_string(Label l) { return l == Label::anomalous ? "anomalous" : "normal"; }

Label label_from_string(std::string_view s) {
  if (s == "anomalous" || s == "1" || s == "A") return Label::anomalous;
  if (s == "normal" || s == "0" || s == "N") return Label::normal;
  throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

LabelTable read_labels(std::istream& in) {
  LabelTable table;
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 3) {
      throw std::invalid_argument("labels line " + std::to_string(line_no) + ": expected 3 fields");
    }
    table[{f[0], std::stoll(f[1])}] = label_from_string(f[2]);
  }
  return table;
}

void write_labels(std::ostream& out, const LabelTable& labels) {
  out << "user_id,week_index,label\n";
  for (const auto& [key, label] : labels) {
    out << key.first << ',' << key.second << ',' << to_string(label) << '\n';
  }
}

void log1p_features(Matrix& seq, std::span<const std::size_t> indices) {
  for (std::size_t r = 0; r < seq.rows(); ++r) {
    for (std::size_t i : indices) {
      seq(r, i) = std::log1p(std::max(0.0, seq(r, i)));
    }
  }
}

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) {
    throw std::invalid_argument("Standardizer: mean and stddev lengths differ");
  }
}

void Standardizer::fit(std::span<const Matrix> sequences) {
  if (sequences.empty()) throw std::invalid_argument("Standardizer::fit: no training sequences");
  const std::size_t d = sequences.front().cols();
  std::size_t rows = 0;
  for (const auto& s : sequences) rows += s.rows();
  Matrix all(rows, d);
  std::size_t r = 0;
  for (const auto& s : sequences) {
    if (s.cols() != d) throw std::invalid_argument("Standardizer::fit: inconsistent feature dimension");
    for (std::size_t i = 0; i < s.rows(); ++i, ++r)
      std::copy(s.row(i).begin(), s.row(i).end(), all.row(r).begin());
  }
  fit_rows(all);
}

void Standardizer::fit_rows(const Matrix& rows) {
  if (rows.rows() == 0) throw std::invalid_argument("Standardizer::fit: no rows");
  const std::size_t d = rows.cols();
  const double n = static_cast<double>(rows.rows());
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += rows(r, c);
  for (double& m : mean) m /= n;
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = rows(r, c) - mean[c];
      sd[c] += diff * diff;
    }
  for (double& s : sd) {
    s = std::sqrt(s / n);
    if (s < 1e-12) s = 1.0;
  }
  mean_ = std::move(mean);
  stddev_ = std::move(sd);
}

Matrix Standardizer::apply(const Matrix& seq) const {
  if (!fitted()) throw std::logic_error("Standardizer::apply called before fit");
  if (seq.cols() != mean_.size()) {
    throw std::invalid_argument("Standardizer::apply: expected " + std::to_string(mean_.size()) +
                                " features, got " + std::to_string(seq.cols()));
  }
  Matrix out = seq;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = (out(r, c) - mean_[c]) / stddev_[c];
  return out;
}

std::vector<double> Standardizer::apply_row(std::span<const double> row) const {
  const Matrix m = apply(Matrix::row_vector(row));
  return {m.data().begin(), m.data().end()};
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  const auto& m = ds.meta;
  json meta = {
      {"format", "fl4s-dataset-v1"},
      {"schema", m.schema},
      {"dimension", m.dimension},
      {"feature_names", m.feature_names},
      {"window_hours", m.window_hours},
      {"sequence_length", m.sequence_length},
      {"clustering_indices", m.clustering_indices},
      {"count_indices", m.count_indices},
      {"counts",
       {{"user_weeks", ds.weeks.size()},
        {"records_parsed", m.records_parsed},
        {"records_skipped", m.records_skipped},
        {"dropped_incomplete_weeks", m.dropped_incomplete_weeks},
        {"dropped_weekend_days", m.dropped_weekend_days}}},
      {"config_hash", m.config_hash},
      {"seed", m.seed},
  };
  out << meta.dump() << '\n';
  for (std::size_t i = 0; i < ds.weeks.size(); ++i) {
    const auto& w = ds.weeks[i];
    json x = json::array();
    for (std::size_t t = 0; t < w.x_seq.rows(); ++t) {
      x.push_back(std::vector<double>(w.x_seq.row(t).begin(), w.x_seq.row(t).end()));
    }
    json rec = {{"user", w.user_id}, {"week", w.week_index}, {"x", std::move(x)}};
    if (i < ds.labels.size() && ds.labels[i]) rec["label"] = to_string(*ds.labels[i]);
    out << rec.dump() << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset: empty file");
  const json meta = json::parse(line);
  if (meta.value("format", "") != "fl4s-dataset-v1") {
    throw std::invalid_argument("dataset: unsupported format");
  }
  auto& m = ds.meta;
  m.schema = meta.value("schema", "");
  m.dimension = meta.at("dimension").get<std::size_t>();
  m.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
  m.window_hours = meta.at("window_hours").get<int>();
  m.sequence_length = meta.at("sequence_length").get<std::size_t>();
  m.clustering_indices = meta.at("clustering_indices").get<std::vector<std::size_t>>();
  m.count_indices = meta.at("count_indices").get<std::vector<std::size_t>>();
  const auto& counts = meta.at("counts");
  m.records_parsed = counts.at("records_parsed").get<std::size_t>();
  m.records_skipped = counts.at("records_skipped").get<std::size_t>();
  m.dropped_incomplete_weeks = counts.at("dropped_incomplete_weeks").get<std::size_t>();
  m.dropped_weekend_days = counts.at("dropped_weekend_days").get<std::size_t>();
  m.config_hash = meta.value("config_hash", "");
  m.seed = meta.value("seed", std::uint64_t{0});

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    UserWeek w;
    w.user_id = rec.at("user").get<std::string>();
    w.week_index = rec.at("week").get<std::int64_t>();
    const auto& x = rec.at("x");
    w.x_seq = Matrix(x.size(), m.dimension);
    for (std::size_t t = 0; t < x.size(); ++t) {
      const auto row = x[t].get<std::vector<double>>();
      if (row.size() != m.dimension) throw std::invalid_argument("dataset: row dimension mismatch");
      std::copy(row.begin(), row.end(), w.x_seq.row(t).begin());
    }
    ds.labels.push_back(rec.contains("label")
                            ? std::optional<Label>(label_from_string(rec["label"].get<std::string>()))
                            : std::nullopt);
    ds.weeks.push_back(std::move(w));
  }
  return ds;
}

}  // namespace fl4s
