#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fl4s/features.hpp"
#include "fl4s/matrix.hpp"
#include "fl4s/records.hpp"

namespace fl4s {

inline constexpr std::size_t kWeekdays = 5;

/// Window boundaries. Days start at local midnight (UTC + offset). A day is
/// split into 24 / window_hours windows whose vectors are concatenated into
/// one day vector, so a user-week always has five steps.
struct WindowConfig {
  int window_hours = 24;
  std::int64_t utc_offset_seconds = 0;

  std::size_t windows_per_day() const;
  void validate() const;
};

/// Day index (days since 1970-01-01 in local time) of a timestamp.
std::int64_t local_day(std::int64_t timestamp, const WindowConfig& cfg);
/// 0 = Monday ... 6 = Sunday.
int weekday_of(std::int64_t day);
/// Monday-anchored week number since the epoch.
std::int64_t week_of(std::int64_t day);

/// Raw feature vector for one user on one day.
struct DayVector {
  std::string user_id;
  std::int64_t day = 0;
  std::vector<double> values;
};

std::vector<DayVector> extract_day_vectors(std::span<const FlowRecord> records,
                                           const FeatureSpec& spec, const WindowConfig& windows);
std::vector<DayVector> extract_day_vectors(std::span<const EventRecord> records,
                                           const EventFeatureSpec& spec,
                                           const WindowConfig& windows);

/// One example: Monday..Friday day vectors of one user, stacked as a
/// 5 x d matrix. Carries no label; labels live in LabelTable and are only
/// joined in evaluation.
struct UserWeek {
  std::string user_id;
  std::int64_t week_index = 0;
  Matrix x_seq;
};

struct UserWeekBuild {
  std::vector<UserWeek> weeks;  // sorted by (user_id, week_index)
  std::size_t dropped_incomplete_weeks = 0;
  std::size_t dropped_weekend_days = 0;
};

/// Groups weekday vectors per user per week; weekend vectors are dropped and
/// weeks missing any weekday are dropped and counted.
UserWeekBuild build_user_weeks(std::span<const DayVector> days);

enum class Label { normal, anomalous };

using WeekKey = std::pair<std::string, std::int64_t>;
using LabelTable = std::map<WeekKey, Label>;

std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

/// CSV "user_id,week_index,label" with '#' comment lines allowed.
LabelTable read_labels(std::istream& in);
void write_labels(std::ostream& out, const LabelTable& labels);

/// In-place log(1 + x) on the listed feature positions of every step.
void log1p_features(Matrix& seq, std::span<const std::size_t> indices);

/// Per-feature z-scoring fitted on training sequences.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> stddev);

  void fit(std::span<const Matrix> sequences);
  void fit_rows(const Matrix& rows);
  bool fitted() const noexcept { return !mean_.empty(); }

  Matrix apply(const Matrix& seq) const;
  std::vector<double> apply_row(std::span<const double> row) const;

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return stddev_; }

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

struct DatasetMeta {
  std::string schema;
  std::size_t dimension = 0;
  std::vector<std::string> feature_names;
  int window_hours = 24;
  std::size_t sequence_length = kWeekdays;
  std::vector<std::size_t> clustering_indices;
  std::vector<std::size_t> count_indices;
  std::size_t records_parsed = 0;
  std::size_t records_skipped = 0;
  std::size_t dropped_incomplete_weeks = 0;
  std::size_t dropped_weekend_days = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<UserWeek> weeks;
  std::vector<std::optional<Label>> labels;  // parallel to weeks
};

/// Text format: first line is a JSON metadata object, every following line
/// is one JSON user-week record.
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);

}  // namespace fl4s
