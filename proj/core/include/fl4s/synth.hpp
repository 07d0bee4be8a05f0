#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fl4s/dataset.hpp"
#include "fl4s/records.hpp"

namespace fl4s {

struct PortChoice {
  std::uint16_t port = 443;
  Protocol protocol = Protocol::tcp;
  double weight = 1.0;
};

struct FlagChoice {
  std::uint8_t flags = 0x18;  // PSH|ACK
  double weight = 1.0;
};

/// Behaviour profile shared by a group of users.
struct Archetype {
  std::string name;
  double weight = 1.0;                   // mixture weight
  double flows_per_day = 40.0;           // Poisson mean on weekdays
  double weekend_factor = 0.2;           // weekend rate relative to weekdays
  double user_rate_spread = 0.2;         // log-normal sd of a user's rate multiplier
  double inbound_fraction = 0.3;
  std::vector<PortChoice> ports;         // service ports contacted
  std::vector<FlagChoice> flags;         // TCP flag patterns
  double log_bytes_mean = 8.0;           // bytes per flow are log-normal
  double log_bytes_sd = 1.0;
  double bytes_per_packet = 800.0;
  std::size_t peer_pool = 50;            // hosts this archetype talks to
  std::size_t peers_per_user = 8;
};

/// How planted anomalies alter a user-week. One enabled transform is chosen
/// per anomalous week and applied to a random subset of its weekdays.
struct AnomalyTransforms {
  bool volume_spike = true;
  double volume_factor = 4.0;            // flow count and bytes multiplier
  bool unusual_ports = true;
  std::size_t scan_flows = 60;           // extra probe flows per affected day
  bool flag_shift = true;
  double flag_shift_fraction = 0.6;      // share of TCP flows whose flags change
  std::size_t min_days = 1;
  std::size_t max_days = 3;
};

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t n_weeks = 8;
  std::string start_date = "2024-01-01";  // must be a Monday
  std::vector<Archetype> archetypes;
  double anomaly_rate = 0.02;
  AnomalyTransforms transforms;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Number of anomalous user-weeks: round(rate * users * weeks).
  std::size_t anomaly_count() const;
};

/// Two archetypes: office workstations (web/mail/DNS on well-known ports,
/// 80%) and build/data hosts (high service ports, bulk transfers, 20%).
SynthConfig default_synth_config();

std::string synth_config_to_text(const SynthConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
SynthConfig synth_config_from_text(std::string_view text);

struct SynthSummary {
  std::size_t flows = 0;
  std::size_t user_weeks = 0;
  std::size_t anomalous = 0;
  std::vector<std::size_t> archetype_of_user;
  LabelTable labels;
  std::map<WeekKey, std::string> transform_of;  // anomalous weeks only
};

/// Writes a netflow-v1 CSV and a user-week label CSV. Same config, same bytes.
SynthSummary generate(const SynthConfig& cfg, std::ostream& flows, std::ostream& labels,
                      std::span<const std::string> comments = {});

}  // namespace fl4s
