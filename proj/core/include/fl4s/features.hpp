#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fl4s/records.hpp"

namespace fl4s {

/// Per-direction count aggregations over a window of flows.
enum class CountFeature {
  flows,
  bytes,
  packets,
  distinct_peers,
  distinct_dst_ports,
  distinct_src_ports,
  tcp_flows,
  udp_flows,
  icmp_flows,
  wellknown_port_flows,  // dst_port < 1024
  ephemeral_port_flows,  // dst_port >= 49152
  syn_only_flows,        // tcp_flags == SYN
  small_flows,           // packets <= 2
  max_flow_bytes,
};

enum class TopKKey { dst_port, src_port, peer, protocol };

struct TopKFeature {
  TopKKey key = TopKKey::dst_port;
  std::size_t k = 5;
};

/// Layout of a window feature vector. With `directional` set, the whole
/// block (counts, flag bitmap, top-K) is emitted for outgoing traffic and
/// then again for incoming traffic.
struct FeatureSpec {
  std::vector<CountFeature> counts;
  bool tcp_flag_bitmap = true;  // 8 per-bit 0/1 features
  std::vector<TopKFeature> topk;
  bool directional = true;

  std::size_t block_dimension() const;
  std::size_t dimension() const;
  std::vector<std::string> names() const;
  /// Positions of the count and bitmap features (the clustering subset).
  std::vector<std::size_t> clustering_indices() const;
  /// Positions holding counts that benefit from a log transform (everything
  /// except the 0/1 bitmap bits).
  std::vector<std::size_t> count_like_indices() const;
  void validate() const;
};

/// Default netflow layout: 14 counts, 8 flag bits and top-5 destination
/// port and peer frequencies per direction (d = 64).
FeatureSpec default_netflow_spec();

/// Aggregates the flows of one user in one window. Records must already be
/// restricted to the window and the user.
std::vector<double> extract_window(std::span<const FlowRecord> records, const FeatureSpec& spec);

/// Event windows: one count per event type, the same counts restricted to
/// events outside working hours, and the number of distinct hosts.
struct EventFeatureSpec {
  int work_start_hour = 8;
  int work_end_hour = 18;
  std::int64_t utc_offset_seconds = 0;

  std::size_t dimension() const { return 2 * kEventTypeCount + 1; }
  std::vector<std::string> names() const;
  std::vector<std::size_t> clustering_indices() const;
};

std::vector<double> extract_event_window(std::span<const EventRecord> records,
                                         const EventFeatureSpec& spec);

std::string_view to_string(CountFeature f);
std::string_view to_string(TopKKey k);
CountFeature count_feature_from_string(std::string_view name);
TopKKey topk_key_from_string(std::string_view name);

}  // namespace fl4s
