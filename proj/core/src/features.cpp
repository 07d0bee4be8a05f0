#include "fl4s/features.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace fl4s {

namespace {

constexpr std::array<CountFeature, 14> kAllCounts = {
    CountFeature::flows,          CountFeature::bytes,
    CountFeature::packets,        CountFeature::distinct_peers,
    CountFeature::distinct_dst_ports, CountFeature::distinct_src_ports,
    CountFeature::tcp_flows,      CountFeature::udp_flows,
    CountFeature::icmp_flows,     CountFeature::wellknown_port_flows,
    CountFeature::ephemeral_port_flows, CountFeature::syn_only_flows,
    CountFeature::small_flows,    CountFeature::max_flow_bytes};

constexpr std::uint8_t kSyn = 0x02;
constexpr std::size_t kFlagBits = 8;

}  // namespace

std::string_view to_string(CountFeature f) {
  switch (f) {
    case CountFeature::flows: return "flows";
    case CountFeature::bytes: return "bytes";
    case CountFeature::packets: return "packets";
    case CountFeature::distinct_peers: return "distinct_peers";
    case CountFeature::distinct_dst_ports: return "distinct_dst_ports";
    case CountFeature::distinct_src_ports: return "distinct_src_ports";
    case CountFeature::tcp_flows: return "tcp_flows";
    case CountFeature::udp_flows: return "udp_flows";
    case CountFeature::icmp_flows: return "icmp_flows";
    case CountFeature::wellknown_port_flows: return "wellknown_port_flows";
    case CountFeature::ephemeral_port_flows: return "ephemeral_port_flows";
    case CountFeature::syn_only_flows: return "syn_only_flows";
    case CountFeature::small_flows: return "small_flows";
    case CountFeature::max_flow_bytes: return "max_flow_bytes";
  }
  return "unknown";
}

std::string_view to_string(TopKKey k) {
  switch (k) {
    case TopKKey::dst_port: return "dst_port";
    case TopKKey::src_port: return "src_port";
    case TopKKey::peer: return "peer";
    case TopKKey::protocol: return "protocol";
  }
  return "unknown";
}

CountFeature count_feature_from_string(std::string_view name) {
  for (CountFeature f : kAllCounts) {
    if (to_string(f) == name) return f;
  }
  throw std::invalid_argument("unknown count feature '" + std::string(name) + "'");
}

TopKKey topk_key_from_string(std::string_view name) {
  for (TopKKey k : {TopKKey::dst_port, TopKKey::src_port, TopKKey::peer, TopKKey::protocol}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown top-K key '" + std::string(name) + "'");
}

std::size_t FeatureSpec::block_dimension() const {
  std::size_t d = counts.size() + (tcp_flag_bitmap ? kFlagBits : 0);
  for (const auto& t : topk) d += t.k;
  return d;
}

std::size_t FeatureSpec::dimension() const {
  return block_dimension() * (directional ? 2 : 1);
}

void FeatureSpec::validate() const {
  for (const auto& t : topk) {
    if (t.k < 1) throw std::invalid_argument("FeatureSpec: top-K feature needs K >= 1");
  }
  if (dimension() == 0) throw std::invalid_argument("FeatureSpec: no features selected");
}

std::vector<std::string> FeatureSpec::names() const {
  std::vector<std::string> out;
  out.reserve(dimension());
  const std::vector<std::string> prefixes =
      directional ? std::vector<std::string>{"out.", "in."} : std::vector<std::string>{"all."};
  for (const auto& prefix : prefixes) {
    for (CountFeature f : counts) out.push_back(prefix + std::string(to_string(f)));
    if (tcp_flag_bitmap) {
      for (std::size_t b = 0; b < kFlagBits; ++b) out.push_back(prefix + "tcp_flag_bit" + std::to_string(b));
    }
    for (const auto& t : topk) {
      for (std::size_t r = 1; r <= t.k; ++r) {
        out.push_back(prefix + "top_" + std::string(to_string(t.key)) + "_" + std::to_string(r));
      }
    }
  }
  return out;
}

std::vector<std::size_t> FeatureSpec::clustering_indices() const {
  std::vector<std::size_t> out;
  const std::size_t block = block_dimension();
  const std::size_t head = counts.size() + (tcp_flag_bitmap ? kFlagBits : 0);
  for (std::size_t b = 0; b < (directional ? 2u : 1u); ++b)
    for (std::size_t i = 0; i < head; ++i) out.push_back(b * block + i);
  return out;
}

std::vector<std::size_t> FeatureSpec::count_like_indices() const {
  std::vector<std::size_t> out;
  const std::size_t block = block_dimension();
  for (std::size_t b = 0; b < (directional ? 2u : 1u); ++b) {
    for (std::size_t i = 0; i < counts.size(); ++i) out.push_back(b * block + i);
    const std::size_t topk_start = counts.size() + (tcp_flag_bitmap ? kFlagBits : 0);
    for (std::size_t i = topk_start; i < block; ++i) out.push_back(b * block + i);
  }
  return out;
}

FeatureSpec default_netflow_spec() {
  FeatureSpec spec;
  spec.counts.assign(kAllCounts.begin(), kAllCounts.end());
  spec.tcp_flag_bitmap = true;
  spec.topk = {{TopKKey::dst_port, 5}, {TopKKey::peer, 5}};
  spec.directional = true;
  return spec;
}

namespace {

double count_value(CountFeature f, std::span<const FlowRecord* const> flows) {
  switch (f) {
    case CountFeature::flows:
      return static_cast<double>(flows.size());
    case CountFeature::bytes: {
      double acc = 0.0;
      for (const auto* r : flows) acc += static_cast<double>(r->bytes);
      return acc;
    }
    case CountFeature::packets: {
      double acc = 0.0;
      for (const auto* r : flows) acc += static_cast<double>(r->packets);
      return acc;
    }
    case CountFeature::distinct_peers: {
      std::unordered_set<std::string_view> s;
      for (const auto* r : flows) s.insert(r->peer());
      return static_cast<double>(s.size());
    }
    case CountFeature::distinct_dst_ports: {
      std::unordered_set<std::uint16_t> s;
      for (const auto* r : flows) s.insert(r->dst_port);
      return static_cast<double>(s.size());
    }
    case CountFeature::distinct_src_ports: {
      std::unordered_set<std::uint16_t> s;
      for (const auto* r : flows) s.insert(r->src_port);
      return static_cast<double>(s.size());
    }
    case CountFeature::tcp_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(),
                                               [](auto* r) { return r->protocol == Protocol::tcp; }));
    case CountFeature::udp_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(),
                                               [](auto* r) { return r->protocol == Protocol::udp; }));
    case CountFeature::icmp_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(),
                                               [](auto* r) { return r->protocol == Protocol::icmp; }));
    case CountFeature::wellknown_port_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(),
                                               [](auto* r) { return r->dst_port < 1024; }));
    case CountFeature::ephemeral_port_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(),
                                               [](auto* r) { return r->dst_port >= 49152; }));
    case CountFeature::syn_only_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(), [](auto* r) {
        return r->protocol == Protocol::tcp && r->tcp_flags == kSyn;
      }));
    case CountFeature::small_flows:
      return static_cast<double>(std::count_if(flows.begin(), flows.end(),
                                               [](auto* r) { return r->packets <= 2; }));
    case CountFeature::max_flow_bytes: {
      std::uint64_t m = 0;
      for (const auto* r : flows) m = std::max(m, r->bytes);
      return static_cast<double>(m);
    }
  }
  return 0.0;
}

template <typename Key>
void top_counts(std::span<const FlowRecord* const> flows, Key key, std::size_t k,
                std::vector<double>& out) {
  std::map<decltype(key(*flows.data())), std::size_t> freq;
  for (const auto* r : flows) ++freq[key(r)];
  std::vector<std::size_t> counts;
  counts.reserve(freq.size());
  for (const auto& [_, c] : freq) counts.push_back(c);
  std::sort(counts.begin(), counts.end(), std::greater<>());
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(i < counts.size() ? static_cast<double>(counts[i]) : 0.0);
  }
}

void emit_block(std::span<const FlowRecord* const> flows, const FeatureSpec& spec,
                std::vector<double>& out) {
  for (CountFeature f : spec.counts) out.push_back(count_value(f, flows));
  if (spec.tcp_flag_bitmap) {
    std::uint8_t mask = 0;
    for (const auto* r : flows) mask |= r->tcp_flags;
    for (std::size_t b = 0; b < kFlagBits; ++b) out.push_back((mask >> b) & 1u ? 1.0 : 0.0);
  }
  for (const auto& t : spec.topk) {
    switch (t.key) {
      case TopKKey::dst_port:
        top_counts(flows, [](const FlowRecord* r) { return r->dst_port; }, t.k, out);
        break;
      case TopKKey::src_port:
        top_counts(flows, [](const FlowRecord* r) { return r->src_port; }, t.k, out);
        break;
      case TopKKey::peer:
        top_counts(flows, [](const FlowRecord* r) { return std::string_view(r->peer()); }, t.k, out);
        break;
      case TopKKey::protocol:
        top_counts(flows, [](const FlowRecord* r) { return static_cast<int>(r->protocol); }, t.k, out);
        break;
    }
  }
}

}  // namespace

std::vector<double> extract_window(std::span<const FlowRecord> records, const FeatureSpec& spec) {
  std::vector<double> out;
  out.reserve(spec.dimension());
  if (spec.directional) {
    std::vector<const FlowRecord*> outgoing, incoming;
    for (const auto& r : records) (r.direction == Direction::out ? outgoing : incoming).push_back(&r);
    emit_block(outgoing, spec, out);
    emit_block(incoming, spec, out);
  } else {
    std::vector<const FlowRecord*> all;
    for (const auto& r : records) all.push_back(&r);
    emit_block(all, spec, out);
  }
  return out;
}

std::vector<std::string> EventFeatureSpec::names() const {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < kEventTypeCount; ++t)
    out.push_back(std::string(to_string(static_cast<EventType>(t))) + "_events");
  for (std::size_t t = 0; t < kEventTypeCount; ++t)
    out.push_back(std::string(to_string(static_cast<EventType>(t))) + "_after_hours");
  out.push_back("distinct_hosts");
  return out;
}

std::vector<std::size_t> EventFeatureSpec::clustering_indices() const {
  std::vector<std::size_t> out(dimension());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::vector<double> extract_event_window(std::span<const EventRecord> records,
                                         const EventFeatureSpec& spec) {
  std::vector<double> out(spec.dimension(), 0.0);
  std::set<std::string_view> hosts;
  for (const auto& r : records) {
    const auto t = static_cast<std::size_t>(r.type);
    out[t] += 1.0;
    std::int64_t local = (r.timestamp + spec.utc_offset_seconds) % 86400;
    if (local < 0) local += 86400;
    const int hour = static_cast<int>(local / 3600);
    if (hour < spec.work_start_hour || hour >= spec.work_end_hour) out[kEventTypeCount + t] += 1.0;
    if (!r.host.empty()) hosts.insert(r.host);
  }
  out.back() = static_cast<double>(hosts.size());
  return out;
}

}  // namespace fl4s
