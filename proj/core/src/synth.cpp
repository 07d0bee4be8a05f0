#include "fl4s/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "fl4s/rng.hpp"

namespace fl4s {

using nlohmann::json;

namespace {

constexpr std::uint8_t kFin = 0x01, kSyn = 0x02, kRst = 0x04, kPsh = 0x08, kAck = 0x10, kUrg = 0x20;

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument("synth config: " + field + " " + why);
}

std::int64_t parse_date_day(const std::string& date) {
  return local_day(parse_timestamp(date + "T00:00:00"), WindowConfig{});
}

template <typename T, typename W>
std::size_t weighted_pick(const std::vector<T>& items, W weight, Rng& rng) {
  double total = 0.0;
  for (const auto& it : items) total += weight(it);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < items.size(); ++i) {
    u -= weight(items[i]);
    if (u < 0.0) return i;
  }
  return items.size() - 1;
}

}  // namespace

void SynthConfig::validate() const {
  require(n_users >= 1, "n_users", "must be at least 1");
  require(n_weeks >= 1, "n_weeks", "must be at least 1");
  std::int64_t day = 0;
  try {
    day = parse_date_day(start_date);
  } catch (const std::exception&) {
    require(false, "start_date", "'" + start_date + "' is not a YYYY-MM-DD date");
  }
  require(weekday_of(day) == 0, "start_date", "'" + start_date + "' is not a Monday");
  require(!archetypes.empty(), "archetypes", "must not be empty");
  double total = 0.0;
  for (std::size_t a = 0; a < archetypes.size(); ++a) {
    const Archetype& ar = archetypes[a];
    const std::string f = "archetypes[" + std::to_string(a) + "].";
    require(ar.weight >= 0.0, f + "weight", "must be non-negative");
    require(ar.flows_per_day > 0.0, f + "flows_per_day", "must be positive");
    require(ar.weekend_factor >= 0.0, f + "weekend_factor", "must be non-negative");
    require(ar.user_rate_spread >= 0.0, f + "user_rate_spread", "must be non-negative");
    require(ar.inbound_fraction >= 0.0 && ar.inbound_fraction <= 1.0, f + "inbound_fraction",
            "must lie in [0, 1]");
    require(!ar.ports.empty(), f + "ports", "must not be empty");
    for (const auto& p : ar.ports) require(p.weight > 0.0, f + "ports.weight", "must be positive");
    require(!ar.flags.empty(), f + "flags", "must not be empty");
    for (const auto& fl : ar.flags) require(fl.weight > 0.0, f + "flags.weight", "must be positive");
    require(ar.log_bytes_sd >= 0.0, f + "log_bytes_sd", "must be non-negative");
    require(ar.bytes_per_packet > 0.0, f + "bytes_per_packet", "must be positive");
    require(ar.peer_pool >= 1, f + "peer_pool", "must be at least 1");
    require(ar.peers_per_user >= 1 && ar.peers_per_user <= ar.peer_pool, f + "peers_per_user",
            "must lie in [1, peer_pool]");
    total += ar.weight;
  }
  require(std::abs(total - 1.0) <= 1e-9, "archetypes.weight", "must sum to 1");
  require(anomaly_rate >= 0.0 && anomaly_rate <= 0.5, "anomaly_rate", "must lie in [0, 0.5]");
  const auto& t = transforms;
  if (anomaly_rate > 0.0) {
    require(t.volume_spike || t.unusual_ports || t.flag_shift, "transforms",
            "must enable at least one transform when anomaly_rate > 0");
  }
  require(t.volume_factor >= 1.0, "transforms.volume_factor", "must be at least 1");
  require(t.flag_shift_fraction >= 0.0 && t.flag_shift_fraction <= 1.0,
          "transforms.flag_shift_fraction", "must lie in [0, 1]");
  require(t.min_days >= 1 && t.min_days <= t.max_days && t.max_days <= kWeekdays,
          "transforms.min_days/max_days", "must satisfy 1 <= min_days <= max_days <= 5");
}

std::size_t SynthConfig::anomaly_count() const {
  return static_cast<std::size_t>(
      std::llround(anomaly_rate * static_cast<double>(n_users * n_weeks)));
}

SynthConfig default_synth_config() {
  SynthConfig cfg;
  Archetype office;
  office.name = "office";
  office.weight = 0.8;
  office.flows_per_day = 30.0;
  office.weekend_factor = 0.15;
  office.inbound_fraction = 0.25;
  office.ports = {{443, Protocol::tcp, 6.0}, {80, Protocol::tcp, 2.0}, {53, Protocol::udp, 3.0},
                  {25, Protocol::tcp, 0.5},  {993, Protocol::tcp, 1.0}, {123, Protocol::udp, 0.3}};
  office.flags = {{kAck | kPsh, 5.0}, {kSyn | kAck | kPsh | kFin, 3.0}, {kAck, 1.0}};
  office.log_bytes_mean = 8.5;
  office.log_bytes_sd = 1.0;
  office.bytes_per_packet = 700.0;
  office.peer_pool = 40;
  office.peers_per_user = 10;

  Archetype builder;
  builder.name = "build";
  builder.weight = 0.2;
  builder.flows_per_day = 20.0;
  builder.weekend_factor = 0.6;
  builder.inbound_fraction = 0.5;
  builder.ports = {{8080, Protocol::tcp, 3.0}, {5432, Protocol::tcp, 2.0},
                   {6379, Protocol::tcp, 2.0}, {9092, Protocol::tcp, 1.5},
                   {5353, Protocol::udp, 1.0}, {2049, Protocol::udp, 1.0}};
  builder.flags = {{kSyn | kAck | kFin, 3.0}, {kAck | kPsh, 2.0}, {kSyn | kAck | kRst, 1.0}};
  builder.log_bytes_mean = 11.0;
  builder.log_bytes_sd = 1.2;
  builder.bytes_per_packet = 1400.0;
  builder.peer_pool = 20;
  builder.peers_per_user = 4;

  cfg.archetypes = {office, builder};
  return cfg;
}

namespace {

json port_json(const PortChoice& p) {
  return {{"port", p.port}, {"protocol", to_string(p.protocol)}, {"weight", p.weight}};
}

Protocol protocol_from(const std::string& s) {
  if (s == "tcp") return Protocol::tcp;
  if (s == "udp") return Protocol::udp;
  if (s == "icmp") return Protocol::icmp;
  if (s == "other") return Protocol::other;
  throw std::invalid_argument("synth config: unknown protocol '" + s + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("synth config: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw std::invalid_argument("synth config: unknown field '" + where + key + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

std::string synth_config_to_text(const SynthConfig& cfg) {
  json arch = json::array();
  for (const auto& a : cfg.archetypes) {
    json ports = json::array(), flags = json::array();
    for (const auto& p : a.ports) ports.push_back(port_json(p));
    for (const auto& f : a.flags) flags.push_back({{"flags", f.flags}, {"weight", f.weight}});
    arch.push_back({{"name", a.name},
                    {"weight", a.weight},
                    {"flows_per_day", a.flows_per_day},
                    {"weekend_factor", a.weekend_factor},
                    {"user_rate_spread", a.user_rate_spread},
                    {"inbound_fraction", a.inbound_fraction},
                    {"ports", std::move(ports)},
                    {"flags", std::move(flags)},
                    {"log_bytes_mean", a.log_bytes_mean},
                    {"log_bytes_sd", a.log_bytes_sd},
                    {"bytes_per_packet", a.bytes_per_packet},
                    {"peer_pool", a.peer_pool},
                    {"peers_per_user", a.peers_per_user}});
  }
  const auto& t = cfg.transforms;
  json j = {{"n_users", cfg.n_users},
            {"n_weeks", cfg.n_weeks},
            {"start_date", cfg.start_date},
            {"archetypes", std::move(arch)},
            {"anomaly_rate", cfg.anomaly_rate},
            {"transforms",
             {{"volume_spike", t.volume_spike},
              {"volume_factor", t.volume_factor},
              {"unusual_ports", t.unusual_ports},
              {"scan_flows", t.scan_flows},
              {"flag_shift", t.flag_shift},
              {"flag_shift_fraction", t.flag_shift_fraction},
              {"min_days", t.min_days},
              {"max_days", t.max_days}}},
            {"seed", cfg.seed}};
  return j.dump(2);
}

SynthConfig synth_config_from_text(std::string_view text) {
  const json j = json::parse(text);
  check_keys(j, {"n_users", "n_weeks", "start_date", "archetypes", "anomaly_rate", "transforms", "seed"},
             "");
  SynthConfig cfg = default_synth_config();
  read(j, "n_users", cfg.n_users);
  read(j, "n_weeks", cfg.n_weeks);
  read(j, "start_date", cfg.start_date);
  read(j, "anomaly_rate", cfg.anomaly_rate);
  read(j, "seed", cfg.seed);
  if (j.contains("archetypes")) {
    cfg.archetypes.clear();
    for (const auto& a : j.at("archetypes")) {
      check_keys(a,
                 {"name", "weight", "flows_per_day", "weekend_factor", "user_rate_spread",
                  "inbound_fraction", "ports", "flags", "log_bytes_mean", "log_bytes_sd",
                  "bytes_per_packet", "peer_pool", "peers_per_user"},
                 "archetypes.");
      Archetype ar;
      read(a, "name", ar.name);
      read(a, "weight", ar.weight);
      read(a, "flows_per_day", ar.flows_per_day);
      read(a, "weekend_factor", ar.weekend_factor);
      read(a, "user_rate_spread", ar.user_rate_spread);
      read(a, "inbound_fraction", ar.inbound_fraction);
      read(a, "log_bytes_mean", ar.log_bytes_mean);
      read(a, "log_bytes_sd", ar.log_bytes_sd);
      read(a, "bytes_per_packet", ar.bytes_per_packet);
      read(a, "peer_pool", ar.peer_pool);
      read(a, "peers_per_user", ar.peers_per_user);
      if (a.contains("ports")) {
        ar.ports.clear();
        for (const auto& p : a.at("ports")) {
          ar.ports.push_back({p.at("port").get<std::uint16_t>(),
                              protocol_from(p.value("protocol", std::string("tcp"))),
                              p.value("weight", 1.0)});
        }
      }
      if (a.contains("flags")) {
        ar.flags.clear();
        for (const auto& f : a.at("flags")) {
          ar.flags.push_back({f.at("flags").get<std::uint8_t>(), f.value("weight", 1.0)});
        }
      }
      cfg.archetypes.push_back(std::move(ar));
    }
  }
  if (j.contains("transforms")) {
    const json& t = j.at("transforms");
    check_keys(t,
               {"volume_spike", "volume_factor", "unusual_ports", "scan_flows", "flag_shift",
                "flag_shift_fraction", "min_days", "max_days"},
               "transforms.");
    auto& tr = cfg.transforms;
    read(t, "volume_spike", tr.volume_spike);
    read(t, "volume_factor", tr.volume_factor);
    read(t, "unusual_ports", tr.unusual_ports);
    read(t, "scan_flows", tr.scan_flows);
    read(t, "flag_shift", tr.flag_shift);
    read(t, "flag_shift_fraction", tr.flag_shift_fraction);
    read(t, "min_days", tr.min_days);
    read(t, "max_days", tr.max_days);
  }
  cfg.validate();
  return cfg;
}

namespace {

enum class Transform { none, volume_spike, unusual_ports, flag_shift };

struct UserProfile {
  std::string id;
  std::size_t archetype = 0;
  double rate = 1.0;
  std::vector<std::size_t> peers;      // indices into the archetype pool
  std::vector<double> peer_weights;
};

struct Flow {
  std::int64_t timestamp;
  FlowRecord rec;
};

std::string format_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

std::uint16_t ephemeral_port(Rng& rng) {
  return static_cast<std::uint16_t>(49152 + rng.below(65536 - 49152));
}

std::int64_t time_in_day(std::int64_t day, Rng& rng) {
  // Mostly working hours, occasionally any time of day.
  const double hour = rng.uniform() < 0.9 ? rng.uniform(8.0, 18.0) : rng.uniform(0.0, 24.0);
  return day * 86400 + static_cast<std::int64_t>(hour * 3600.0);
}

const char* transform_name(Transform t) {
  switch (t) {
    case Transform::volume_spike: return "volume_spike";
    case Transform::unusual_ports: return "unusual_ports";
    case Transform::flag_shift: return "flag_shift";
    default: return "none";
  }
}

const std::uint8_t kOddFlags[] = {kRst, kFin | kRst, kFin | kPsh | kUrg, 0x00, kSyn | kFin};

void emit_day(const SynthConfig& cfg, const UserProfile& user, std::int64_t day, bool weekend,
              Transform transform, Rng& rng, std::vector<Flow>& out) {
  const Archetype& ar = cfg.archetypes[user.archetype];
  const auto& tr = cfg.transforms;
  double mean = ar.flows_per_day * user.rate * (weekend ? ar.weekend_factor : 1.0);
  double log_bytes_shift = 0.0;
  if (transform == Transform::volume_spike) {
    mean *= tr.volume_factor;
    log_bytes_shift = std::log(tr.volume_factor);
  }
  std::uint64_t n = rng.poisson(mean);
  if (!weekend) n = std::max<std::uint64_t>(n, 1);

  for (std::uint64_t i = 0; i < n; ++i) {
    Flow f;
    FlowRecord& r = f.rec;
    r.timestamp = f.timestamp = time_in_day(day, rng);
    const PortChoice& svc = ar.ports[weighted_pick(ar.ports, [](const PortChoice& p) { return p.weight; }, rng)];
    const std::size_t peer_slot = weighted_pick(user.peer_weights, [](double w) { return w; }, rng);
    const std::string peer = ar.name + "-h" + std::to_string(user.peers[peer_slot]);
    r.direction = rng.uniform() < ar.inbound_fraction ? Direction::in : Direction::out;
    r.src_id = r.direction == Direction::out ? user.id : peer;
    r.dst_id = r.direction == Direction::out ? peer : user.id;
    r.src_port = ephemeral_port(rng);
    r.dst_port = svc.port;
    r.protocol = svc.protocol;
    const double bytes = std::exp(rng.normal(ar.log_bytes_mean + log_bytes_shift, ar.log_bytes_sd));
    r.bytes = static_cast<std::uint64_t>(std::max(40.0, std::round(bytes)));
    r.packets = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(
                                               std::ceil(static_cast<double>(r.bytes) / ar.bytes_per_packet)));
    if (r.protocol == Protocol::tcp) {
      r.tcp_flags = ar.flags[weighted_pick(ar.flags, [](const FlagChoice& c) { return c.weight; }, rng)].flags;
      if (transform == Transform::flag_shift && rng.uniform() < tr.flag_shift_fraction) {
        r.tcp_flags = kOddFlags[rng.below(std::size(kOddFlags))];
      }
    }
    out.push_back(std::move(f));
  }

  if (transform == Transform::unusual_ports) {
    std::set<std::uint16_t> usual;
    for (const auto& p : ar.ports) usual.insert(p.port);
    for (std::size_t i = 0; i < tr.scan_flows; ++i) {
      Flow f;
      FlowRecord& r = f.rec;
      r.timestamp = f.timestamp = time_in_day(day, rng);
      r.direction = Direction::out;
      r.src_id = user.id;
      r.dst_id = "ext-h" + std::to_string(rng.below(1000));
      r.src_port = ephemeral_port(rng);
      do {
        r.dst_port = static_cast<std::uint16_t>(1 + rng.below(10000));
      } while (usual.count(r.dst_port) != 0);
      r.protocol = Protocol::tcp;
      r.tcp_flags = kSyn;
      r.packets = 1 + rng.below(2);
      r.bytes = 40 + 20 * (r.packets - 1) + rng.below(20);
      out.push_back(std::move(f));
    }
  }
}

}  // namespace

SynthSummary generate(const SynthConfig& cfg, std::ostream& flows_out, std::ostream& labels_out,
                      std::span<const std::string> comments) {
  cfg.validate();
  SynthSummary summary;
  const std::int64_t start = parse_date_day(cfg.start_date);

  std::vector<UserProfile> users(cfg.n_users);
  Rng assign_rng = Rng::derive(cfg.seed, "archetypes");
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    UserProfile& up = users[u];
    up.id = format_id("u", u);
    up.archetype = weighted_pick(cfg.archetypes, [](const Archetype& a) { return a.weight; }, assign_rng);
    const Archetype& ar = cfg.archetypes[up.archetype];
    Rng prof = Rng::derive(cfg.seed, "profile-" + up.id);
    up.rate = std::exp(prof.normal(0.0, ar.user_rate_spread));
    std::vector<std::size_t> pool(ar.peer_pool);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    prof.shuffle(std::span<std::size_t>(pool));
    up.peers.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(ar.peers_per_user));
    for (std::size_t i = 0; i < up.peers.size(); ++i) up.peer_weights.push_back(1.0 / double(i + 1));
    summary.archetype_of_user.push_back(up.archetype);
  }

  // Anomalous user-weeks: an exact count drawn without replacement.
  const std::size_t total = cfg.n_users * cfg.n_weeks;
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pick = Rng::derive(cfg.seed, "anomalies");
  pick.shuffle(std::span<std::size_t>(order));
  std::vector<bool> anomalous(total, false);
  for (std::size_t i = 0; i < cfg.anomaly_count(); ++i) anomalous[order[i]] = true;

  std::vector<Transform> enabled;
  if (cfg.transforms.volume_spike) enabled.push_back(Transform::volume_spike);
  if (cfg.transforms.unusual_ports) enabled.push_back(Transform::unusual_ports);
  if (cfg.transforms.flag_shift) enabled.push_back(Transform::flag_shift);

  std::vector<Flow> flows;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    Rng rng = Rng::derive(cfg.seed, "flows-" + users[u].id);
    for (std::size_t w = 0; w < cfg.n_weeks; ++w) {
      const std::int64_t monday = start + static_cast<std::int64_t>(7 * w);
      const bool bad = anomalous[u * cfg.n_weeks + w];
      std::array<Transform, 7> per_day{};
      per_day.fill(Transform::none);
      if (bad) {
        const Transform t = enabled[rng.below(enabled.size())];
        const auto& tr = cfg.transforms;
        const std::size_t n_days = tr.min_days + rng.below(tr.max_days - tr.min_days + 1);
        std::array<std::size_t, kWeekdays> days{0, 1, 2, 3, 4};
        rng.shuffle(std::span<std::size_t>(days));
        for (std::size_t i = 0; i < n_days; ++i) per_day[days[i]] = t;
        summary.transform_of[{users[u].id, week_of(monday)}] = transform_name(t);
      }
      for (int d = 0; d < 7; ++d) {
        emit_day(cfg, users[u], monday + d, d >= 5, per_day[static_cast<std::size_t>(d)], rng, flows);
      }
      summary.labels[{users[u].id, week_of(monday)}] = bad ? Label::anomalous : Label::normal;
      summary.anomalous += bad ? 1 : 0;
    }
  }
  summary.user_weeks = total;
  summary.flows = flows.size();

  std::stable_sort(flows.begin(), flows.end(),
                   [](const Flow& a, const Flow& b) { return a.timestamp < b.timestamp; });

  for (const auto& c : comments) flows_out << "# " << c << '\n';
  flows_out << "timestamp,src_id,dst_id,direction,bytes,packets,src_port,dst_port,protocol,tcp_flags\n";
  std::string line;
  for (const Flow& f : flows) {
    const FlowRecord& r = f.rec;
    line.clear();
    line += std::to_string(r.timestamp);
    line += ',';
    line += r.src_id;
    line += ',';
    line += r.dst_id;
    line += ',';
    line += to_string(r.direction);
    line += ',';
    line += std::to_string(r.bytes);
    line += ',';
    line += std::to_string(r.packets);
    line += ',';
    line += std::to_string(r.src_port);
    line += ',';
    line += std::to_string(r.dst_port);
    line += ',';
    line += to_string(r.protocol);
    line += ',';
    line += std::to_string(r.tcp_flags);
    line += '\n';
    flows_out << line;
  }

  for (const auto& c : comments) labels_out << "# " << c << '\n';
  write_labels(labels_out, summary.labels);
  return summary;
}

}  // namespace fl4s
