#include "fl4s/records.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <optional>

#include <json.hpp>

namespace fl4s {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s, int base = 10) {
  s = trim(s);
  if (base == 10 && s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value, base);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

int digits(std::string_view s, std::size_t pos, std::size_t len) {
  if (pos + len > s.size()) throw std::invalid_argument("truncated");
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) throw std::invalid_argument("not a digit");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

std::int64_t civil_to_epoch(int y, int mo, int d, int h, int mi, int se) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 60) throw std::invalid_argument("invalid date");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + se;
}

}  // namespace

std::int64_t parse_timestamp(std::string_view text) {
  const std::string_view s = trim(text);
  if (s.empty()) throw std::invalid_argument("empty timestamp");
  if (auto v = parse_number<std::int64_t>(s)) return *v;
  if (s.size() >= 19 && s[4] == '-' && s[7] == '-' && (s[10] == ' ' || s[10] == 'T')) {
    const std::string_view rest = s.substr(19);
    if (!rest.empty() && rest != "Z") throw std::invalid_argument("unsupported timestamp suffix");
    return civil_to_epoch(digits(s, 0, 4), digits(s, 5, 2), digits(s, 8, 2), digits(s, 11, 2),
                          digits(s, 14, 2), digits(s, 17, 2));
  }
  if (s.size() == 19 && s[2] == '/' && s[5] == '/' && s[10] == ' ') {
    return civil_to_epoch(digits(s, 6, 4), digits(s, 0, 2), digits(s, 3, 2), digits(s, 11, 2),
                          digits(s, 14, 2), digits(s, 17, 2));
  }
  // Fractional epoch seconds, truncated toward negative infinity.
  double seconds = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seconds);
  if (ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(seconds)) {
    return static_cast<std::int64_t>(std::floor(seconds));
  }
  throw std::invalid_argument("unparseable timestamp '" + std::string(s) + "'");
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string_view to_string(Direction d) { return d == Direction::in ? "in" : "out"; }

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::tcp: return "tcp";
    case Protocol::udp: return "udp";
    case Protocol::icmp: return "icmp";
    case Protocol::other: return "other";
  }
  return "other";
}

std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::logon: return "logon";
    case EventType::logoff: return "logoff";
    case EventType::device: return "device";
    case EventType::file: return "file";
    case EventType::http: return "http";
    case EventType::email: return "email";
  }
  return "logon";
}

SchemaDescriptor netflow_v1_schema() {
  SchemaDescriptor s{"netflow-v1", RecordKind::flow, {}};
  for (const char* role : {"timestamp", "src_id", "dst_id", "direction", "bytes", "packets",
                           "src_port", "dst_port", "protocol", "tcp_flags"}) {
    s.columns[role] = role;
  }
  return s;
}

SchemaDescriptor cert_events_v1_schema() {
  SchemaDescriptor s{"cert-events-v1", RecordKind::event, {}};
  s.columns = {{"timestamp", "date"}, {"user_id", "user"}, {"event_type", "activity"},
               {"host", "pc"}};
  return s;
}

SchemaDescriptor builtin_schema(std::string_view name) {
  if (name == "netflow-v1") return netflow_v1_schema();
  if (name == "cert-events-v1") return cert_events_v1_schema();
  throw std::invalid_argument("unknown schema '" + std::string(name) +
                              "' (built-in: netflow-v1, cert-events-v1)");
}

std::vector<std::string> required_roles(RecordKind kind) {
  if (kind == RecordKind::flow) {
    return {"timestamp", "src_id", "dst_id", "direction", "bytes", "packets", "dst_port"};
  }
  return {"timestamp", "user_id", "event_type"};
}

SchemaDescriptor schema_from_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  SchemaDescriptor s;
  s.name = j.value("name", std::string("custom"));
  const std::string kind = j.value("kind", std::string("flow"));
  if (kind == "flow") {
    s.kind = RecordKind::flow;
  } else if (kind == "event") {
    s.kind = RecordKind::event;
  } else {
    throw std::invalid_argument("schema: kind must be 'flow' or 'event', got '" + kind + "'");
  }
  for (const auto& [role, header] : j.at("columns").items()) {
    s.columns[role] = header.get<std::string>();
  }
  for (const auto& role : required_roles(s.kind)) {
    if (!s.columns.contains(role)) {
      throw std::invalid_argument("schema '" + s.name + "': role '" + role + "' is not mapped");
    }
  }
  return s;
}

namespace {

/// Column lookup built from the header row.
class ColumnMap {
 public:
  ColumnMap(const std::vector<std::string>& header, const SchemaDescriptor& schema) {
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < header.size(); ++i) by_name[std::string(trim(header[i]))] = i;
    for (const auto& [role, name] : schema.columns) {
      if (auto it = by_name.find(name); it != by_name.end()) index_[role] = it->second;
    }
    for (const auto& role : required_roles(schema.kind)) {
      if (!index_.contains(role)) {
        throw ParseError("schema '" + schema.name + "': required column '" +
                         schema.columns.at(role) + "' (role " + role + ") missing from header");
      }
    }
    width_ = header.size();
  }

  std::optional<std::string_view> get(const std::vector<std::string>& fields,
                                      const std::string& role) const {
    auto it = index_.find(role);
    if (it == index_.end()) return std::nullopt;
    return trim(fields[it->second]);
  }
  std::string_view at(const std::vector<std::string>& fields, const std::string& role) const {
    return trim(fields[index_.at(role)]);
  }
  std::size_t width() const { return width_; }

 private:
  std::map<std::string, std::size_t> index_;
  std::size_t width_ = 0;
};

template <typename T>
T require_number(std::string_view field, const char* what) {
  auto v = parse_number<T>(field);
  if (!v) throw std::invalid_argument(std::string(what) + " '" + std::string(field) + "' is not a valid number");
  return *v;
}

std::uint16_t parse_port(std::string_view field, const char* what) {
  auto v = parse_number<std::int64_t>(field);
  if (!v) throw std::invalid_argument(std::string(what) + " '" + std::string(field) + "' is not a number");
  if (*v < 0 || *v > 65535) {
    throw std::invalid_argument(std::string(what) + " " + std::to_string(*v) + " outside 0-65535");
  }
  return static_cast<std::uint16_t>(*v);
}

Direction parse_direction(std::string_view field) {
  const std::string v = lower(field);
  if (v == "in" || v == "i" || v == "ingress" || v == "incoming") return Direction::in;
  if (v == "out" || v == "o" || v == "egress" || v == "outgoing") return Direction::out;
  throw std::invalid_argument("direction '" + std::string(field) + "' is not in|out");
}

Protocol parse_protocol(std::string_view field) {
  const std::string v = lower(field);
  if (v == "tcp" || v == "6") return Protocol::tcp;
  if (v == "udp" || v == "17") return Protocol::udp;
  if (v == "icmp" || v == "1") return Protocol::icmp;
  if (v.empty()) throw std::invalid_argument("empty protocol");
  return Protocol::other;
}

std::uint8_t parse_flags(std::string_view field) {
  auto v = parse_number<std::int64_t>(field);
  if (!v || *v < 0 || *v > 255) {
    throw std::invalid_argument("tcp_flags '" + std::string(field) + "' is not an 8-bit mask");
  }
  return static_cast<std::uint8_t>(*v);
}

EventType parse_event_type(std::string_view field) {
  const std::string v = lower(field);
  if (v == "logon") return EventType::logon;
  if (v == "logoff") return EventType::logoff;
  if (v == "device" || v == "connect" || v == "disconnect") return EventType::device;
  if (v == "file") return EventType::file;
  if (v == "http") return EventType::http;
  if (v == "email") return EventType::email;
  throw std::invalid_argument("unknown event type '" + std::string(field) + "'");
}

FlowRecord parse_flow_fields(const std::vector<std::string>& f, const ColumnMap& cols) {
  FlowRecord r;
  r.timestamp = parse_timestamp(cols.at(f, "timestamp"));
  r.src_id = std::string(cols.at(f, "src_id"));
  r.dst_id = std::string(cols.at(f, "dst_id"));
  r.direction = parse_direction(cols.at(f, "direction"));
  const auto bytes = require_number<std::int64_t>(cols.at(f, "bytes"), "bytes");
  const auto packets = require_number<std::int64_t>(cols.at(f, "packets"), "packets");
  if (bytes < 0 || packets < 0) throw std::invalid_argument("negative byte or packet count");
  r.bytes = static_cast<std::uint64_t>(bytes);
  r.packets = static_cast<std::uint64_t>(packets);
  r.dst_port = parse_port(cols.at(f, "dst_port"), "dst_port");
  if (auto v = cols.get(f, "src_port")) r.src_port = parse_port(*v, "src_port");
  if (auto v = cols.get(f, "protocol")) r.protocol = parse_protocol(*v);
  if (auto v = cols.get(f, "tcp_flags")) r.tcp_flags = parse_flags(*v);
  if (r.user().empty()) throw std::invalid_argument("empty user identifier");
  return r;
}

EventRecord parse_event_fields(const std::vector<std::string>& f, const ColumnMap& cols) {
  EventRecord r;
  r.timestamp = parse_timestamp(cols.at(f, "timestamp"));
  r.user_id = std::string(cols.at(f, "user_id"));
  if (r.user_id.empty()) throw std::invalid_argument("empty user identifier");
  r.type = parse_event_type(cols.at(f, "event_type"));
  if (auto v = cols.get(f, "host")) r.host = std::string(*v);
  return r;
}

template <typename Record, typename ParseFields>
ParseResult<Record> parse_csv(std::istream& in, const SchemaDescriptor& schema,
                              const ParseOptions& options, ParseFields parse_fields) {
  ParseResult<Record> result;
  std::string line;
  std::size_t line_no = 0;
  std::optional<ColumnMap> cols;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split_csv_line(view);
    if (!cols) {
      cols.emplace(fields, schema);
      continue;
    }
    try {
      if (fields.size() != cols->width()) {
        throw std::invalid_argument("expected " + std::to_string(cols->width()) + " fields, got " +
                                    std::to_string(fields.size()));
      }
      result.records.push_back(parse_fields(fields, *cols));
      ++result.report.parsed;
    } catch (const std::invalid_argument& e) {
      const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
      if (options.strict) throw ParseError(msg);
      ++result.report.skipped;
      if (result.report.errors.size() < options.max_logged_errors) {
        result.report.errors.push_back(msg);
      }
    }
  }
  if (!cols) throw ParseError("schema '" + schema.name + "': input has no header row");
  return result;
}

void require_kind(const SchemaDescriptor& schema, RecordKind kind) {
  if (schema.kind != kind) {
    throw std::invalid_argument("schema '" + schema.name + "' does not describe " +
                                (kind == RecordKind::flow ? "flow" : "event") + " records");
  }
}

}  // namespace

ParseResult<FlowRecord> parse_flows(std::istream& in, const SchemaDescriptor& schema,
                                    const ParseOptions& options) {
  require_kind(schema, RecordKind::flow);
  return parse_csv<FlowRecord>(in, schema, options, parse_flow_fields);
}

ParseResult<EventRecord> parse_events(std::istream& in, const SchemaDescriptor& schema,
                                      const ParseOptions& options) {
  require_kind(schema, RecordKind::event);
  return parse_csv<EventRecord>(in, schema, options, parse_event_fields);
}

}  // namespace fl4s
