#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fl4s {

enum class Direction : std::uint8_t { in, out };
enum class Protocol : std::uint8_t { tcp, udp, icmp, other };

/// One parsed netflow line. The tracked user is the source of an outgoing
/// flow and the destination of an incoming one.
struct FlowRecord {
  std::int64_t timestamp = 0;  // seconds since epoch
  std::string src_id;
  std::string dst_id;
  Direction direction = Direction::out;
  std::uint64_t bytes = 0;
  std::uint64_t packets = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Protocol protocol = Protocol::tcp;
  std::uint8_t tcp_flags = 0;

  const std::string& user() const { return direction == Direction::out ? src_id : dst_id; }
  const std::string& peer() const { return direction == Direction::out ? dst_id : src_id; }
};

enum class EventType : std::uint8_t { logon, logoff, device, file, http, email };
inline constexpr std::size_t kEventTypeCount = 6;

/// One parsed host event line (insider-threat style logs).
struct EventRecord {
  std::int64_t timestamp = 0;
  std::string user_id;
  EventType type = EventType::logon;
  std::string host;
};

enum class RecordKind { flow, event };

/// Maps column roles (e.g. "dst_port") to header names in a CSV file.
struct SchemaDescriptor {
  std::string name;
  RecordKind kind = RecordKind::flow;
  std::map<std::string, std::string> columns;  // role -> header name
};

SchemaDescriptor netflow_v1_schema();
SchemaDescriptor cert_events_v1_schema();
/// Built-in schema by name ("netflow-v1", "cert-events-v1").
SchemaDescriptor builtin_schema(std::string_view name);
/// Parses a user schema file: JSON object {"name", "kind", "columns": {role: header}}.
SchemaDescriptor schema_from_text(std::string_view text);

/// Roles that must be mapped for a schema kind.
std::vector<std::string> required_roles(RecordKind kind);

struct ParseOptions {
  bool strict = false;
  std::size_t max_logged_errors = 20;
};

struct ParseReport {
  std::size_t parsed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;  // first few skip reasons, "line N: ..."
  std::size_t total() const { return parsed + skipped; }
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Record>
struct ParseResult {
  std::vector<Record> records;
  ParseReport report;
};

/// Parses a CSV stream with a header row. Blank lines and lines starting
/// with '#' are not records. Malformed lines are skipped and counted, or
/// raise ParseError when options.strict is set. A missing required column
/// always raises ParseError.
ParseResult<FlowRecord> parse_flows(std::istream& in, const SchemaDescriptor& schema,
                                    const ParseOptions& options = {});
ParseResult<EventRecord> parse_events(std::istream& in, const SchemaDescriptor& schema,
                                      const ParseOptions& options = {});

/// Accepts integer or fractional epoch seconds, "YYYY-MM-DD[ T]HH:MM:SS[Z]"
/// and "MM/DD/YYYY HH:MM:SS" (UTC).
std::int64_t parse_timestamp(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

std::string_view to_string(Direction d);
std::string_view to_string(Protocol p);
std::string_view to_string(EventType t);

}  // namespace fl4s
