#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marvin/bus.hpp"

/// JSON mirror of the bus payloads, shared by the WebSocket gateway and the
/// record/replay log. The field layout is documented in docs/protocol.md.
namespace marvin::wire {

using Json = nlohmann::json;

inline constexpr std::string_view kLogHeader = "MARVINLOG v1";

Json to_json(const msg::Payload& payload);
/// Strict decoding: missing fields, wrong types, unknown fields and bad enum
/// strings all raise SchemaError naming the offending path.
msg::Payload from_json(std::string_view schema, const Json& payload);

/// {"topic", "type", "publisher", "seq", "stamp", "payload"}
Json envelope_to_json(const bus::Envelope& e);
/// Checks the type against the topic registration when `bus` is given.
bus::Envelope envelope_from_json(const Json& j, const bus::Bus* bus = nullptr);

/// One log line (no trailing newline); doubles are written in shortest round-trip form.
std::string log_line(const bus::Envelope& e);

struct LogContents {
  std::vector<bus::Envelope> envelopes;
  bool truncated = false;  // the last line was cut short and has been skipped
};

/// Parses a recorded log. A missing or different header is refused with
/// ParseError; an unreadable final line ends the log early, while an
/// unreadable line in the middle raises ParseError with its line number.
LogContents parse_log(std::string_view text, const bus::Bus* registry = nullptr);

/// Topics a gateway client may publish on.
bool is_command_topic(std::string_view topic);

}  // namespace marvin::wire
