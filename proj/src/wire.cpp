#include "marvin/wire.hpp"

#include <array>
#include <set>

#include "marvin/errors.hpp"

namespace marvin::wire {

namespace {

// Field reader that tracks which keys were consumed.
class Obj {
 public:
  Obj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected object");
  }

  const Json& field(const char* key) {
    if (!j_.contains(key)) fail(path_ + "." + key, "missing");
    used_.insert(key);
    return j_.at(key);
  }
  bool has(const char* key) const { return j_.contains(key); }
  std::string at(const char* key) const { return path_ + "." + key; }

  double num(const char* key) {
    const auto& v = field(key);
    if (!v.is_number()) fail(at(key), "expected number");
    return v.get<double>();
  }
  long long integer(const char* key) {
    const auto& v = field(key);
    if (!v.is_number_integer()) fail(at(key), "expected integer");
    return v.get<long long>();
  }
  bool boolean(const char* key) {
    const auto& v = field(key);
    if (!v.is_boolean()) fail(at(key), "expected boolean");
    return v.get<bool>();
  }
  std::string str(const char* key) {
    const auto& v = field(key);
    if (!v.is_string()) fail(at(key), "expected string");
    return v.get<std::string>();
  }
  Obj sub(const char* key) { return Obj(field(key), at(key)); }
  const Json& array(const char* key) {
    const auto& v = field(key);
    if (!v.is_array()) fail(at(key), "expected array");
    return v;
  }

  template <class F>
  auto enumerated(const char* key, F parse) {
    const std::string s = str(key);
    try {
      return parse(s);
    } catch (const std::invalid_argument&) {
      fail(at(key), "unknown value '" + s + "'");
    }
  }

  void done() const {
    for (const auto& [k, _] : j_.items()) {
      if (!used_.contains(k)) fail(path_ + "." + k, "unknown field");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw SchemaError(path + ": " + what);
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string, std::less<>> used_;
};

double array_num(const Json& v, const std::string& path) {
  if (!v.is_number()) Obj::fail(path, "expected number");
  return v.get<double>();
}

Json pose(const kin::Pose2D& p) { return {{"x", p.x}, {"y", p.y}, {"yaw", p.yaw}}; }
kin::Pose2D pose(Obj o) {
  kin::Pose2D p{o.num("x"), o.num("y"), o.num("yaw")};
  o.done();
  return p;
}

Json twist(const kin::Twist2D& t) { return {{"vx", t.vx}, {"vy", t.vy}, {"yaw_rate", t.yaw_rate}}; }
kin::Twist2D twist(Obj o) {
  kin::Twist2D t{o.num("vx"), o.num("vy"), o.num("yaw_rate")};
  o.done();
  return t;
}

Json wheels(const kin::WheelSpeeds& w) { return {{"fl", w.fl}, {"fr", w.fr}, {"rr", w.rr}, {"rl", w.rl}}; }
kin::WheelSpeeds wheels(Obj o) {
  kin::WheelSpeeds w{o.num("fl"), o.num("fr"), o.num("rr"), o.num("rl")};
  o.done();
  return w;
}

Json device(const low::DeviceState& d) {
  return {{"linear_pos", d.linear_pos},       {"tilt_pos", d.tilt_pos},
          {"phase", low::to_string(d.phase)}, {"switch_linear", d.switch_linear},
          {"switch_tilt", d.switch_tilt},     {"linear_goal", d.linear_goal},
          {"tilt_goal", d.tilt_goal}};
}
low::DeviceState device(Obj o) {
  low::DeviceState d;
  d.linear_pos = o.num("linear_pos");
  d.tilt_pos = o.num("tilt_pos");
  d.phase = o.enumerated("phase", low::device_phase_from_string);
  d.switch_linear = o.boolean("switch_linear");
  d.switch_tilt = o.boolean("switch_tilt");
  d.linear_goal = o.num("linear_goal");
  d.tilt_goal = o.num("tilt_goal");
  o.done();
  return d;
}

char cell_char(Cell c) {
  switch (c) {
    case Cell::Free: return '.';
    case Cell::Occupied: return '#';
    case Cell::Unknown: return '?';
  }
  return '?';
}

// --- per-payload encoders ---------------------------------------------------------------

Json encode(const msg::ActionRequest& m) {
  return {{"kind", msg::to_string(m.kind)}, {"poi", m.poi}, {"source", msg::to_string(m.source)}};
}
Json encode(const msg::VelocityCommand& m) {
  return {{"twist", twist(m.twist)}, {"source", msg::to_string(m.source)}, {"stamp", m.stamp}};
}
Json encode(const msg::EstopCommand& m) { return {{"latch", m.latch}}; }
Json encode(const msg::DeviceRequest& m) { return {{"target", low::to_string(m.target)}}; }
Json encode(const msg::LightsCommand& m) { return {{"on", m.on}}; }
Json encode(const msg::Telemetry& m) {
  return {{"pose", pose(m.pose)},       {"twist", twist(m.twist)},
          {"command", twist(m.command)}, {"wheels", wheels(m.wheels)},
          {"wheel_targets", wheels(m.wheel_targets)}, {"device", device(m.device)},
          {"lights", m.lights},          {"estop", m.estop},
          {"task", m.task},              {"task_phase", m.task_phase}};
}
Json encode(const msg::NavGoal& m) {
  return {{"pose", pose(m.pose)}, {"speed_cap", m.speed_cap}, {"label", m.label}, {"cancel", m.cancel}};
}
Json encode(const msg::PathMsg& m) {
  Json poses = Json::array();
  for (const auto& p : m.poses) poses.push_back(pose(p));
  return {{"poses", poses}, {"cost", m.cost}};
}
Json encode(const sim::LidarScan& m) {
  return {{"stamp", m.stamp},
          {"pose", pose(m.pose)},
          {"angle_min", m.angle_min},
          {"angle_increment", m.angle_increment},
          {"max_range", m.max_range},
          {"ranges", m.ranges}};
}
Json encode(const msg::TrackList& m) {
  Json tracks = Json::array();
  for (const auto& t : m.tracks) {
    tracks.push_back({{"id", t.id}, {"box", t.box}, {"pose_class", t.pose_class}, {"confirmed", t.confirmed}});
  }
  return {{"tracks", tracks}, {"target", m.target ? Json(*m.target) : Json(nullptr)}};
}
Json encode(const msg::PersonGoalMsg& m) {
  return {{"x", m.x},         {"y", m.y},         {"world_x", m.world_x},
          {"world_y", m.world_y}, {"stamp", m.stamp}, {"track_id", m.track_id}};
}
Json encode(const msg::TaskEvent& m) { return {{"kind", m.kind}, {"detail", m.detail}}; }
Json encode(const msg::VocalResponse& m) { return {{"text", m.text}}; }
Json encode(const msg::UtteranceFrame& m) {
  return {{"stamp", m.stamp}, {"energy", m.energy}, {"token", m.token ? Json(*m.token) : Json(nullptr)}};
}
Json encode(const msg::UtteranceText& m) { return {{"text", m.text}}; }
Json encode(const msg::HelpReply& m) {
  return {{"answer", m.answer == msg::HelpAnswer::Confirm ? "confirm" : "deny"}};
}
Json encode(const msg::TriggerWord& m) { return {{"word", m.word}}; }
Json encode(const msg::MapMsg& m) {
  const auto& g = m.grid.geometry;
  std::string cells;
  cells.reserve(m.grid.cells.size());
  for (Cell c : m.grid.cells) cells.push_back(cell_char(c));
  return {{"width", g.width},
          {"height", g.height},
          {"resolution", g.resolution},
          {"origin", pose(g.origin)},
          {"cells", cells}};
}

// --- per-payload decoders ---------------------------------------------------------------

template <class T>
T decode(Obj& o);

template <>
msg::ActionRequest decode(Obj& o) {
  msg::ActionRequest m;
  m.kind = o.enumerated("kind", msg::action_kind_from_string);
  m.poi = o.str("poi");
  m.source = o.enumerated("source", msg::action_source_from_string);
  return m;
}
template <>
msg::VelocityCommand decode(Obj& o) {
  msg::VelocityCommand m;
  m.twist = twist(o.sub("twist"));
  m.source = o.enumerated("source", msg::command_source_from_string);
  m.stamp = o.num("stamp");
  return m;
}
template <>
msg::EstopCommand decode(Obj& o) {
  return {o.boolean("latch")};
}
template <>
msg::DeviceRequest decode(Obj& o) {
  return {o.enumerated("target", low::device_target_from_string)};
}
template <>
msg::LightsCommand decode(Obj& o) {
  return {o.boolean("on")};
}
template <>
msg::Telemetry decode(Obj& o) {
  msg::Telemetry m;
  m.pose = pose(o.sub("pose"));
  m.twist = twist(o.sub("twist"));
  m.command = twist(o.sub("command"));
  m.wheels = wheels(o.sub("wheels"));
  m.wheel_targets = wheels(o.sub("wheel_targets"));
  m.device = device(o.sub("device"));
  m.lights = o.boolean("lights");
  m.estop = o.boolean("estop");
  m.task = o.str("task");
  m.task_phase = o.str("task_phase");
  return m;
}
template <>
msg::NavGoal decode(Obj& o) {
  msg::NavGoal m;
  m.pose = pose(o.sub("pose"));
  m.speed_cap = o.num("speed_cap");
  m.label = o.str("label");
  m.cancel = o.boolean("cancel");
  return m;
}
template <>
msg::PathMsg decode(Obj& o) {
  msg::PathMsg m;
  const auto& poses = o.array("poses");
  for (std::size_t i = 0; i < poses.size(); ++i) m.poses.push_back(pose(Obj(poses[i], o.at("poses") + "[" + std::to_string(i) + "]")));
  m.cost = o.num("cost");
  return m;
}
template <>
sim::LidarScan decode(Obj& o) {
  sim::LidarScan m;
  m.stamp = o.num("stamp");
  m.pose = pose(o.sub("pose"));
  m.angle_min = o.num("angle_min");
  m.angle_increment = o.num("angle_increment");
  m.max_range = o.num("max_range");
  const auto& r = o.array("ranges");
  m.ranges.reserve(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) m.ranges.push_back(array_num(r[i], o.at("ranges")));
  return m;
}
template <>
msg::TrackList decode(Obj& o) {
  msg::TrackList m;
  const auto& tracks = o.array("tracks");
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    Obj t(tracks[i], o.at("tracks") + "[" + std::to_string(i) + "]");
    msg::TrackInfo info;
    info.id = static_cast<int>(t.integer("id"));
    const auto& box = t.array("box");
    if (box.size() != 4) Obj::fail(t.at("box"), "expected 4 numbers");
    for (std::size_t k = 0; k < 4; ++k) info.box[k] = array_num(box[k], t.at("box"));
    info.pose_class = t.str("pose_class");
    info.confirmed = t.boolean("confirmed");
    t.done();
    m.tracks.push_back(std::move(info));
  }
  const auto& target = o.field("target");
  if (!target.is_null()) {
    if (!target.is_number_integer()) Obj::fail(o.at("target"), "expected integer or null");
    m.target = target.get<int>();
  }
  return m;
}
template <>
msg::PersonGoalMsg decode(Obj& o) {
  msg::PersonGoalMsg m;
  m.x = o.num("x");
  m.y = o.num("y");
  m.world_x = o.num("world_x");
  m.world_y = o.num("world_y");
  m.stamp = o.num("stamp");
  m.track_id = static_cast<int>(o.integer("track_id"));
  return m;
}
template <>
msg::TaskEvent decode(Obj& o) {
  return {o.str("kind"), o.str("detail")};
}
template <>
msg::VocalResponse decode(Obj& o) {
  return {o.str("text")};
}
template <>
msg::UtteranceFrame decode(Obj& o) {
  msg::UtteranceFrame m;
  m.stamp = o.num("stamp");
  m.energy = o.num("energy");
  if (!(m.energy >= 0.0 && m.energy <= 1.0)) Obj::fail(o.at("energy"), "must lie in [0, 1]");
  const auto& tok = o.field("token");
  if (!tok.is_null()) {
    if (!tok.is_string()) Obj::fail(o.at("token"), "expected string or null");
    m.token = tok.get<std::string>();
  }
  return m;
}
template <>
msg::UtteranceText decode(Obj& o) {
  return {o.str("text")};
}
template <>
msg::HelpReply decode(Obj& o) {
  const auto s = o.str("answer");
  if (s == "confirm") return {msg::HelpAnswer::Confirm};
  if (s == "deny") return {msg::HelpAnswer::Deny};
  Obj::fail(o.at("answer"), "unknown value '" + s + "'");
}
template <>
msg::TriggerWord decode(Obj& o) {
  return {o.str("word")};
}
template <>
msg::MapMsg decode(Obj& o) {
  GridGeometry g;
  g.width = static_cast<int>(o.integer("width"));
  g.height = static_cast<int>(o.integer("height"));
  g.resolution = o.num("resolution");
  g.origin = pose(o.sub("origin"));
  if (g.width <= 0 || g.height <= 0 || !(g.resolution > 0.0)) Obj::fail(o.at("width"), "invalid geometry");
  const auto cells = o.str("cells");
  if (cells.size() != g.size()) Obj::fail(o.at("cells"), "length does not match width*height");
  msg::MapMsg m{OccupancyGrid(g, Cell::Unknown)};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    switch (cells[i]) {
      case '.': m.grid.cells[i] = Cell::Free; break;
      case '#': m.grid.cells[i] = Cell::Occupied; break;
      case '?': m.grid.cells[i] = Cell::Unknown; break;
      default: Obj::fail(o.at("cells"), "invalid cell character");
    }
  }
  return m;
}

template <std::size_t... I>
msg::Payload decode_index(std::size_t index, Obj& o, std::index_sequence<I...>) {
  using Decoder = msg::Payload (*)(Obj&);
  static constexpr std::array<Decoder, sizeof...(I)> table = {
      +[](Obj& obj) -> msg::Payload { return decode<std::variant_alternative_t<I, msg::Payload>>(obj); }...};
  return table[index](o);
}

}  // namespace

Json to_json(const msg::Payload& payload) {
  return std::visit([](const auto& m) { return encode(m); }, payload);
}

msg::Payload from_json(std::string_view schema, const Json& payload) {
  const auto index = msg::schema_index(schema);
  if (!index) throw SchemaError("unknown schema '" + std::string(schema) + "'");
  Obj o(payload, std::string(schema));
  msg::Payload p = decode_index(*index, o, std::make_index_sequence<std::variant_size_v<msg::Payload>>{});
  o.done();
  return p;
}

Json envelope_to_json(const bus::Envelope& e) {
  return {{"topic", e.topic},
          {"type", msg::kSchemaNames[e.payload->index()]},
          {"publisher", e.publisher},
          {"seq", e.seq},
          {"stamp", e.stamp},
          {"payload", to_json(*e.payload)}};
}

bus::Envelope envelope_from_json(const Json& j, const bus::Bus* bus) {
  Obj o(j, "envelope");
  bus::Envelope e;
  e.topic = o.str("topic");
  const std::string type = o.str("type");
  e.publisher = o.str("publisher");
  const long long seq = o.integer("seq");
  if (seq < 0) Obj::fail(o.at("seq"), "must be >= 0");
  e.seq = static_cast<std::uint64_t>(seq);
  e.stamp = o.num("stamp");
  if (bus) {
    const auto idx = bus->payload_index(e.topic);
    if (!idx) throw SchemaError("unknown topic '" + e.topic + "'");
    if (msg::kSchemaNames[*idx] != type) {
      throw SchemaError("topic '" + e.topic + "' carries " + std::string(msg::kSchemaNames[*idx]) + ", not " + type);
    }
  }
  e.payload = std::make_shared<const msg::Payload>(wire::from_json(type, o.field("payload")));
  o.done();
  return e;
}

std::string log_line(const bus::Envelope& e) { return envelope_to_json(e).dump(); }

LogContents parse_log(std::string_view text, const bus::Bus* registry) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty()) throw ParseError(1, "empty log");
  std::string_view header = lines.front();
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  if (header != kLogHeader) {
    if (header.rfind("MARVINLOG", 0) == 0) {
      throw ParseError(1, "unsupported log version '" + std::string(header) + "', expected '" +
                              std::string(kLogHeader) + "'");
    }
    throw ParseError(1, "not a marvin log");
  }

  LogContents out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.empty()) continue;
    const bool last = i + 1 == lines.size();
    try {
      out.envelopes.push_back(envelope_from_json(Json::parse(line), registry));
    } catch (const std::exception& e) {
      if (last) {
        out.truncated = true;
        break;
      }
      throw ParseError(i + 1, e.what());
    }
  }
  return out;
}

bool is_command_topic(std::string_view topic) {
  namespace t = bus::topic;
  return topic == t::kActions || topic == t::kCmdVelManual || topic == t::kEstop || topic == t::kDevice ||
         topic == t::kUtterance || topic == t::kUtteranceText || topic == t::kHelpReply || topic == t::kTriggerWord;
}

}  // namespace marvin::wire
