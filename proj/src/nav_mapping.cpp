#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "marvin/errors.hpp"
#include "marvin/nav.hpp"

namespace marvin::nav {

MapperState::MapperState(GridGeometry g, MapperParams p) : geometry(g), params(p) {
  geometry.validate();
  log_odds.assign(geometry.size(), 0.0);
}

namespace {

BeamCells trace_beam(const GridGeometry& g, const sim::LidarScan& scan, std::size_t i) {
  BeamCells beam;
  const double a = scan.pose.yaw + scan.angle(i);
  const double range = scan.ranges[i];
  std::vector<CellIndex> cells;
  const bool left = traverse(g, {scan.pose.x, scan.pose.y}, {std::cos(a), std::sin(a)}, range,
                             [&](CellIndex c, double) {
                               cells.push_back(c);
                               return true;
                             });
  if (!left && !cells.empty()) {
    const CellIndex end = cells.back();
    cells.pop_back();
    if (scan.is_hit(i)) beam.hit = end;
  }
  beam.free = std::move(cells);
  return beam;
}

}  // namespace

std::vector<BeamCells> trace_scan(const GridGeometry& g, const sim::LidarScan& scan) {
  std::vector<BeamCells> beams(scan.ranges.size());
  const int n = static_cast<int>(scan.ranges.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) beams[static_cast<std::size_t>(i)] = trace_beam(g, scan, static_cast<std::size_t>(i));
  return beams;
}

std::vector<BeamCells> trace_scan_serial(const GridGeometry& g, const sim::LidarScan& scan) {
  std::vector<BeamCells> beams;
  beams.reserve(scan.ranges.size());
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) beams.push_back(trace_beam(g, scan, i));
  return beams;
}

void mapper_update(MapperState& state, const kin::Pose2D& pose, const sim::LidarScan& scan) {
  sim::LidarScan at_pose = scan;
  at_pose.pose = pose;
  const auto& p = state.params;
  auto add = [&](CellIndex c, double delta) {
    double& l = state.log_odds[state.geometry.index(c)];
    l = std::clamp(l + delta, p.l_min, p.l_max);
  };
  for (const auto& beam : trace_scan(state.geometry, at_pose)) {
    for (const auto& c : beam.free) add(c, p.l_free);
    if (beam.hit) add(*beam.hit, p.l_occ);
  }
  ++state.updates;
}

OccupancyGrid threshold_map(const MapperState& state) {
  const double occ = std::log(state.params.p_occupied / (1.0 - state.params.p_occupied));
  const double free = std::log(state.params.p_free / (1.0 - state.params.p_free));
  OccupancyGrid grid(state.geometry, Cell::Unknown);
  for (std::size_t i = 0; i < state.log_odds.size(); ++i) {
    const double l = state.log_odds[i];
    if (l > occ) {
      grid.cells[i] = Cell::Occupied;
    } else if (l < free) {
      grid.cells[i] = Cell::Free;
    }
  }
  return grid;
}

// --- map files -------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "MARVINMAP v1";

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::vector<T> parse_numbers(std::string_view line, std::size_t count, std::size_t line_no) {
  std::vector<T> out;
  const char* p = line.data();
  const char* end = line.data() + line.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    T v{};
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{} || (next < end && *next != ' ')) throw ParseError(line_no, "malformed number");
    out.push_back(v);
    p = next;
  }
  if (out.size() != count) {
    throw ParseError(line_no, "expected " + std::to_string(count) + " values, found " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace

std::string encode_map(const OccupancyGrid& grid) {
  const auto& g = grid.geometry;
  std::string out;
  out += kMagic;
  out += '\n';
  out += std::to_string(g.width) + " " + std::to_string(g.height) + "\n";
  out += fmt_double(g.resolution) + "\n";
  out += fmt_double(g.origin.x) + " " + fmt_double(g.origin.y) + " " + fmt_double(g.origin.yaw) + "\n";
  out.reserve(out.size() + grid.cells.size());
  for (Cell c : grid.cells) out.push_back(static_cast<char>(static_cast<std::uint8_t>(c)));
  return out;
}

OccupancyGrid decode_map(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&](std::size_t line_no) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(line_no, "unexpected end of header");
    std::string_view line(bytes.data() + pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line(1) != kMagic) throw ParseError(1, "expected '" + std::string(kMagic) + "'");
  const auto dims = parse_numbers<long long>(next_line(2), 2, 2);
  const auto res = parse_numbers<double>(next_line(3), 1, 3);
  const auto origin = parse_numbers<double>(next_line(4), 3, 4);
  if (dims[0] <= 0 || dims[1] <= 0 || dims[0] > 100000 || dims[1] > 100000) throw ParseError(2, "bad dimensions");
  if (!(res[0] > 0.0) || !std::isfinite(res[0])) throw ParseError(3, "resolution must be > 0");

  GridGeometry g;
  g.width = static_cast<int>(dims[0]);
  g.height = static_cast<int>(dims[1]);
  g.resolution = res[0];
  g.origin = {origin[0], origin[1], origin[2]};
  const std::size_t n = g.size();
  const std::size_t have = bytes.size() - pos;
  if (have != n) {
    throw ParseError(5, "expected " + std::to_string(n) + " cell bytes, found " + std::to_string(have));
  }
  OccupancyGrid grid(g, Cell::Unknown);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::uint8_t>(bytes[pos + i]);
    if (v != 0 && v != 100 && v != 255) {
      throw ParseError(5, "invalid cell value " + std::to_string(v) + " at offset " + std::to_string(i));
    }
    grid.cells[i] = static_cast<Cell>(v);
  }
  return grid;
}

void save_map(const OccupancyGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write map " + path.string());
  const std::string bytes = encode_map(grid);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_map(const MapperState& state, const std::filesystem::path& path) { save_map(threshold_map(state), path); }

OccupancyGrid load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open map " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_map(ss.str());
}

}  // namespace marvin::nav
