#include "marvin/perception.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "marvin/errors.hpp"

namespace marvin::perc {

namespace {
constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "nose",       "left_eye",    "right_eye",      "left_ear",       "right_ear",  "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist",     "right_wrist", "left_hip",
    "right_hip",  "left_knee",   "right_knee",     "left_ankle",     "right_ankle"};
}  // namespace

std::string_view joint_name(std::size_t j) {
  if (j >= kJointCount) throw std::out_of_range("joint index");
  return kJointNames[j];
}

std::string_view to_string(PoseClass c) {
  switch (c) {
    case PoseClass::Standing: return "standing";
    case PoseClass::Sitting: return "sitting";
    case PoseClass::Laying: return "laying";
    case PoseClass::Unknown: return "unknown";
  }
  return "unknown";
}

PoseClass pose_class_from_string(std::string_view s) {
  for (auto c : {PoseClass::Standing, PoseClass::Sitting, PoseClass::Laying, PoseClass::Unknown}) {
    if (to_string(c) == s) return c;
  }
  throw std::invalid_argument("unknown pose class '" + std::string(s) + "'");
}

// --- camera ------------------------------------------------------------------------------

CameraModel CameraModel::standard() {
  CameraModel c;
  c.fx = c.focal_x();
  c.fy = c.fx;
  return c;
}

double CameraModel::focal_x() const {
  if (fx > 0.0) return fx;
  return 0.5 * width / std::tan(0.5 * hfov);
}

double CameraModel::focal_y() const { return fy > 0.0 ? fy : focal_x(); }

void CameraModel::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera image size must be positive");
  if (!(hfov > 0.0 && hfov < std::numbers::pi)) throw std::invalid_argument("camera FOV out of range");
  if (!(focal_x() > 0.0) || !(focal_y() > 0.0)) throw std::invalid_argument("camera focal length must be > 0");
  const double implied = 2.0 * std::atan(0.5 * width / focal_x());
  if (std::abs(implied - hfov) > 1e-3) throw std::invalid_argument("camera focal length disagrees with FOV");
  if (!(max_depth > 0.0)) throw std::invalid_argument("camera max depth must be > 0");
}

CameraPose camera_pose(const CameraModel& cam, const kin::Pose2D& robot, const low::DeviceState& device) {
  const double pitch = cam.pitch + device.tilt_pos * std::numbers::pi / 180.0;
  const double c = std::cos(robot.yaw), s = std::sin(robot.yaw);
  const Eigen::Vector3d fwd_h(c, s, 0.0);
  const Eigen::Vector3d left(-s, c, 0.0);
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  CameraPose p;
  p.position = Eigen::Vector3d(robot.x, robot.y, cam.mount_height + device.linear_pos) + cam.mount_x * fwd_h;
  p.forward = std::cos(pitch) * fwd_h - std::sin(pitch) * up;
  p.down = -std::sin(pitch) * fwd_h - std::cos(pitch) * up;
  p.right = -left;
  return p;
}

// --- skeletons ---------------------------------------------------------------------------

const std::array<Eigen::Vector3d, kJointCount>& skeleton_template(sim::Posture p) {
  using V = Eigen::Vector3d;
  // Paired joints are listed left then right; left is +y.
  static const std::array<V, kJointCount> standing = {
      V(0.10, 0.0, 1.62),   V(0.08, 0.03, 1.66),  V(0.08, -0.03, 1.66), V(0.0, 0.07, 1.63),
      V(0.0, -0.07, 1.63),  V(0.0, 0.19, 1.42),   V(0.0, -0.19, 1.42),  V(0.0, 0.22, 1.12),
      V(0.0, -0.22, 1.12),  V(0.02, 0.22, 0.86),  V(0.02, -0.22, 0.86), V(0.0, 0.11, 0.95),
      V(0.0, -0.11, 0.95),  V(0.02, 0.11, 0.52),  V(0.02, -0.11, 0.52), V(0.0, 0.11, 0.08),
      V(0.0, -0.11, 0.08)};
  static const std::array<V, kJointCount> sitting = {
      V(0.08, 0.0, 1.18),   V(0.06, 0.03, 1.22),  V(0.06, -0.03, 1.22), V(-0.02, 0.07, 1.19),
      V(-0.02, -0.07, 1.19), V(0.0, 0.19, 0.98),  V(0.0, -0.19, 0.98),  V(0.05, 0.22, 0.70),
      V(0.05, -0.22, 0.70), V(0.25, 0.18, 0.62),  V(0.25, -0.18, 0.62), V(0.0, 0.11, 0.48),
      V(0.0, -0.11, 0.48),  V(0.45, 0.12, 0.50),  V(0.45, -0.12, 0.50), V(0.45, 0.12, 0.08),
      V(0.45, -0.12, 0.08)};
  static const std::array<V, kJointCount> laying = {
      V(0.85, 0.0, 0.20),   V(0.83, 0.03, 0.22),  V(0.83, -0.03, 0.22), V(0.78, 0.07, 0.13),
      V(0.78, -0.07, 0.13), V(0.27, 0.19, 0.12),  V(0.27, -0.19, 0.12), V(0.0, 0.25, 0.08),
      V(0.0, -0.25, 0.08),  V(-0.25, 0.27, 0.06), V(-0.25, -0.27, 0.06), V(-0.27, 0.11, 0.12),
      V(-0.27, -0.11, 0.12), V(-0.70, 0.11, 0.10), V(-0.70, -0.11, 0.10), V(-1.12, 0.11, 0.08),
      V(-1.12, -0.11, 0.08)};
  switch (p) {
    case sim::Posture::Standing: return standing;
    case sim::Posture::Sitting: return sitting;
    case sim::Posture::Laying: return laying;
  }
  return standing;
}

std::array<Eigen::Vector3d, kJointCount> place_skeleton(const sim::PersonAgent& person) {
  const auto& t = skeleton_template(person.posture);
  const double c = std::cos(person.pose.yaw), s = std::sin(person.pose.yaw);
  std::array<Eigen::Vector3d, kJointCount> out;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    out[j] = Eigen::Vector3d(person.pose.x + c * t[j].x() - s * t[j].y(), person.pose.y + s * t[j].x() + c * t[j].y(),
                             t[j].z());
  }
  return out;
}

Detection project_skeleton(const std::array<Eigen::Vector3d, kJointCount>& world_joints, const CameraModel& cam,
                           const CameraPose& pose, double noise_sigma, sim::Rng* rng) {
  const double fx = cam.focal_x(), fy = cam.focal_y();
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  Detection det;
  Eigen::Vector3d torso = Eigen::Vector3d::Zero();
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const Eigen::Vector3d d = world_joints[j] - pose.position;
    const double z = d.dot(pose.forward);
    auto& kp = det.keypoints.joints[j];
    det.depth[j] = z;
    if (j == LeftShoulder || j == RightShoulder || j == LeftHip || j == RightHip) torso += world_joints[j];
    if (z <= 1e-6) continue;
    kp.u = cam.cx + fx * d.dot(pose.right) / z;
    kp.v = cam.cy + fy * d.dot(pose.down) / z;
    if (noise_sigma > 0.0 && rng) {
      kp.u += noise(*rng);
      kp.v += noise(*rng);
    }
    const bool inside = kp.u >= 0.0 && kp.u < cam.width && kp.v >= 0.0 && kp.v < cam.height;
    kp.confidence = inside ? 0.9 : 0.0;
  }
  det.torso_depth = (torso / 4.0 - pose.position).dot(pose.forward);

  double x1 = std::numeric_limits<double>::infinity(), y1 = x1;
  double x2 = -x1, y2 = -x1;
  for (const auto& kp : det.keypoints.joints) {
    if (kp.confidence <= 0.0) continue;
    x1 = std::min(x1, kp.u);
    y1 = std::min(y1, kp.v);
    x2 = std::max(x2, kp.u);
    y2 = std::max(y2, kp.v);
  }
  if (x2 >= x1) {
    const double pad_x = 0.1 * (x2 - x1) + 4.0, pad_y = 0.1 * (y2 - y1) + 4.0;
    det.box = {x1 - pad_x, y1 - pad_y, x2 + pad_x, y2 + pad_y};
  }
  return det;
}

std::vector<Detection> synth_detect(const sim::World& world, const CameraModel& cam, const low::DeviceState& device,
                                    double noise_sigma, sim::Rng& rng) {
  const CameraPose pose = camera_pose(cam, world.robot.pose, device);
  const double half_fov = 0.5 * cam.hfov;
  std::vector<Detection> out;
  for (const auto& person : world.people) {
    const Eigen::Vector3d centre(person.pose.x, person.pose.y, pose.position.z());
    const Eigen::Vector3d d = centre - pose.position;
    const double z = d.dot(pose.forward);
    if (z <= 0.0 || d.head<2>().norm() > cam.max_depth) continue;
    if (std::abs(std::atan2(d.dot(pose.right), z)) > half_fov) continue;
    if (!line_of_sight(world.grid, {pose.position.x(), pose.position.y()}, {person.pose.x, person.pose.y})) continue;
    Detection det = project_skeleton(place_skeleton(person), cam, pose, noise_sigma, &rng);
    const auto confident = std::count_if(det.keypoints.joints.begin(), det.keypoints.joints.end(),
                                         [](const Keypoint& k) { return k.confidence > 0.0; });
    if (confident < 2) continue;
    det.person = person.name;
    out.push_back(std::move(det));
  }
  return out;
}

// --- classification ----------------------------------------------------------------------

namespace {

std::optional<Eigen::Vector2d> mean_of(const Keypoints17& kp, std::initializer_list<std::size_t> joints,
                                       double min_conf) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int n = 0;
  for (auto j : joints) {
    const auto& k = kp.joints[j];
    if (k.confidence < min_conf) continue;
    sum += Eigen::Vector2d(k.u, k.v);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

PoseClass classify_pose(const Keypoints17& kp, const ClassifierParams& p) {
  if (kp.joints.size() != kJointCount) throw std::invalid_argument("expected 17 keypoints");
  std::size_t confident = 0;
  for (const auto& k : kp.joints) {
    if (!(k.confidence >= 0.0 && k.confidence <= 1.0)) throw std::invalid_argument("confidence outside [0, 1]");
    if (k.confidence >= p.min_confidence) ++confident;
  }
  if (confident < p.min_joints) return PoseClass::Unknown;

  auto upper = mean_of(kp, {LeftShoulder, RightShoulder}, p.min_confidence);
  if (!upper) upper = mean_of(kp, {Nose, LeftEye, RightEye, LeftEar, RightEar}, p.min_confidence);
  auto lower = mean_of(kp, {LeftHip, RightHip}, p.min_confidence);
  const auto knees = mean_of(kp, {LeftKnee, RightKnee}, p.min_confidence);
  if (!lower) lower = knees;

  if (!upper || !lower || (*upper - *lower).norm() < 1e-9) {
    // No usable torso: fall back on the joint extent.
    double x1 = 1e300, y1 = 1e300, x2 = -1e300, y2 = -1e300;
    for (const auto& k : kp.joints) {
      if (k.confidence < p.min_confidence) continue;
      x1 = std::min(x1, k.u), x2 = std::max(x2, k.u);
      y1 = std::min(y1, k.v), y2 = std::max(y2, k.v);
    }
    return (x2 - x1) > (y2 - y1) ? PoseClass::Laying : PoseClass::Standing;
  }

  const Eigen::Vector2d torso = *lower - *upper;
  const double angle = std::atan2(std::abs(torso.x()), std::abs(torso.y())) * 180.0 / std::numbers::pi;
  const double split = 0.5 * (p.upright_deg + p.laying_deg);
  if (angle > p.laying_deg || (angle > p.upright_deg && angle > split)) return PoseClass::Laying;

  const auto hips = mean_of(kp, {LeftHip, RightHip}, p.min_confidence);
  if (!hips || !knees) return PoseClass::Standing;
  const double gap = knees->y() - hips->y();
  return gap < p.sit_gap_ratio * torso.norm() ? PoseClass::Sitting : PoseClass::Standing;
}

// --- tracking ----------------------------------------------------------------------------

double iou(const Box& a, const Box& b) {
  const double w = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double h = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  return inter / (area_a + area_b - inter);
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size();
  if (rows == 0) return {};
  const std::size_t cols = cost[0].size();
  for (const auto& r : cost) {
    if (r.size() != cols) throw std::invalid_argument("ragged cost matrix");
  }
  std::vector<int> result(rows, -1);
  if (cols == 0) return result;
  if (rows > cols) {
    std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t[j][i] = cost[i][j];
    const auto col_to_row = solve_assignment(t);
    for (std::size_t j = 0; j < cols; ++j) {
      if (col_to_row[j] >= 0) result[static_cast<std::size_t>(col_to_row[j])] = static_cast<int>(j);
    }
    return result;
  }

  // Shortest augmenting path with potentials; 1-based with a virtual column 0.
  const std::size_t n = rows, m = cols;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) result[p[j] - 1] = static_cast<int>(j - 1);
  }
  return result;
}

Eigen::Vector4d box_to_z(const Box& b) {
  const double w = b[2] - b[0], h = b[3] - b[1];
  return {b[0] + 0.5 * w, b[1] + 0.5 * h, w * h, w / h};
}

Box x_to_box(const Eigen::Matrix<double, 7, 1>& x) {
  const double s = std::max(x(2), 1e-9), r = std::max(x(3), 1e-9);
  const double w = std::sqrt(s * r);
  const double h = s / w;
  return {x(0) - 0.5 * w, x(1) - 0.5 * h, x(0) + 0.5 * w, x(1) + 0.5 * h};
}

Box Track::box() const { return x_to_box(x); }

namespace {

using Mat7 = Eigen::Matrix<double, 7, 7>;
using Mat47 = Eigen::Matrix<double, 4, 7>;

const Mat7& transition() {
  static const Mat7 F = [] {
    Mat7 f = Mat7::Identity();
    f(0, 4) = f(1, 5) = f(2, 6) = 1.0;
    return f;
  }();
  return F;
}

const Mat47& observation() {
  static const Mat47 H = [] {
    Mat47 h = Mat47::Zero();
    h(0, 0) = h(1, 1) = h(2, 2) = h(3, 3) = 1.0;
    return h;
  }();
  return H;
}

Track make_track(int id, const Box& b) {
  Track t;
  t.id = id;
  t.x.setZero();
  t.x.head<4>() = box_to_z(b);
  t.P = Mat7::Identity() * 10.0;
  t.P.block<3, 3>(4, 4) *= 1000.0;
  t.hits = 1;
  return t;
}

void predict(Track& t) {
  if (t.x(2) + t.x(6) <= 0.0) t.x(6) = 0.0;
  Eigen::Matrix<double, 7, 1> q;
  q << 1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001;
  t.x = transition() * t.x;
  t.P = transition() * t.P * transition().transpose();
  t.P.diagonal() += q;
  ++t.age;
  ++t.time_since_update;
}

void correct(Track& t, const Box& b) {
  const Eigen::Vector4d r(1.0, 1.0, 10.0, 10.0);
  const Eigen::Matrix4d S = observation() * t.P * observation().transpose() + Eigen::Matrix4d(r.asDiagonal());
  const Eigen::Matrix<double, 7, 4> K = t.P * observation().transpose() * S.inverse();
  t.x += K * (box_to_z(b) - observation() * t.x);
  t.P = (Mat7::Identity() - K * observation()) * t.P;
  t.time_since_update = 0;
  ++t.hits;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> associate(const std::vector<Box>& detections,
                                                           const std::vector<Box>& predicted, double iou_threshold) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (detections.empty() || predicted.empty()) return pairs;
  std::vector<std::vector<double>> gated(detections.size(), std::vector<double>(predicted.size(), 0.0));
  std::vector<std::vector<double>> cost = gated;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    for (std::size_t t = 0; t < predicted.size(); ++t) {
      const double o = iou(detections[d], predicted[t]);
      gated[d][t] = o >= iou_threshold ? o : 0.0;
      cost[d][t] = -gated[d][t];
    }
  }
  const auto match = solve_assignment(cost);
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (match[d] >= 0 && gated[d][static_cast<std::size_t>(match[d])] > 0.0) {
      pairs.emplace_back(d, static_cast<std::size_t>(match[d]));
    }
  }
  return pairs;
}

void sort_update(TrackerState& state, const std::vector<Box>& detections, const SortParams& params,
                 const std::vector<PoseClass>& classes) {
  for (auto& t : state.tracks) {
    predict(t);
    t.detection.reset();
  }
  std::erase_if(state.tracks, [&](const Track& t) {
    return t.time_since_update > params.max_age || !t.x.allFinite();
  });

  std::vector<Box> predicted;
  predicted.reserve(state.tracks.size());
  for (const auto& t : state.tracks) predicted.push_back(t.box());
  std::vector<char> matched(detections.size(), 0);
  for (auto [d, ti] : associate(detections, predicted, params.iou_threshold)) {
    auto& t = state.tracks[ti];
    correct(t, detections[d]);
    t.detection = d;
    if (d < classes.size()) t.pose_class = classes[d];
    matched[d] = 1;
  }
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (matched[d]) continue;
    Track t = make_track(state.next_id++, detections[d]);
    t.detection = d;
    if (d < classes.size()) t.pose_class = classes[d];
    state.tracks.push_back(std::move(t));
  }
}

std::optional<int> select_target(const std::vector<Track>& tracks, const SortParams& params) {
  // A coasting track may be a ghost of someone whose box just changed shape, so
  // a track matched this frame wins over it.
  const Track* best = nullptr;
  for (const auto& t : tracks) {
    if (!t.confirmed(params)) continue;
    const bool fresh = t.time_since_update == 0;
    if (!best || (fresh && best->time_since_update != 0) ||
        (fresh == (best->time_since_update == 0) && t.id < best->id)) {
      best = &t;
    }
  }
  if (!best) return std::nullopt;
  return best->id;
}

// --- goal projection ---------------------------------------------------------------------

std::optional<std::pair<double, double>> torso_centroid(const Keypoints17& kp, double min_confidence) {
  const auto c = mean_of(kp, {LeftShoulder, RightShoulder, LeftHip, RightHip}, min_confidence);
  if (!c) return std::nullopt;
  return std::pair{c->x(), c->y()};
}

PersonGoal project_goal(const Keypoints17& kp, double depth_at_torso, const CameraModel& cam,
                        const low::DeviceState& device, double stamp) {
  if (!(depth_at_torso > 0.0) || depth_at_torso > cam.max_depth) {
    throw NoGoalError("depth " + std::to_string(depth_at_torso) + " m outside the camera range");
  }
  const auto c = torso_centroid(kp);
  if (!c) throw NoGoalError("no confident torso joints");
  const CameraPose pose = camera_pose(cam, {0.0, 0.0, 0.0}, device);
  const double xc = (c->first - cam.cx) / cam.focal_x() * depth_at_torso;
  const double yc = (c->second - cam.cy) / cam.focal_y() * depth_at_torso;
  const Eigen::Vector3d p = pose.position + xc * pose.right + yc * pose.down + depth_at_torso * pose.forward;
  return {p.x(), p.y(), stamp};
}

// --- fall monitor ------------------------------------------------------------------------

bool FallMonitor::push(PoseClass c, double stamp) {
  const bool laying = c == PoseClass::Laying;
  window_.emplace_back(stamp, laying);
  // Keep samples in (stamp - window, stamp].
  while (!window_.empty() && window_.front().first <= stamp - params_.window - 1e-9) window_.pop_front();

  if (laying) {
    if (!onset_) onset_ = stamp;
    last_laying_ = stamp;
  } else if (onset_ && last_laying_ && stamp - *last_laying_ > params_.clear_after) {
    onset_.reset();
  }

  const auto n = static_cast<double>(window_.size());
  const auto n_laying =
      static_cast<double>(std::count_if(window_.begin(), window_.end(), [](const auto& s) { return s.second; }));
  if (!armed_) {
    if (n_laying < 0.5 * n) armed_ = true;
    return false;
  }
  if (onset_ && stamp - *onset_ >= params_.window - 1e-9 && n_laying >= params_.laying_fraction * n) {
    armed_ = false;
    return true;
  }
  return false;
}

}  // namespace marvin::perc
