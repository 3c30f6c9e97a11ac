#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "marvin/grid.hpp"
#include "marvin/kinematics.hpp"
#include "marvin/lowlayer.hpp"
#include "marvin/worldsim.hpp"

namespace marvin::perc {

inline constexpr std::size_t kJointCount = 17;

// COCO keypoint order.
enum Joint : std::size_t {
  Nose, LeftEye, RightEye, LeftEar, RightEar,
  LeftShoulder, RightShoulder, LeftElbow, RightElbow, LeftWrist, RightWrist,
  LeftHip, RightHip, LeftKnee, RightKnee, LeftAnkle, RightAnkle
};
std::string_view joint_name(std::size_t j);

struct Keypoint {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
};

struct Keypoints17 {
  std::vector<Keypoint> joints = std::vector<Keypoint>(kJointCount);
};

enum class PoseClass { Standing, Sitting, Laying, Unknown };
std::string_view to_string(PoseClass c);
PoseClass pose_class_from_string(std::string_view s);

/// Pinhole camera riding on the positioning device. Camera frame: x right, y down, z forward.
struct CameraModel {
  double hfov = 70.0 * 3.14159265358979323846 / 180.0;
  int width = 640;
  int height = 480;
  double fx = 0.0;  // derived from hfov when left at 0
  double fy = 0.0;
  double cx = 320.0;
  double cy = 240.0;
  double max_depth = 6.0;
  double mount_x = 0.0;         // forward offset from the robot centre
  double mount_height = 0.9;    // with the device fully retracted
  double pitch = 0.0;           // extra downward pitch, rad

  static CameraModel standard();
  /// Fills fx/fy from the FOV when unset and checks consistency.
  void validate() const;
  double focal_x() const;
  double focal_y() const;
};

/// Camera placement in the world for a given robot pose and device state.
struct CameraPose {
  Eigen::Vector3d position;
  Eigen::Vector3d forward;  // optical axis
  Eigen::Vector3d right;
  Eigen::Vector3d down;
};
CameraPose camera_pose(const CameraModel& cam, const kin::Pose2D& robot, const low::DeviceState& device);

/// Joint positions of a posture template in the body frame (x forward, y left, z up),
/// arranged so the torso centroid sits above the origin.
const std::array<Eigen::Vector3d, kJointCount>& skeleton_template(sim::Posture p);

struct Detection {
  Keypoints17 keypoints;
  std::array<double, kJointCount> depth{};  // camera z of each joint
  std::array<double, 4> box{};               // x1, y1, x2, y2
  double torso_depth = 0.0;
  std::string person;  // ground-truth agent name, for tests and logs only
};

/// Projects a 3D skeleton into the image. Joints outside the image or behind
/// the camera get confidence 0.
Detection project_skeleton(const std::array<Eigen::Vector3d, kJointCount>& world_joints, const CameraModel& cam,
                           const CameraPose& pose, double noise_sigma, sim::Rng* rng);

/// World joint positions of an agent.
std::array<Eigen::Vector3d, kJointCount> place_skeleton(const sim::PersonAgent& person);

/// Simulated keypoint detector: every agent within FOV and range with a clear
/// line of sight on the grid, projected with Gaussian pixel noise.
std::vector<Detection> synth_detect(const sim::World& world, const CameraModel& cam, const low::DeviceState& device,
                                    double noise_sigma, sim::Rng& rng);

struct ClassifierParams {
  double min_confidence = 0.3;
  std::size_t min_joints = 6;
  double upright_deg = 30.0;
  double laying_deg = 60.0;
  double sit_gap_ratio = 0.45;  // hip-knee vertical gap over torso length
};
PoseClass classify_pose(const Keypoints17& kp, const ClassifierParams& params = {});

// --- tracking --------------------------------------------------------------------------

using Box = std::array<double, 4>;
double iou(const Box& a, const Box& b);

/// Minimum-cost assignment of rows to columns for a rectangular matrix.
/// Returns, for each row, the assigned column or -1.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

struct SortParams {
  double iou_threshold = 0.3;
  int max_age = 5;
  int min_hits = 3;
};

struct Track {
  int id = 0;
  Eigen::Matrix<double, 7, 1> x;  // u, v, s, r, du, dv, ds
  Eigen::Matrix<double, 7, 7> P;
  int hits = 0;
  int age = 0;
  int time_since_update = 0;
  PoseClass pose_class = PoseClass::Unknown;
  std::optional<std::size_t> detection;  // index into the frame's detections when updated this frame

  Box box() const;
  bool confirmed(const SortParams& p) const { return hits >= p.min_hits; }
};

Eigen::Vector4d box_to_z(const Box& b);
Box x_to_box(const Eigen::Matrix<double, 7, 1>& x);

struct TrackerState {
  std::vector<Track> tracks;
  int next_id = 1;
};

/// Gated association: IoU below the threshold counts as zero, total IoU is
/// maximized, and only positive pairs are kept. Returns (detection, track) pairs.
std::vector<std::pair<std::size_t, std::size_t>> associate(const std::vector<Box>& detections,
                                                           const std::vector<Box>& predicted, double iou_threshold);

/// One SORT frame. Tracks unseen for more than max_age frames are dropped
/// after prediction, before association.
void sort_update(TrackerState& state, const std::vector<Box>& detections, const SortParams& params = {},
                 const std::vector<PoseClass>& classes = {});

/// Lowest-id confirmed track, preferring tracks matched in the current frame.
std::optional<int> select_target(const std::vector<Track>& tracks, const SortParams& params = {});

struct PersonGoal {
  double x = 0.0;  // robot frame
  double y = 0.0;
  double stamp = 0.0;
};

/// Torso centroid pixel from the confident shoulders and hips.
std::optional<std::pair<double, double>> torso_centroid(const Keypoints17& kp, double min_confidence = 0.3);

/// Back-projects the torso centroid at the given depth into the robot frame.
/// Throws NoGoalError on a depth outside (0, max_depth] or a missing torso.
PersonGoal project_goal(const Keypoints17& kp, double depth_at_torso, const CameraModel& cam,
                        const low::DeviceState& device, double stamp = 0.0);

// --- fall monitor ----------------------------------------------------------------------

struct FallMonitorParams {
  double window = 10.0;
  double laying_fraction = 0.8;
  double clear_after = 2.0;  // continuous non-laying time that ends an episode
};

/// Alarms on a persisting Laying classification: the episode must have lasted
/// a full window and the window must be mostly Laying.
class FallMonitor {
 public:
  explicit FallMonitor(FallMonitorParams params = {}) : params_(params) {}

  /// Returns true exactly once per episode, on the sample that raises the alarm.
  bool push(PoseClass c, double stamp);
  bool armed() const { return armed_; }
  std::optional<double> onset() const { return onset_; }

 private:
  FallMonitorParams params_;
  std::deque<std::pair<double, bool>> window_;
  std::optional<double> onset_;
  std::optional<double> last_laying_;
  bool armed_ = true;
};

}  // namespace marvin::perc
