#pragma once

// Seeded workloads shared by the unit tests and the acceptance gate.

#include <algorithm>
#include <functional>
#include <numbers>
#include <vector>

#include "marvin/perception.hpp"
#include "support.hpp"

namespace test {

// --- pose classifier samples -------------------------------------------------------------

struct PoseSample {
  marvin::sim::Posture truth;
  marvin::perc::Keypoints17 keypoints;
};

/// Synthetic skeletons in front of the standard camera: 1.8 to 5 m away, within
/// the horizontal field of view with every joint inside the image (a draw that
/// leaves a joint out of frame is redrawn), classes in rotation. Standing and sitting
/// people face any direction; lying people are within 60 degrees of side-on,
/// since a body lying along the optical axis has no 2D cue separating it from
/// a short upright one.
inline std::vector<PoseSample> pose_samples(std::uint64_t seed, std::size_t n, double sigma_px) {
  using namespace marvin;
  const auto cam = perc::CameraModel::standard();
  const low::DeviceState dev{};
  const auto cam_pose = perc::camera_pose(cam, {0, 0, 0}, dev);
  sim::Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PoseSample> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::size_t i = out.size();
    sim::PersonAgent p;
    p.posture = static_cast<sim::Posture>(i % 3);
    const double d = 1.8 + u(rng) * 3.2;
    const double bearing = (u(rng) - 0.5) * 0.9;
    p.pose = {d * std::cos(bearing), d * std::sin(bearing), 0.0};
    if (p.posture == sim::Posture::Laying) {
      const double off = (u(rng) * 2.0 - 1.0) * std::numbers::pi / 3.0;
      p.pose.yaw = bearing + std::numbers::pi / 2.0 + off + (u(rng) < 0.5 ? std::numbers::pi : 0.0);
    } else {
      p.pose.yaw = u(rng) * 2.0 * std::numbers::pi;
    }
    const auto det = perc::project_skeleton(perc::place_skeleton(p), cam, cam_pose, sigma_px, &rng);
    const bool whole = std::all_of(det.keypoints.joints.begin(), det.keypoints.joints.end(),
                                   [](const perc::Keypoint& k) { return k.confidence > 0.0; });
    if (whole) out.push_back({p.posture, det.keypoints});
  }
  return out;
}

inline marvin::perc::PoseClass expected_class(marvin::sim::Posture p) {
  return static_cast<marvin::perc::PoseClass>(static_cast<int>(p));
}

// --- tracking ----------------------------------------------------------------------------

using marvin::perc::Box;

inline Box random_box(Gen& g) {
  const double w = g.uniform(20, 160);
  const double h = g.uniform(40, 320);
  const double x = g.uniform(0, 640 - w);
  const double y = g.uniform(0, 480 - h);
  return {x, y, x + w, y + h};
}

/// A detection/prediction frame with up to five objects each, built so that
/// boxes often overlap: some detections are jittered copies of predictions.
struct AssociationFrame {
  std::vector<Box> detections;
  std::vector<Box> predicted;
};

inline AssociationFrame association_frame(Gen& g) {
  AssociationFrame f;
  const int np = g.integer(0, 5);
  for (int i = 0; i < np; ++i) f.predicted.push_back(random_box(g));
  const int nd = g.integer(0, 5);
  for (int i = 0; i < nd; ++i) {
    if (!f.predicted.empty() && g.coin(0.7)) {
      Box b = f.predicted[g.integer(0, static_cast<int>(f.predicted.size()) - 1)];
      const double s = g.uniform(5, 60);
      for (double& v : b) v += g.uniform(-s, s);
      if (b[2] <= b[0]) std::swap(b[0], b[2]);
      if (b[3] <= b[1]) std::swap(b[1], b[3]);
      b[2] += 1.0;
      b[3] += 1.0;
      f.detections.push_back(b);
    } else {
      f.detections.push_back(random_box(g));
    }
  }
  return f;
}

/// Exhaustive optimum of the gated association objective: the largest total
/// IoU over partial one-to-one matchings, counting only pairs at or above the
/// threshold. Also reports how many matchings reach it.
struct BruteForce {
  double best = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  int optima = 0;
};

inline BruteForce brute_force_association(const std::vector<Box>& det, const std::vector<Box>& pred, double thr) {
  BruteForce r;
  std::vector<int> assign(det.size(), -1);
  std::vector<char> used(pred.size(), 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t d, double total) {
    if (d == det.size()) {
      if (total > r.best + 1e-12) {
        r.best = total;
        r.optima = 1;
        r.pairs.clear();
        for (std::size_t i = 0; i < det.size(); ++i) {
          if (assign[i] >= 0) r.pairs.emplace_back(i, static_cast<std::size_t>(assign[i]));
        }
      } else if (std::abs(total - r.best) <= 1e-12) {
        ++r.optima;
      }
      return;
    }
    assign[d] = -1;
    rec(d + 1, total);
    for (std::size_t t = 0; t < pred.size(); ++t) {
      if (used[t]) continue;
      const double v = marvin::perc::iou(det[d], pred[t]);
      if (v < thr) continue;
      used[t] = 1;
      assign[d] = static_cast<int>(t);
      rec(d + 1, total + v);
      used[t] = 0;
      assign[d] = -1;
    }
  };
  rec(0, 0.0);
  return r;
}

/// Two people walking across the image in opposite directions, one nearer
/// (larger box) than the other, crossing in the middle. Returns per frame the
/// ground-truth boxes in fixed order (0 = left-to-right walker).
inline std::vector<std::vector<Box>> crossing_tracks(int frames = 60) {
  std::vector<std::vector<Box>> out;
  for (int k = 0; k < frames; ++k) {
    const double a = 40.0 + k * 9.0;
    const double b = 560.0 - k * 9.0;
    out.push_back({Box{a, 150, a + 70, 390}, Box{b, 170, b + 60, 380}});
  }
  return out;
}

}  // namespace test
