#pragma once

// Camera pose model, real <-> virtual projection and relative motion histories.

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/rotmath.hpp"
#include "fusestab/sensor.hpp"

namespace fusestab {

/// Focal length shared by the real and virtual cameras, in pixels.
inline constexpr double kFocalLength = 1511.8;

struct Intrinsics {
  double f = kFocalLength;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Principal point at the frame centre (pixel-centre convention).
  static Intrinsics for_frame(int width, int height, double f = kFocalLength) {
    if (!(f > 0.0)) throw InvalidArgument("Intrinsics: focal length must be > 0");
    return Intrinsics{f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
  }
};

/// P = (R, O). R maps world rays into the camera frame (x = K R X); O shifts the
/// principal point. Virtual poses always carry O = 0.
struct CameraPose {
  Quaternion R = Quaternion::Identity();
  Eigen::Vector2d O = Eigen::Vector2d::Zero();
};

/// Ray K^-1 x for a camera whose principal point is shifted by `offset`.
template <typename S>
Vec3<S> back_project(const Vec2<S>& x, const Vec2<S>& offset, const Intrinsics& K) {
  return Vec3<S>((x.x() - offset.x() - K.cx) / K.f, (x.y() - offset.y() - K.cy) / K.f, S(1.0));
}

/// Perspective projection; empty when the ray is not in front of the camera.
template <typename S>
std::optional<Vec2<S>> project(const Vec3<S>& p, const Vec2<S>& offset, const Intrinsics& K) {
  if (!(value_of(p.z()) > 0.0)) return std::nullopt;
  return Vec2<S>(K.f * p.x() / p.z() + K.cx + offset.x(), K.f * p.y() / p.z() + K.cy + offset.y());
}

/// x_v = K_v R_v R_r^-1 K_r^-1 x_r.
template <typename S>
std::optional<Vec2<S>> real_to_virtual(const Vec2<S>& x_r, const Quat<S>& Rr, const Vec2<S>& Or, const Quat<S>& Rv,
                                       const Vec2<S>& Ov, const Intrinsics& K) {
  const Vec3<S> ray = rotate(Quat<S>(Rr.conjugate()), back_project(x_r, Or, K));
  return project(rotate(Rv, ray), Ov, K);
}

/// x_r = K_r R_r R_v^-1 K_v^-1 x_v.
template <typename S>
std::optional<Vec2<S>> virtual_to_real(const Vec2<S>& x_v, const Quat<S>& Rr, const Vec2<S>& Or, const Quat<S>& Rv,
                                       const Vec2<S>& Ov, const Intrinsics& K) {
  const Vec3<S> ray = rotate(Quat<S>(Rv.conjugate()), back_project(x_v, Ov, K));
  return project(rotate(Rr, ray), Or, K);
}

/// Throws BehindCamera when the point does not land in front of the virtual camera.
Eigen::Vector2d project_real_to_virtual(const Eigen::Vector2d& x_r, const CameraPose& P_r, const CameraPose& P_v,
                                        const Intrinsics& K);
Eigen::Vector2d project_virtual_to_real(const Eigen::Vector2d& x_v, const CameraPose& P_r, const CameraPose& P_v,
                                        const Intrinsics& K);

/// Real pose of a frame scanline: rotation and OIS offset at time t.
CameraPose real_pose_at(const SensorTimeline& tl, double t);

/// Where a time falls in a frame-indexed pose queue. Index -1 denotes the seed
/// pose that fills the queue before the first frame.
struct QueueLookup {
  int a = -1;
  int b = -1;
  double u = 0.0;
};

/// Lookup over the first `available` entries of `times`: t before times[0] maps
/// to the seed, t after the last available entry clamps to it.
QueueLookup lookup_queue(std::span<const double> times, std::size_t available, double t);

/// Per-frame virtual camera path plus the seed pose that precedes it.
struct VirtualPath {
  std::vector<double> times;  // frame timestamps, ns
  std::vector<Quaternion> rotations;
  Quaternion seed = Quaternion::Identity();
  std::string backend;

  std::size_t size() const { return rotations.size(); }
  CameraPose pose(std::size_t i) const { return CameraPose{rotations[i], Eigen::Vector2d::Zero()}; }

  /// Rotation at time t using only the first `available` frames (SLERP between frames).
  Quaternion at(double t, std::size_t available) const;
  Quaternion at(double t) const { return at(t, rotations.size()); }
};

struct HistoryParams {
  int N = 10;               // look-back / look-ahead steps
  double step_ns = 40e6;    // history spacing, independent of frame rate
};

/// H_r: 2N + 1 real rotations at t + k * step (k = -N..N), H_v: N virtual
/// rotations at t - k * step (k = N..1), both right-multiplied by R_r(t)^-1.
struct MotionHistory {
  std::vector<Quaternion> real;
  std::vector<Quaternion> virt;
};

/// Builds the relative histories at time t from the first `available` virtual
/// frames. With `clamp_sensor`, history times outside the gyro queue clamp to its
/// ends instead of throwing OutOfRange. Real history times past `horizon` (the
/// newest sensor time a streaming caller has seen) are held at the horizon.
MotionHistory build_history(const SensorTimeline& tl, const VirtualPath& vpath, double t, const HistoryParams& hp,
                            std::size_t available, bool clamp_sensor = false,
                            double horizon = std::numeric_limits<double>::infinity());
MotionHistory build_history(const SensorTimeline& tl, const VirtualPath& vpath, double t, const HistoryParams& hp);

// Path file: one line per frame, `frame_index,t_ns,qw,qx,qy,qz,ox,oy`.
struct PathRecord {
  int frame = 0;
  double t = 0.0;
  CameraPose pose;
};
std::string format_path(std::span<const PathRecord> records);
std::vector<PathRecord> read_path_file(const std::string& path);

}  // namespace fusestab
