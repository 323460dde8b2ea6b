#pragma once

// Synthetic handheld captures with exact ground truth: rotation-only camera
// motion over a textured scene at infinity, gyro / OIS logs, rolling-shutter
// frames and closed-form optical flow.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/flow.hpp"
#include "fusestab/pose.hpp"
#include "fusestab/sensor.hpp"
#include "fusestab/warp.hpp"

namespace fusestab {

enum class BasePath { Constant, Panning, Keyframes };

struct Keyframe {
  double t = 0.0;                                      // seconds from the first frame
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();  // rotation vector, radians
};

/// Seeded sum of random-phase sinusoids with frequencies drawn in a band.
struct BandNoise {
  double amplitude = 0.0;  // RMS of the whole signal (all axes together)
  double low_hz = 2.0;
  double high_hz = 8.0;
  int components = 8;  // sinusoids per axis
};

struct ShakeSpec {
  BasePath base = BasePath::Constant;
  double pan_rate_deg = 0.0;                      // deg/s, panning base
  Eigen::Vector3d pan_axis = Eigen::Vector3d::UnitY();
  std::vector<Keyframe> keyframes;                // keyframe base, SLERP between them
  BandNoise shake{0.0, 2.0, 8.0, 8};              // amplitude in degrees
  BandNoise ois{0.0, 0.5, 4.0, 4};                // amplitude in pixels
  int width = 640;
  int height = 480;
  double fps = 30.0;
  int frames = 240;
  double readout_ms = 25.0;
  double padding_s = 0.5;  // sensor coverage before the first and after the last frame
  std::uint64_t seed = 1;

  void validate() const;
  double duration_s() const { return frames / fps; }
};

/// The generated path as functions of time (seconds since the sensor start).
class CaptureModel {
 public:
  explicit CaptureModel(const ShakeSpec& spec);

  /// Smooth base rotation (world -> camera) in the same world frame as rotation().
  Quaternion base_rotation(double t) const;
  /// Base composed with shake, anchored to identity at the sensor start.
  Quaternion rotation(double t) const;
  Eigen::Vector2d ois(double t) const;

  const ShakeSpec& spec() const { return spec_; }

 private:
  struct Tone {
    double freq, phase, amp;
  };
  Quaternion raw_base(double t) const;
  Quaternion raw_rotation(double t) const;

  ShakeSpec spec_;
  std::vector<Tone> shake_[3];
  std::vector<Tone> ois_[2];
  Quaternion anchor_inv_ = Quaternion::Identity();  // raw_rotation(0)^-1, shared by both paths
};

struct Capture {
  ShakeSpec spec;
  std::vector<GyroSample> gyro;
  std::vector<OisSample> ois;
  std::vector<FrameMeta> frames;
  SensorTimeline timeline;  // integrate_gyro of the logs: the capture's true motion
  std::vector<Quaternion> truth;       // ground-truth rotation at every gyro sample
  std::vector<PathRecord> real_path;   // per frame at t_mid
  std::vector<PathRecord> base_path;   // smooth base per frame at t_mid
};

/// Gyro samples are the exact finite-difference angular velocities of the
/// sampled path, so integrate_gyro reproduces it up to round-off.
Capture generate_capture(const ShakeSpec& spec);

struct AnalyticFlow {
  FlowField raw;       // as a flow estimator would see it (OIS in both endpoints)
  FlowField ois_free;  // camera-only motion of the same rays at the same instants
};

/// Where pixel `x` of frame `src` lands in frame `dst`: the ray seen at x's
/// scanline time, projected at the destination row's own scanline time.
/// Empty when the ray ends up behind the camera.
std::optional<Eigen::Vector2d> analytic_target(const SensorTimeline& tl, const FrameMeta& src, const FrameMeta& dst,
                                               const Intrinsics& K, const Eigen::Vector2d& x);

/// Closed-form flow for the pair (fm_n, fm_n1) on a grid of spacing `scale`
/// covering the frame. Each endpoint uses the rotation and OIS offset of its own
/// scanline time; the destination row is solved by fixed-point iteration.
AnalyticFlow analytic_flow(const SensorTimeline& tl, const FrameMeta& fm_n, const FrameMeta& fm_n1,
                           const Intrinsics& K, double scale, FlowDirection dir);

/// Intensity of the procedural scene along a world ray (smooth, ~0.04 rad wavelength).
double scene_intensity(const Eigen::Vector3d& ray, int channel = 0);

/// Rolling-shutter render: every row uses the pose at its own scanline time.
RasterFrame render_synthetic_frame(const SensorTimeline& tl, const FrameMeta& fm, const Intrinsics& K,
                                   int channels = 1);

/// Global-shutter render from a fixed pose.
RasterFrame render_reference(const CameraPose& pose, const Intrinsics& K, int channels = 1);

}  // namespace fusestab
