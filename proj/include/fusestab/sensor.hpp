#pragma once

// Gyroscope / OIS ingestion and timestamp queries.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/rotmath.hpp"

namespace fusestab {

/// Integer nanoseconds, as recorded in sensor logs.
using Nanos = std::int64_t;

/// Nominal gyro / OIS sampling interval (200 Hz).
inline constexpr Nanos kSensorInterval = 5'000'000;

struct GyroSample {
  Nanos t = 0;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // rad/s
};

struct OisSample {
  Nanos t = 0;
  Eigen::Vector2d o = Eigen::Vector2d::Zero();  // principal-point offset, pixels at f = 1511.8
};

struct FrameMeta {
  int index = 0;
  Nanos t_start = 0;  // exposure centre of the first scanline
  Nanos readout = 0;  // first-to-last scanline delta
  int width = 0;
  int height = 0;

  /// Exposure centre of the middle scanline; the frame's nominal timestamp.
  double t_mid() const { return static_cast<double>(t_start) + 0.5 * static_cast<double>(readout); }
};

/// Exposure time of an integer scanline. Throws InvalidArgument when `row` is out of bounds.
double scanline_time(const FrameMeta& fm, int row);

/// Exposure time of a continuous row coordinate, clamped to [0, height - 1].
double scanline_time_at(const FrameMeta& fm, double y);

/// Time-sorted queues of integrated rotations and OIS offsets.
///
/// Immutable once built except for append_gyro/append_ois, which only extend
/// the queryable range and never change values already queryable.
class SensorTimeline {
 public:
  SensorTimeline() = default;

  /// Builds directly from rotation samples (used by the simulator and tests).
  static SensorTimeline from_rotations(std::vector<Nanos> times, std::vector<Quaternion> rotations,
                                       std::vector<OisSample> ois = {});

  void append_gyro(const GyroSample& s);
  void append_ois(const OisSample& s);

  /// SLERP between the bracketing rotation samples. Throws OutOfRange outside the queue.
  Quaternion query_rotation(double t) const;
  /// Linear interpolation of the OIS offset. Zero everywhere when no OIS was logged.
  Eigen::Vector2d query_ois(double t) const;

  /// Same queries with the time clamped into the covered range.
  Quaternion rotation_clamped(double t) const;

  bool covers(double t) const;
  double first_time() const;
  double last_time() const;
  bool has_ois() const { return !ois_t_.empty(); }

  std::span<const Nanos> rotation_times() const { return rot_t_; }
  std::span<const Quaternion> rotations() const { return rot_; }
  std::span<const Nanos> ois_times() const { return ois_t_; }
  std::span<const Eigen::Vector2d> ois_offsets() const { return ois_; }

  /// Copy with every rotation right-multiplied by `g` (a re-oriented world frame).
  SensorTimeline reoriented(const Quaternion& g) const;

 private:
  Nanos last_gyro_t_ = 0;
  std::vector<Nanos> rot_t_;
  std::vector<Quaternion> rot_;
  std::vector<Nanos> ois_t_;
  std::vector<Eigen::Vector2d> ois_;
};

/// R(t_k) = dq(omega_k, t_k - t_{k-1}) * R(t_{k-1}), R(t_0) = identity.
/// Throws FormatError on fewer than two samples or non-increasing timestamps.
SensorTimeline integrate_gyro(std::span<const GyroSample> samples, std::span<const OisSample> ois = {});

// Text logs: comma-separated, '#' comment lines allowed.
std::vector<GyroSample> read_gyro_log(const std::string& path);
std::vector<OisSample> read_ois_log(const std::string& path);
std::vector<FrameMeta> read_frame_meta(const std::string& path);
std::string format_gyro_log(std::span<const GyroSample> samples);
std::string format_ois_log(std::span<const OisSample> samples);
std::string format_frame_meta(std::span<const FrameMeta> frames);

}  // namespace fusestab
