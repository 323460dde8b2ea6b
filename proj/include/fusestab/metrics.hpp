#pragma once

// Stability, distortion, correlation and FOV-ratio scores.

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/rotmath.hpp"
#include "fusestab/warp.hpp"

namespace fusestab {

/// Minimum series length for the stability FFT.
inline constexpr std::size_t kStabilityMinSamples = 64;

/// Unwrapped Z-Y-X Euler angles (yaw, pitch, roll) of a rotation sequence.
std::array<std::vector<double>, 3> euler_series(std::span<const Quaternion> path);

/// Energy in FFT bins 2..6 over energy in bins 2..n/2 (squared magnitudes).
/// 1 when that energy is below 1e-12. Throws DegenerateInput below 64 samples.
double stability_score(std::span<const double> series);

/// Mean stability score of the three Euler series.
double stability(std::span<const Quaternion> path);

/// Mean stability score over the x and y coordinate series of every trajectory
/// with at least 64 points.
double stability_of_trajectories(const std::vector<std::vector<Eigen::Vector2d>>& trajectories);

/// Normalized DLT homography mapping src to dst (least squares, >= 4 points).
/// Exactly identical correspondences return the identity.
Eigen::Matrix3d fit_homography(std::span<const Eigen::Vector2d> src, std::span<const Eigen::Vector2d> dst);

/// Singular-value ratio (min / max) of the affine 2x2 block of H / H(2,2).
double homography_distortion(const Eigen::Matrix3d& H);
/// sqrt(|det|) of the affine 2x2 block of H / H(2,2).
double homography_scale(const Eigen::Matrix3d& H);

double distortion_score(std::span<const Eigen::Matrix3d> H);  // min over frames
double fov_score(std::span<const Eigen::Matrix3d> H);         // mean of min(s, 1/s)

/// Input -> output homography of a warp mesh: vertices whose source lands
/// inside the frame are the correspondences.
Eigen::Matrix3d mesh_homography(const WarpMesh& mesh, int samples_per_axis = 8);

/// Zero-normalized cross-correlation over pixels with mask != 0 (all channels).
/// A zero-variance side gives 1.
double zncc(const std::vector<double>& a, const std::vector<double>& b, const std::vector<std::uint8_t>& mask,
            int channels);

/// ZNCC between the input warped by H and the output, over pixels covered by
/// both. Clamped to [0, 1].
double frame_correlation(const RasterFrame& input, const RasterFrame& output, const Eigen::Matrix3d& H);

struct MetricReport {
  double stability = 0.0;
  double distortion = 0.0;
  double correlation = 0.0;  // NaN when no frames were supplied
  double fov_ratio = 0.0;
  std::array<double, 3> stability_axes{};
  std::vector<double> frame_distortion;
  std::vector<double> frame_fov;
  std::vector<double> frame_correlation;
};

/// Scores a stabilized sequence from its virtual path and per-frame warp
/// homographies, plus input/output frames when available.
MetricReport evaluate_metrics(std::span<const Quaternion> virtual_path, std::span<const Eigen::Matrix3d> H,
                              const std::vector<RasterFrame>* inputs = nullptr,
                              const std::vector<RasterFrame>* outputs = nullptr);

/// `metric,value` lines.
std::string format_report(const MetricReport& r);
/// `frame,distortion,fov_ratio,correlation` lines.
std::string format_metric_series(const MetricReport& r);

}  // namespace fusestab
