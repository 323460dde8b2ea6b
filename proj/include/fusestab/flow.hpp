#pragma once

// Dense optical flow between adjacent frames and its OIS-free form.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/sensor.hpp"

namespace fusestab {

enum class FlowDirection : std::uint32_t { Forward = 0, Backward = 1 };

/// Displacement grid for the frame pair (n, n + 1).
///
/// Grid node (c, r) sits at frame pixel (c * grid_scale, r * grid_scale);
/// displacements are always in full-resolution pixels. A forward field lives
/// on frame n and points into n + 1; a backward field lives on n + 1.
struct FlowField {
  using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int width = 0;
  int height = 0;
  double grid_scale = 1.0;
  FlowDirection direction = FlowDirection::Forward;
  int frame_index = 0;  // n of the pair (n, n + 1)
  Plane u;
  Plane v;
  Mask valid;

  FlowField() = default;
  FlowField(int w, int h, double scale, FlowDirection dir, int index);

  Eigen::Vector2d node_pixel(int c, int r) const { return {c * grid_scale, r * grid_scale}; }
  Eigen::Vector2d at(int c, int r) const { return {u(r, c), v(r, c)}; }

  /// Bilinear lookup at a frame-pixel position. Empty when the position is
  /// off-grid or any contributing node is invalid.
  std::optional<Eigen::Vector2d> sample(const Eigen::Vector2d& pixel) const;
};

/// Subtracts the per-scanline OIS motion from a raw flow field.
/// `fm_n` / `fm_n1` are the metadata of frames n and n + 1.
FlowField remove_ois(const FlowField& raw, const SensorTimeline& tl, const FrameMeta& fm_n, const FrameMeta& fm_n1);

/// Exact inverse of remove_ois (adds the same OIS differences back).
FlowField restore_ois(const FlowField& ois_free, const SensorTimeline& tl, const FrameMeta& fm_n,
                      const FrameMeta& fm_n1);

/// Bilinear (tent-weighted) average of valid samples onto an out_w x out_h grid
/// spanning the same pixel extent.
FlowField resample(const FlowField& f, int out_w, int out_h);

/// p_{n+1} = p_n + F_{n->n+1}(p_n). A trajectory stops at the first frame
/// where the lookup leaves the valid region.
std::vector<std::vector<Eigen::Vector2d>> chain_trajectories(std::span<const FlowField> forward_flows,
                                                             std::span<const Eigen::Vector2d> seeds);

// Binary flow file: "FVSF", u32 width, u32 height, u32 direction, u32 frame_index,
// f32 grid_scale, then height * width records of (f32 u, f32 v, u8 valid), little-endian.
std::vector<std::uint8_t> encode_flow(const FlowField& f);
FlowField decode_flow(std::span<const std::uint8_t> bytes, const std::string& source = "flow");
void write_flow_file(const std::string& path, const FlowField& f);
FlowField read_flow_file(const std::string& path);

}  // namespace fusestab
