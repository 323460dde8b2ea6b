#pragma once

// Per-scanline warp meshes and backward bilinear rendering.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/pose.hpp"
#include "fusestab/sensor.hpp"

namespace fusestab {

/// 8-bit raster, row-major, channels interleaved.
struct RasterFrame {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  RasterFrame() = default;
  RasterFrame(int w, int h, int c);

  std::uint8_t& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  /// Bilinear sample at a continuous position inside [0, w-1] x [0, h-1].
  double sample(double x, double y, int c) const;
};

// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), maxval 255.
std::vector<std::uint8_t> encode_pnm(const RasterFrame& f);
RasterFrame decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& source = "image");
void write_pnm(const std::string& path, const RasterFrame& f);
RasterFrame read_pnm(const std::string& path);

enum class VertexFlag : std::uint8_t { Inside = 0, Outside = 1, BehindCamera = 2 };

/// Source (real-frame) coordinates for an evenly spaced grid of output pixels.
/// Vertex (c, r) sits at output pixel (c (W-1) / cols, r (H-1) / rows).
struct WarpMesh {
  using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Flags = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int frame_index = 0;
  int width = 0;
  int height = 0;
  int cols = 16;  // cells per axis
  int rows = 12;
  Plane src_x;  // (rows + 1) x (cols + 1)
  Plane src_y;
  Flags flags;

  WarpMesh() = default;
  WarpMesh(int w, int h, int cols, int rows, int index);

  Eigen::Vector2d vertex_pixel(int c, int r) const;
  /// Source coordinate of an output pixel, bilinear inside its cell; false when
  /// the cell has a vertex behind the camera.
  bool source_of(double x, double y, Eigen::Vector2d& src) const;
};

/// Mesh whose every vertex maps to itself.
WarpMesh identity_mesh(int width, int height, int cols, int rows, int index = 0);

/// Real-frame source of each virtual-frame vertex. R_r and O_r are taken at the
/// scanline time of the real row, found by two fixed-point steps seeded with
/// the virtual row.
WarpMesh build_mesh(const FrameMeta& fm, const SensorTimeline& tl, const CameraPose& P_v, const Intrinsics& K,
                    int cols = 16, int rows = 12);

struct RenderResult {
  RasterFrame image;
  std::vector<std::uint8_t> coverage;  // 1 where the source sample lies inside the input frame
};

/// Backward warp with bilinear sampling; uncovered pixels are black.
RenderResult render(const WarpMesh& mesh, const RasterFrame& src);

/// Same sampling without 8-bit quantization (channel-interleaved doubles).
std::vector<double> render_exact(const WarpMesh& mesh, const RasterFrame& src, std::vector<std::uint8_t>* coverage);

double coverage_ratio(const std::vector<std::uint8_t>& mask);

/// Text dump, one vertex per line: `row,col,src_x,src_y,flag`.
std::string format_mesh(const WarpMesh& mesh);

}  // namespace fusestab
