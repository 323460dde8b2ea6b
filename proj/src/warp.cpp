#include "fusestab/warp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"

namespace fusestab {

namespace {

// Source coordinates this close outside the frame still count as inside
// (interpolation round-off on the identity mesh).
constexpr double kEdgeSlack = 1e-7;

}  // namespace

RasterFrame::RasterFrame(int w, int h, int c) : width(w), height(h), channels(c) {
  if (w < 1 || h < 1) throw InvalidArgument("RasterFrame: dimensions must be >= 1");
  if (c != 1 && c != 3) throw InvalidArgument("RasterFrame: channels must be 1 or 3");
  data.assign(static_cast<std::size_t>(w) * h * c, 0);
}

double RasterFrame::sample(double x, double y, int c) const {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, std::max(width - 2, 0));
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, std::max(height - 2, 0));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double ax = std::clamp(x - x0, 0.0, 1.0);
  const double ay = std::clamp(y - y0, 0.0, 1.0);
  const double top = (1 - ax) * at(x0, y0, c) + ax * at(x1, y0, c);
  const double bot = (1 - ax) * at(x0, y1, c) + ax * at(x1, y1, c);
  return (1 - ay) * top + ay * bot;
}

std::vector<std::uint8_t> encode_pnm(const RasterFrame& f) {
  const std::string header =
      std::string(f.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(f.width) + " " + std::to_string(f.height) +
      "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), f.data.begin(), f.data.end());
  return out;
}

RasterFrame decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  std::size_t pos = 0;
  int line = 1;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) {
        if (bytes[pos] == '\n') ++line;
        ++pos;
      }
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (t.empty()) throw FormatError(source, line, "truncated PNM header");
    return t;
  };
  auto number = [&](const char* what) {
    const std::string t = token();
    int v = 0;
    try {
      v = std::stoi(t);
    } catch (const std::exception&) {
      throw FormatError(source, line, std::string("bad PNM ") + what + " '" + t + "'");
    }
    return v;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw FormatError(source, line, "expected P5 or P6, got '" + magic + "'");
  const int w = number("width");
  const int h = number("height");
  const int maxval = number("maxval");
  if (w < 1 || h < 1) throw FormatError(source, line, "non-positive PNM dimensions");
  if (maxval != 255) throw FormatError(source, line, "only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  RasterFrame f(w, h, magic == "P6" ? 3 : 1);
  if (bytes.size() < pos + f.data.size()) throw FormatError(source, line, "truncated PNM raster");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), f.data.size(), f.data.begin());
  return f;
}

void write_pnm(const std::string& path, const RasterFrame& f) {
  const auto bytes = encode_pnm(f);
  io::write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RasterFrame read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open image '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes, path);
}

WarpMesh::WarpMesh(int w, int h, int c, int r, int index)
    : frame_index(index), width(w), height(h), cols(c), rows(r) {
  if (w < 2 || h < 2) throw InvalidArgument("WarpMesh: frame must be at least 2x2");
  if (c < 1 || r < 1) throw InvalidArgument("WarpMesh: need at least one cell per axis");
  src_x = Plane::Zero(r + 1, c + 1);
  src_y = Plane::Zero(r + 1, c + 1);
  flags = Flags::Zero(r + 1, c + 1);
}

Eigen::Vector2d WarpMesh::vertex_pixel(int c, int r) const {
  return {static_cast<double>(c) * (width - 1) / cols, static_cast<double>(r) * (height - 1) / rows};
}

bool WarpMesh::source_of(double x, double y, Eigen::Vector2d& src) const {
  const double cw = static_cast<double>(width - 1) / cols;
  const double ch = static_cast<double>(height - 1) / rows;
  const int c = std::clamp(static_cast<int>(x / cw), 0, cols - 1);
  const int r = std::clamp(static_cast<int>(y / ch), 0, rows - 1);
  const auto behind = static_cast<std::uint8_t>(VertexFlag::BehindCamera);
  if (flags(r, c) == behind || flags(r, c + 1) == behind || flags(r + 1, c) == behind ||
      flags(r + 1, c + 1) == behind) {
    return false;
  }
  const double ax = x / cw - c;
  const double ay = y / ch - r;
  auto lerp2 = [&](const Plane& p) {
    const double top = (1 - ax) * p(r, c) + ax * p(r, c + 1);
    const double bot = (1 - ax) * p(r + 1, c) + ax * p(r + 1, c + 1);
    return (1 - ay) * top + ay * bot;
  };
  src = {lerp2(src_x), lerp2(src_y)};
  return true;
}

WarpMesh identity_mesh(int width, int height, int cols, int rows, int index) {
  WarpMesh m(width, height, cols, rows, index);
  for (int r = 0; r <= rows; ++r) {
    for (int c = 0; c <= cols; ++c) {
      const Eigen::Vector2d p = m.vertex_pixel(c, r);
      m.src_x(r, c) = p.x();
      m.src_y(r, c) = p.y();
    }
  }
  return m;
}

WarpMesh build_mesh(const FrameMeta& fm, const SensorTimeline& tl, const CameraPose& P_v, const Intrinsics& K,
                    int cols, int rows) {
  WarpMesh m(fm.width, fm.height, cols, rows, fm.index);
  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
  for (int r = 0; r <= rows; ++r) {
    for (int c = 0; c <= cols; ++c) {
      const Eigen::Vector2d xv = m.vertex_pixel(c, r);
      double row = xv.y();
      std::optional<Eigen::Vector2d> src;
      for (int it = 0; it < 3; ++it) {
        const double t = scanline_time_at(fm, row);
        src = virtual_to_real<double>(xv, tl.query_rotation(t), tl.query_ois(t), P_v.R, zero, K);
        if (!src) break;
        row = src->y();
      }
      if (!src) {
        m.src_x(r, c) = -1.0;
        m.src_y(r, c) = -1.0;
        m.flags(r, c) = static_cast<std::uint8_t>(VertexFlag::BehindCamera);
        continue;
      }
      m.src_x(r, c) = src->x();
      m.src_y(r, c) = src->y();
      const bool inside = src->x() >= -kEdgeSlack && src->x() <= fm.width - 1 + kEdgeSlack && src->y() >= -kEdgeSlack &&
                          src->y() <= fm.height - 1 + kEdgeSlack;
      m.flags(r, c) = static_cast<std::uint8_t>(inside ? VertexFlag::Inside : VertexFlag::Outside);
    }
  }
  return m;
}

std::vector<double> render_exact(const WarpMesh& mesh, const RasterFrame& src, std::vector<std::uint8_t>* coverage) {
  if (mesh.width != src.width || mesh.height != src.height) {
    throw InvalidArgument("render: mesh is " + std::to_string(mesh.width) + "x" + std::to_string(mesh.height) +
                          " but the frame is " + std::to_string(src.width) + "x" + std::to_string(src.height));
  }
  const int W = src.width, H = src.height, C = src.channels;
  std::vector<double> out(static_cast<std::size_t>(W) * H * C, 0.0);
  if (coverage) coverage->assign(static_cast<std::size_t>(W) * H, 0);
  Eigen::Vector2d s;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!mesh.source_of(x, y, s)) continue;
      if (s.x() < -kEdgeSlack || s.y() < -kEdgeSlack || s.x() > W - 1 + kEdgeSlack || s.y() > H - 1 + kEdgeSlack) {
        continue;
      }
      const double sx = std::clamp(s.x(), 0.0, W - 1.0);
      const double sy = std::clamp(s.y(), 0.0, H - 1.0);
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      for (int c = 0; c < C; ++c) out[i * C + c] = src.sample(sx, sy, c);
      if (coverage) (*coverage)[i] = 1;
    }
  }
  return out;
}

RenderResult render(const WarpMesh& mesh, const RasterFrame& src) {
  RenderResult res;
  const auto exact = render_exact(mesh, src, &res.coverage);
  res.image = RasterFrame(src.width, src.height, src.channels);
  for (std::size_t i = 0; i < exact.size(); ++i) {
    res.image.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(exact[i], 0.0, 255.0)));
  }
  return res;
}

double coverage_ratio(const std::vector<std::uint8_t>& mask) {
  if (mask.empty()) return 0.0;
  std::size_t n = 0;
  for (auto v : mask) n += v ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

std::string format_mesh(const WarpMesh& mesh) {
  std::string s = "# row,col,src_x,src_y,flag\n";
  for (int r = 0; r <= mesh.rows; ++r) {
    for (int c = 0; c <= mesh.cols; ++c) {
      s += std::to_string(r) + "," + std::to_string(c) + "," + io::fmt(mesh.src_x(r, c)) + "," +
           io::fmt(mesh.src_y(r, c)) + "," + std::to_string(static_cast<int>(mesh.flags(r, c))) + "\n";
    }
  }
  return s;
}

}  // namespace fusestab
