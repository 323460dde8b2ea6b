#include "fusestab/flow.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fusestab/io.hpp"

namespace fusestab {

FlowField::FlowField(int w, int h, double scale, FlowDirection dir, int index)
    : width(w), height(h), grid_scale(scale), direction(dir), frame_index(index) {
  if (w < 1 || h < 1) throw InvalidArgument("FlowField: dimensions must be >= 1");
  if (!(scale > 0.0)) throw InvalidArgument("FlowField: grid scale must be > 0");
  u = Plane::Zero(h, w);
  v = Plane::Zero(h, w);
  valid = Mask::Constant(h, w, true);
}

std::optional<Eigen::Vector2d> FlowField::sample(const Eigen::Vector2d& pixel) const {
  const double gx = pixel.x() / grid_scale;
  const double gy = pixel.y() / grid_scale;
  if (!(gx >= 0.0 && gy >= 0.0 && gx <= width - 1 && gy <= height - 1)) return std::nullopt;
  const int c0 = std::min(static_cast<int>(gx), std::max(width - 2, 0));
  const int r0 = std::min(static_cast<int>(gy), std::max(height - 2, 0));
  const int c1 = std::min(c0 + 1, width - 1);
  const int r1 = std::min(r0 + 1, height - 1);
  const double ax = gx - c0;
  const double ay = gy - r0;
  const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const int cs[4] = {c0, c1, c0, c1};
  const int rs[4] = {r0, r0, r1, r1};
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (int k = 0; k < 4; ++k) {
    if (w[k] == 0.0) continue;
    if (!valid(rs[k], cs[k])) return std::nullopt;
    acc += w[k] * at(cs[k], rs[k]);
  }
  return acc;
}

namespace {

// OIS difference O(t_dst) - O(t_src) for the node (c, r) of a field whose source
// pixel is `src` and destination `src + disp`.
Eigen::Vector2d ois_delta(const FlowField& f, int c, int r, const Eigen::Vector2d& disp, const SensorTimeline& tl,
                          const FrameMeta& fm_n, const FrameMeta& fm_n1) {
  const Eigen::Vector2d src = f.node_pixel(c, r);
  const Eigen::Vector2d dst = src + disp;
  const bool fwd = f.direction == FlowDirection::Forward;
  const FrameMeta& src_meta = fwd ? fm_n : fm_n1;
  const FrameMeta& dst_meta = fwd ? fm_n1 : fm_n;
  const double t_src = scanline_time_at(src_meta, src.y());
  const double t_dst = scanline_time_at(dst_meta, dst.y());
  return tl.query_ois(t_dst) - tl.query_ois(t_src);
}

}  // namespace

FlowField remove_ois(const FlowField& raw, const SensorTimeline& tl, const FrameMeta& fm_n, const FrameMeta& fm_n1) {
  FlowField out = raw;
  if (!tl.has_ois()) return out;
  for (int r = 0; r < raw.height; ++r) {
    for (int c = 0; c < raw.width; ++c) {
      const Eigen::Vector2d f = raw.at(c, r);
      if (!f.allFinite()) continue;
      const Eigen::Vector2d d = ois_delta(raw, c, r, f, tl, fm_n, fm_n1);
      out.u(r, c) = f.x() - d.x();
      out.v(r, c) = f.y() - d.y();
    }
  }
  return out;
}

FlowField restore_ois(const FlowField& ois_free, const SensorTimeline& tl, const FrameMeta& fm_n,
                      const FrameMeta& fm_n1) {
  FlowField out = ois_free;
  if (!tl.has_ois()) return out;
  // The destination row depends on the raw displacement, which is unknown here;
  // iterate the fixed point raw = free + delta(raw).
  for (int r = 0; r < ois_free.height; ++r) {
    for (int c = 0; c < ois_free.width; ++c) {
      const Eigen::Vector2d f = ois_free.at(c, r);
      if (!f.allFinite()) continue;
      Eigen::Vector2d raw = f;
      for (int it = 0; it < 50; ++it) {
        const Eigen::Vector2d next = f + ois_delta(ois_free, c, r, raw, tl, fm_n, fm_n1);
        const bool done = (next - raw).cwiseAbs().maxCoeff() == 0.0;
        raw = next;
        if (done) break;
      }
      out.u(r, c) = raw.x();
      out.v(r, c) = raw.y();
    }
  }
  return out;
}

FlowField resample(const FlowField& f, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("resample: output dimensions must be >= 1");
  const double sx = out_w > 1 ? static_cast<double>(f.width - 1) / (out_w - 1) : 0.0;
  const double sy = out_h > 1 ? static_cast<double>(f.height - 1) / (out_h - 1) : 0.0;
  // Keep the pixel extent: the new grid spacing covers the old one.
  const double scale = out_w > 1 ? f.grid_scale * sx : (out_h > 1 ? f.grid_scale * sy : f.grid_scale);
  FlowField out(out_w, out_h, scale > 0.0 ? scale : f.grid_scale, f.direction, f.frame_index);
  for (int r = 0; r < out_h; ++r) {
    const double gy = out_h > 1 ? static_cast<double>(r * (f.height - 1)) / (out_h - 1) : 0.0;
    const int r0 = std::min(static_cast<int>(gy), std::max(f.height - 2, 0));
    for (int c = 0; c < out_w; ++c) {
      const double gx = out_w > 1 ? static_cast<double>(c * (f.width - 1)) / (out_w - 1) : 0.0;
      const int c0 = std::min(static_cast<int>(gx), std::max(f.width - 2, 0));
      double wsum = 0.0;
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      for (int rr = r0; rr <= std::min(r0 + 1, f.height - 1); ++rr) {
        const double wy = 1.0 - std::abs(gy - rr);
        if (wy <= 0.0) continue;
        for (int cc = c0; cc <= std::min(c0 + 1, f.width - 1); ++cc) {
          const double wx = 1.0 - std::abs(gx - cc);
          if (wx <= 0.0 || !f.valid(rr, cc)) continue;
          wsum += wx * wy;
          acc += wx * wy * f.at(cc, rr);
        }
      }
      if (wsum > 0.0) {
        out.u(r, c) = acc.x() / wsum;
        out.v(r, c) = acc.y() / wsum;
        out.valid(r, c) = true;
      } else {
        out.u(r, c) = 0.0;
        out.v(r, c) = 0.0;
        out.valid(r, c) = false;
      }
    }
  }
  return out;
}

std::vector<std::vector<Eigen::Vector2d>> chain_trajectories(std::span<const FlowField> forward_flows,
                                                             std::span<const Eigen::Vector2d> seeds) {
  if (seeds.empty()) throw InvalidArgument("chain_trajectories: empty seed set");
  for (std::size_t i = 1; i < forward_flows.size(); ++i) {
    if (forward_flows[i].frame_index != forward_flows[i - 1].frame_index + 1) {
      throw InvalidArgument("chain_trajectories: flows are not consecutive frame pairs");
    }
  }
  std::vector<std::vector<Eigen::Vector2d>> out;
  out.reserve(seeds.size());
  for (const auto& seed : seeds) {
    std::vector<Eigen::Vector2d> traj{seed};
    for (const auto& f : forward_flows) {
      if (f.direction != FlowDirection::Forward) throw InvalidArgument("chain_trajectories: backward flow given");
      const auto d = f.sample(traj.back());
      if (!d) break;
      traj.push_back(traj.back() + *d);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "flow files are little-endian");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos, const std::string& source) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError(source, 0, "truncated flow file");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_flow(const FlowField& f) {
  std::vector<std::uint8_t> out;
  out.reserve(24 + static_cast<std::size_t>(f.width) * f.height * 9);
  for (char ch : {'F', 'V', 'S', 'F'}) out.push_back(static_cast<std::uint8_t>(ch));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.direction));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.frame_index));
  put<float>(out, static_cast<float>(f.grid_scale));
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < f.width; ++c) {
      put<float>(out, static_cast<float>(f.u(r, c)));
      put<float>(out, static_cast<float>(f.v(r, c)));
      out.push_back(f.valid(r, c) ? 1 : 0);
    }
  }
  return out;
}

FlowField decode_flow(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), "FVSF", 4) != 0) throw FormatError(source, 0, "bad flow magic");
  std::size_t pos = 4;
  const auto w = get<std::uint32_t>(bytes, pos, source);
  const auto h = get<std::uint32_t>(bytes, pos, source);
  const auto dir = get<std::uint32_t>(bytes, pos, source);
  const auto index = get<std::uint32_t>(bytes, pos, source);
  const auto scale = get<float>(bytes, pos, source);
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw FormatError(source, 0, "bad flow dimensions");
  if (dir > 1) throw FormatError(source, 0, "bad flow direction");
  if (!(scale > 0.0f)) throw FormatError(source, 0, "bad grid scale");
  if (bytes.size() != 24 + static_cast<std::size_t>(w) * h * 9) throw FormatError(source, 0, "flow body size mismatch");
  FlowField f(static_cast<int>(w), static_cast<int>(h), scale, static_cast<FlowDirection>(dir), static_cast<int>(index));
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < f.width; ++c) {
      f.u(r, c) = get<float>(bytes, pos, source);
      f.v(r, c) = get<float>(bytes, pos, source);
      f.valid(r, c) = get<std::uint8_t>(bytes, pos, source) != 0;
      if (f.valid(r, c) && !(std::isfinite(f.u(r, c)) && std::isfinite(f.v(r, c)))) {
        throw FormatError(source, 0, "non-finite displacement under a valid mask");
      }
    }
  }
  return f;
}

void write_flow_file(const std::string& path, const FlowField& f) {
  const auto bytes = encode_flow(f);
  io::write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

FlowField read_flow_file(const std::string& path) {
  const std::string text = io::read_file(path);
  return decode_flow(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), path);
}

}  // namespace fusestab
