#include "fusestab/losses.hpp"

#include <algorithm>
#include <set>

#include "fusestab/io.hpp"

namespace fusestab {

LossWeights LossWeights::for_stage(int stage) const {
  if (stage < 1 || stage > 3) throw InvalidArgument("training stage must be 1, 2 or 3");
  LossWeights w = *this;
  if (stage < 2) w.p = 0.0;
  if (stage < 3) w.f = 0.0;
  return w;
}

void ProtrusionParams::validate() const {
  if (!(gamma >= 0.0 && gamma < beta && beta < 0.5)) throw InvalidArgument("protrusion: need 0 <= gamma < beta < 0.5");
  if (!(alpha > 0.0)) throw InvalidArgument("protrusion: alpha must be > 0");
  if (N < 0) throw InvalidArgument("protrusion: N must be >= 0");
  if (!(sigma > 0.0)) throw InvalidArgument("protrusion: sigma must be > 0");
}

void DistortionParams::validate() const {
  if (!(beta1 > 0.0)) throw InvalidArgument("distortion: beta1 must be > 0");
}

std::string format_loss_line(int frame, const LossBreakdown& b, const LossWeights& w) {
  return std::to_string(frame) + "," + io::fmt(b.c0) + "," + io::fmt(b.c1) + "," + io::fmt(b.p) + "," +
         io::fmt(b.d) + "," + io::fmt(b.f) + "," + io::fmt(b.total(w));
}

std::vector<double> protrusion_weights(double sigma, int count) {
  std::vector<double> w(static_cast<std::size_t>(std::max(count, 0)));
  double sum = 0.0;
  for (int i = 0; i < count; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<Eigen::Vector2i> flow_sample_nodes(const FlowField& f, int grid) {
  if (grid < 1) throw InvalidArgument("flow loss grid must be >= 1");
  auto axis = [grid](int n) {
    std::set<int> idx;
    if (grid == 1 || n == 1) {
      idx.insert((n - 1) / 2);
    } else {
      for (int k = 0; k < grid; ++k) {
        idx.insert(static_cast<int>(std::lround(static_cast<double>(k) * (n - 1) / (grid - 1))));
      }
    }
    return std::vector<int>(idx.begin(), idx.end());
  };
  std::vector<Eigen::Vector2i> nodes;
  for (int r : axis(f.height)) {
    for (int c : axis(f.width)) nodes.emplace_back(c, r);
  }
  return nodes;
}

double loss_flow(const PixelTransform& T_n, const PixelTransform& T_n1, const FlowField& fwd, const FlowField& bwd,
                 int width, int height, const FlowLossOptions& opt) {
  auto inside = [&](const Eigen::Vector2d& p) { return p.x() >= 0.0 && p.x() < width && p.y() >= 0.0 && p.y() < height; };
  auto direction_mean = [&](const FlowField& f, const PixelTransform& Ta, const PixelTransform& Tb, int& count) {
    double acc = 0.0;
    count = 0;
    for (const auto& node : flow_sample_nodes(f, opt.grid)) {
      if (!f.valid(node.y(), node.x())) continue;
      const Eigen::Vector2d x = f.node_pixel(node.x(), node.y());
      const auto a = Ta(x);
      if (!a || !inside(*a)) continue;
      const auto b = Tb(x + f.at(node.x(), node.y()));
      if (!b || !inside(*b)) continue;
      acc += (*a - *b).squaredNorm();
      ++count;
    }
    return count > 0 ? acc / count : 0.0;
  };
  int nf = 0, nb = 0;
  const double lf = direction_mean(fwd, T_n, T_n1, nf);
  const double lb = direction_mean(bwd, T_n1, T_n, nb);
  if (nf == 0 && nb == 0) throw DegenerateInput("loss_flow: no valid samples in either direction");
  return lf + lb;
}

namespace {

Eigen::Vector3d world_ray(const Eigen::Vector2d& x, const FrameMeta& fm, const SensorTimeline& tl, const Intrinsics& K) {
  const double t = scanline_time_at(fm, x.y());
  const Quaternion R = tl.query_rotation(t);
  const Eigen::Vector2d O = tl.query_ois(t);
  return rotate<double>(R.conjugate(), back_project<double>(x, O, K));
}

}  // namespace

FlowPairSamples prepare_flow_pair(const FlowField& fwd, const FlowField& bwd, const SensorTimeline& tl,
                                  const FrameMeta& fm_n, const FrameMeta& fm_n1, const Intrinsics& K,
                                  const FlowLossOptions& opt) {
  if (fwd.direction != FlowDirection::Forward || bwd.direction != FlowDirection::Backward) {
    throw InvalidArgument("prepare_flow_pair: expected a forward and a backward field");
  }
  FlowPairSamples s;
  s.K = K;
  for (const auto& node : flow_sample_nodes(fwd, opt.grid)) {
    if (!fwd.valid(node.y(), node.x())) continue;
    const Eigen::Vector2d x = fwd.node_pixel(node.x(), node.y());
    s.fwd_src.push_back(world_ray(x, fm_n, tl, K));
    s.fwd_dst.push_back(world_ray(x + fwd.at(node.x(), node.y()), fm_n1, tl, K));
  }
  for (const auto& node : flow_sample_nodes(bwd, opt.grid)) {
    if (!bwd.valid(node.y(), node.x())) continue;
    const Eigen::Vector2d y = bwd.node_pixel(node.x(), node.y());
    s.bwd_src.push_back(world_ray(y, fm_n1, tl, K));
    s.bwd_dst.push_back(world_ray(y + bwd.at(node.x(), node.y()), fm_n, tl, K));
  }
  return s;
}

std::vector<FrameLossInputs> prepare_frame_inputs(const SensorTimeline& tl, std::span<const FrameMeta> frames,
                                                  std::span<const double> frame_times,
                                                  std::span<const FlowPairSamples> pairs, const LossConfig& cfg) {
  if (frames.size() != frame_times.size()) throw InvalidArgument("prepare_frame_inputs: size mismatch");
  if (!pairs.empty() && pairs.size() + 1 != frames.size()) {
    throw InvalidArgument("prepare_frame_inputs: need one flow pair per adjacent frame pair");
  }
  std::vector<FrameLossInputs> out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double t = frame_times[i];
    out[i].real_rotation = tl.query_rotation(t);
    for (int k = 0; k <= cfg.protrusion.N; ++k) {
      const double tk = t + k * cfg.history.step_ns;
      if (!tl.covers(tk)) break;
      out[i].lookahead.push_back(real_pose_at(tl, tk));
    }
    if (i > 0 && !pairs.empty()) out[i].flow = &pairs[i - 1];
  }
  return out;
}

std::vector<LossBreakdown> path_losses(std::span<const FrameLossInputs> inputs, const Intrinsics& K,
                                       const LossConfig& cfg, std::span<const Quaternion> path) {
  if (inputs.size() != path.size()) throw InvalidArgument("path_losses: size mismatch");
  std::vector<LossBreakdown> out(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Quaternion* prev = i >= 1 ? &path[i - 1] : nullptr;
    const Quaternion* prev2 = i >= 2 ? &path[i - 2] : nullptr;
    out[i] = frame_losses<double>(inputs[i], K, cfg, path[i], prev, prev2, true);
  }
  return out;
}

LossBreakdown sum_breakdown(std::span<const LossBreakdown> per_frame) {
  LossBreakdown s;
  for (const auto& b : per_frame) {
    s.c0 += b.c0;
    s.c1 += b.c1;
    s.p += b.p;
    s.d += b.d;
    s.f += b.f;
  }
  return s;
}

std::vector<bool> flow_sample_mask(const FlowPairSamples& s, const Quaternion& Rv_n, const Quaternion& Rv_n1) {
  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
  auto inside = [&](const std::optional<Eigen::Vector2d>& p) {
    return p && p->x() >= 0.0 && p->x() < s.K.width && p->y() >= 0.0 && p->y() < s.K.height;
  };
  std::vector<bool> out;
  auto add = [&](const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst,
                 const Quaternion& Ra, const Quaternion& Rb) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto a = project<double>(rotate(Ra, src[i]), zero, s.K);
      out.push_back(inside(a) && inside(project<double>(rotate(Rb, dst[i]), zero, s.K)));
    }
  };
  add(s.fwd_src, s.fwd_dst, Rv_n, Rv_n1);
  add(s.bwd_src, s.bwd_dst, Rv_n1, Rv_n);
  return out;
}

FlowLossGradient flow_loss_gradient(const FlowPairSamples& s, const Quaternion& Rv_n, const Quaternion& Rv_n1) {
  const Eigen::Matrix3d Mn = Rv_n.toRotationMatrix();
  const Eigen::Matrix3d Mn1 = Rv_n1.toRotationMatrix();
  const Intrinsics& K = s.K;
  const double W = K.width, H = K.height;
  // Pixel of p and d(pixel)/d(dv) for p <- exp(dv) p.
  auto proj = [&](const Eigen::Vector3d& p, Eigen::Vector2d& x, Eigen::Matrix<double, 2, 3>& J) {
    if (!(p.z() > 0.0)) return false;
    x = Eigen::Vector2d(K.f * p.x() / p.z() + K.cx, K.f * p.y() / p.z() + K.cy);
    if (!(x.x() >= 0.0 && x.x() < W && x.y() >= 0.0 && x.y() < H)) return false;
    Eigen::Matrix<double, 2, 3> P;
    P << 1.0, 0.0, -p.x() / p.z(), 0.0, 1.0, -p.y() / p.z();
    J = -(K.f / p.z()) * P * skew(p);
    return true;
  };
  auto direction = [&](const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst,
                       const Eigen::Matrix3d& Ma, const Eigen::Matrix3d& Mb, Eigen::Vector3d& ga,
                       Eigen::Vector3d& gb) {
    double acc = 0.0;
    Eigen::Vector3d da = Eigen::Vector3d::Zero(), db = Eigen::Vector3d::Zero();
    int count = 0;
    Eigen::Vector2d xa, xb;
    Eigen::Matrix<double, 2, 3> Ja, Jb;
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (!proj(Ma * src[i], xa, Ja) || !proj(Mb * dst[i], xb, Jb)) continue;
      const Eigen::Vector2d r = xa - xb;
      acc += r.squaredNorm();
      da += 2.0 * Ja.transpose() * r;
      db -= 2.0 * Jb.transpose() * r;
      ++count;
    }
    if (count == 0) return 0.0;
    ga += da / count;
    gb += db / count;
    return acc / count;
  };
  FlowLossGradient g;
  g.value = direction(s.fwd_src, s.fwd_dst, Mn, Mn1, g.d_n, g.d_n1) +
            direction(s.bwd_src, s.bwd_dst, Mn1, Mn, g.d_n1, g.d_n);
  return g;
}

}  // namespace fusestab
