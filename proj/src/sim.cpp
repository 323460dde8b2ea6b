#include "fusestab/sim.hpp"

#include <algorithm>
#include <cmath>

#include "fusestab/errors.hpp"
#include "fusestab/random.hpp"

namespace fusestab {

namespace {

constexpr double kDeg = M_PI / 180.0;

void validate_band(const BandNoise& b, const char* what) {
  if (!(b.amplitude >= 0.0)) throw InvalidArgument(std::string(what) + ": amplitude must be >= 0");
  if (!(b.low_hz > 0.0 && b.low_hz <= b.high_hz && b.high_hz < 100.0)) {
    throw InvalidArgument(std::string(what) + ": band must satisfy 0 < low <= high < 100 Hz");
  }
  if (b.components < 1) throw InvalidArgument(std::string(what) + ": components must be >= 1");
}

Nanos to_ns(double seconds) { return static_cast<Nanos>(std::llround(seconds * 1e9)); }

}  // namespace

void ShakeSpec::validate() const {
  validate_band(shake, "shake");
  validate_band(ois, "ois");
  if (width < 2 || height < 2) throw InvalidArgument("capture: frame must be at least 2x2");
  if (!(fps > 0.0)) throw InvalidArgument("capture: fps must be > 0");
  if (frames < 2) throw InvalidArgument("capture: need at least two frames");
  if (!(readout_ms >= 0.0 && readout_ms * 1e-3 < 1.0 / fps)) {
    throw InvalidArgument("capture: readout must be >= 0 and shorter than the frame interval");
  }
  if (!(padding_s >= 0.0)) throw InvalidArgument("capture: padding must be >= 0");
  if (base == BasePath::Panning && !(pan_axis.norm() > 0.0)) throw InvalidArgument("capture: zero pan axis");
  if (base == BasePath::Keyframes) {
    if (keyframes.empty()) throw InvalidArgument("capture: keyframe base needs at least one keyframe");
    for (std::size_t i = 1; i < keyframes.size(); ++i) {
      if (!(keyframes[i].t > keyframes[i - 1].t)) throw InvalidArgument("capture: keyframe times must increase");
    }
  }
}

CaptureModel::CaptureModel(const ShakeSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng(spec_.seed);
  auto tones = [&rng](const BandNoise& b, double axis_rms, std::vector<Tone>& out) {
    // Each tone contributes amp^2 / 2 to the mean square.
    const double amp = axis_rms * std::sqrt(2.0 / b.components);
    for (int k = 0; k < b.components; ++k) {
      const double f = rng.uniform(b.low_hz, b.high_hz);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      out.push_back({f, phase, amp});
    }
  };
  for (auto& axis : shake_) tones(spec_.shake, spec_.shake.amplitude * kDeg / std::sqrt(3.0), axis);
  for (auto& axis : ois_) tones(spec_.ois, spec_.ois.amplitude / std::sqrt(2.0), axis);
  anchor_inv_ = raw_rotation(0.0).conjugate();
}

Quaternion CaptureModel::raw_base(double t) const {
  const double since_first = t - spec_.padding_s;
  switch (spec_.base) {
    case BasePath::Constant:
      return Quaternion::Identity();
    case BasePath::Panning:
      return exp_map<double>(spec_.pan_axis.normalized() * (spec_.pan_rate_deg * kDeg * since_first));
    case BasePath::Keyframes: {
      const auto& kf = spec_.keyframes;
      if (since_first <= kf.front().t) return exp_map<double>(kf.front().rotation);
      if (since_first >= kf.back().t) return exp_map<double>(kf.back().rotation);
      std::size_t i = 0;
      while (kf[i + 1].t < since_first) ++i;
      const double u = (since_first - kf[i].t) / (kf[i + 1].t - kf[i].t);
      return slerp(exp_map<double>(kf[i].rotation), exp_map<double>(kf[i + 1].rotation), std::clamp(u, 0.0, 1.0));
    }
  }
  return Quaternion::Identity();
}

Quaternion CaptureModel::raw_rotation(double t) const {
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (int a = 0; a < 3; ++a) {
    for (const auto& tone : shake_[a]) s(a) += tone.amp * std::sin(2.0 * M_PI * tone.freq * t + tone.phase);
  }
  return exp_map<double>(s) * raw_base(t);
}

Quaternion CaptureModel::base_rotation(double t) const { return canonical(Quaternion(raw_base(t) * anchor_inv_)); }

Quaternion CaptureModel::rotation(double t) const { return canonical(Quaternion(raw_rotation(t) * anchor_inv_)); }

Eigen::Vector2d CaptureModel::ois(double t) const {
  Eigen::Vector2d o = Eigen::Vector2d::Zero();
  for (int a = 0; a < 2; ++a) {
    for (const auto& tone : ois_[a]) o(a) += tone.amp * std::sin(2.0 * M_PI * tone.freq * t + tone.phase);
  }
  return o;
}

Capture generate_capture(const ShakeSpec& spec) {
  const CaptureModel model(spec);
  Capture cap;
  cap.spec = spec;

  const Nanos readout = to_ns(spec.readout_ms * 1e-3);
  const Nanos pad = to_ns(spec.padding_s);
  for (int n = 0; n < spec.frames; ++n) {
    cap.frames.push_back({n, pad + to_ns(n / spec.fps), readout, spec.width, spec.height});
  }
  const Nanos end = cap.frames.back().t_start + readout + pad;
  const Nanos count = (end + kSensorInterval - 1) / kSensorInterval + 1;

  Quaternion prev = Quaternion::Identity();
  for (Nanos k = 0; k < count; ++k) {
    const Nanos t = k * kSensorInterval;
    const double ts = static_cast<double>(t) * 1e-9;
    const Quaternion R = model.rotation(ts);
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();
    if (k > 0) omega = log_map(canonical(Quaternion(R * prev.conjugate()))) / (static_cast<double>(kSensorInterval) * 1e-9);
    cap.gyro.push_back({t, omega});
    cap.truth.push_back(R);
    if (spec.ois.amplitude > 0.0) cap.ois.push_back({t, model.ois(ts)});
    prev = R;
  }
  cap.timeline = integrate_gyro(cap.gyro, cap.ois);

  for (const auto& fm : cap.frames) {
    const double t = fm.t_mid();
    cap.real_path.push_back({fm.index, t, real_pose_at(cap.timeline, t)});
    cap.base_path.push_back({fm.index, t, CameraPose{model.base_rotation(t * 1e-9), Eigen::Vector2d::Zero()}});
  }
  return cap;
}

namespace {

struct Landing {
  Eigen::Vector3d ray;
  Quaternion R_x, R_y;
  std::optional<Eigen::Vector2d> y;
};

Landing land(const SensorTimeline& tl, const FrameMeta& src, const FrameMeta& dst, const Intrinsics& K,
             const Eigen::Vector2d& x) {
  Landing l;
  const double t_x = scanline_time_at(src, x.y());
  l.R_x = tl.query_rotation(t_x);
  l.ray = rotate<double>(l.R_x.conjugate(), back_project<double>(x, tl.query_ois(t_x), K));
  double row = x.y();
  for (int it = 0; it < 100; ++it) {
    const double t_y = scanline_time_at(dst, row);
    l.R_y = tl.query_rotation(t_y);
    l.y = project<double>(rotate(l.R_y, l.ray), tl.query_ois(t_y), K);
    if (!l.y || std::abs(l.y->y() - row) < 1e-12) break;
    row = l.y->y();
  }
  return l;
}

}  // namespace

std::optional<Eigen::Vector2d> analytic_target(const SensorTimeline& tl, const FrameMeta& src, const FrameMeta& dst,
                                               const Intrinsics& K, const Eigen::Vector2d& x) {
  return land(tl, src, dst, K, x).y;
}

AnalyticFlow analytic_flow(const SensorTimeline& tl, const FrameMeta& fm_n, const FrameMeta& fm_n1,
                           const Intrinsics& K, double scale, FlowDirection dir) {
  if (!(scale > 0.0)) throw InvalidArgument("analytic_flow: grid scale must be > 0");
  const FrameMeta& src = dir == FlowDirection::Forward ? fm_n : fm_n1;
  const FrameMeta& dst = dir == FlowDirection::Forward ? fm_n1 : fm_n;
  const int gw = static_cast<int>(std::floor((src.width - 1) / scale)) + 1;
  const int gh = static_cast<int>(std::floor((src.height - 1) / scale)) + 1;
  AnalyticFlow out{FlowField(gw, gh, scale, dir, fm_n.index), FlowField(gw, gh, scale, dir, fm_n.index)};
  const Eigen::Vector2d zero = Eigen::Vector2d::Zero();

  for (int r = 0; r < gh; ++r) {
    for (int c = 0; c < gw; ++c) {
      const Eigen::Vector2d x(c * scale, r * scale);
      const Landing l = land(tl, src, dst, K, x);
      const auto& y = l.y;
      const bool valid = y && y->x() >= 0.0 && y->x() <= dst.width - 1 && y->y() >= 0.0 && y->y() <= dst.height - 1;
      for (FlowField* f : {&out.raw, &out.ois_free}) f->valid(r, c) = valid;
      if (!valid) continue;
      out.raw.u(r, c) = y->x() - x.x();
      out.raw.v(r, c) = y->y() - x.y();
      // Same ray and instants without the lens shift.
      const auto a = project<double>(rotate(l.R_x, l.ray), zero, K);
      const auto b = project<double>(rotate(l.R_y, l.ray), zero, K);
      out.ois_free.u(r, c) = b->x() - a->x();
      out.ois_free.v(r, c) = b->y() - a->y();
    }
  }
  return out;
}

double scene_intensity(const Eigen::Vector3d& ray, int channel) {
  const double lon = std::atan2(ray.x(), ray.z());
  const double lat = std::atan2(ray.y(), std::hypot(ray.x(), ray.z()));
  const double ph = 1.7 * channel;
  const double k1 = 2.0 * M_PI / 0.04, k2 = 2.0 * M_PI / 0.057, k3 = 2.0 * M_PI / 0.083;
  return 128.0 + 35.0 * std::sin(k1 * (0.8 * lon + 0.6 * lat) + ph) +
         30.0 * std::sin(k2 * (-0.5 * lon + 0.866 * lat) + 0.4 + ph) + 25.0 * std::sin(k3 * lon + 1.3 * ph) *
                                                                             std::cos(k3 * lat + 0.7);
}

namespace {

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

RasterFrame render_synthetic_frame(const SensorTimeline& tl, const FrameMeta& fm, const Intrinsics& K, int channels) {
  RasterFrame f(fm.width, fm.height, channels);
  for (int y = 0; y < fm.height; ++y) {
    const double t = scanline_time(fm, y);
    const Quaternion Rinv = tl.query_rotation(t).conjugate();
    const Eigen::Vector2d O = tl.query_ois(t);
    for (int x = 0; x < fm.width; ++x) {
      const Eigen::Vector3d ray = rotate<double>(Rinv, back_project<double>(Eigen::Vector2d(x, y), O, K));
      for (int c = 0; c < channels; ++c) f.at(x, y, c) = quantize(scene_intensity(ray, c));
    }
  }
  return f;
}

RasterFrame render_reference(const CameraPose& pose, const Intrinsics& K, int channels) {
  RasterFrame f(K.width, K.height, channels);
  const Quaternion Rinv = pose.R.conjugate();
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Eigen::Vector3d ray = rotate<double>(Rinv, back_project<double>(Eigen::Vector2d(x, y), pose.O, K));
      for (int c = 0; c < channels; ++c) f.at(x, y, c) = quantize(scene_intensity(ray, c));
    }
  }
  return f;
}

}  // namespace fusestab
