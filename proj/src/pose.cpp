#include "fusestab/pose.hpp"

#include <algorithm>

#include "fusestab/io.hpp"

namespace fusestab {

Eigen::Vector2d project_real_to_virtual(const Eigen::Vector2d& x_r, const CameraPose& P_r, const CameraPose& P_v,
                                        const Intrinsics& K) {
  const auto x = real_to_virtual<double>(x_r, P_r.R, P_r.O, P_v.R, P_v.O, K);
  if (!x) throw BehindCamera("project_real_to_virtual: point behind the virtual camera");
  return *x;
}

Eigen::Vector2d project_virtual_to_real(const Eigen::Vector2d& x_v, const CameraPose& P_r, const CameraPose& P_v,
                                        const Intrinsics& K) {
  const auto x = virtual_to_real<double>(x_v, P_r.R, P_r.O, P_v.R, P_v.O, K);
  if (!x) throw BehindCamera("project_virtual_to_real: point behind the real camera");
  return *x;
}

CameraPose real_pose_at(const SensorTimeline& tl, double t) { return CameraPose{tl.query_rotation(t), tl.query_ois(t)}; }

QueueLookup lookup_queue(std::span<const double> times, std::size_t available, double t) {
  available = std::min(available, times.size());
  if (available == 0 || t < times[0]) return {};
  const int last = static_cast<int>(available) - 1;
  if (t >= times[static_cast<std::size_t>(last)]) return {last, last, 0.0};
  const auto begin = times.begin();
  const auto it = std::upper_bound(begin, begin + static_cast<std::ptrdiff_t>(available), t);
  const int a = static_cast<int>(std::distance(begin, it)) - 1;
  const double ta = times[static_cast<std::size_t>(a)];
  const double tb = times[static_cast<std::size_t>(a + 1)];
  return {a, a + 1, (t - ta) / (tb - ta)};
}

Quaternion VirtualPath::at(double t, std::size_t available) const {
  const QueueLookup l = lookup_queue(times, std::min(available, rotations.size()), t);
  if (l.a < 0) return seed;
  const Quaternion& qa = rotations[static_cast<std::size_t>(l.a)];
  if (l.u == 0.0) return qa;
  return slerp(qa, rotations[static_cast<std::size_t>(l.b)], l.u);
}

MotionHistory build_history(const SensorTimeline& tl, const VirtualPath& vpath, double t, const HistoryParams& hp,
                            std::size_t available, bool clamp_sensor, double horizon) {
  if (hp.N < 0) throw InvalidArgument("build_history: N must be >= 0");
  auto real_at = [&](double ts) {
    ts = std::min(ts, horizon);
    return clamp_sensor ? tl.rotation_clamped(ts) : tl.query_rotation(ts);
  };
  const Quaternion inv_now = real_at(t).conjugate();
  MotionHistory h;
  h.real.reserve(static_cast<std::size_t>(2 * hp.N + 1));
  for (int k = -hp.N; k <= hp.N; ++k) {
    if (k == 0) {
      h.real.push_back(Quaternion::Identity());
      continue;
    }
    h.real.push_back(canonical(Quaternion(real_at(t + k * hp.step_ns) * inv_now)));
  }
  h.virt.reserve(static_cast<std::size_t>(hp.N));
  for (int k = hp.N; k >= 1; --k) {
    h.virt.push_back(canonical(Quaternion(vpath.at(t - k * hp.step_ns, available) * inv_now)));
  }
  return h;
}

MotionHistory build_history(const SensorTimeline& tl, const VirtualPath& vpath, double t, const HistoryParams& hp) {
  return build_history(tl, vpath, t, hp, vpath.size(), false);
}

std::string format_path(std::span<const PathRecord> records) {
  std::string s = "# frame_index,t_ns,qw,qx,qy,qz,ox,oy\n";
  for (const auto& r : records) {
    const auto& q = r.pose.R;
    s += std::to_string(r.frame) + "," + io::fmt(r.t) + "," + io::fmt(q.w()) + "," + io::fmt(q.x()) + "," +
         io::fmt(q.y()) + "," + io::fmt(q.z()) + "," + io::fmt(r.pose.O.x()) + "," + io::fmt(r.pose.O.y()) + "\n";
  }
  return s;
}

std::vector<PathRecord> read_path_file(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<PathRecord> out;
  io::for_each_csv_row(path, text, [&](int line, const std::vector<std::string>& f) {
    if (f.size() != 8) throw FormatError(path, line, "expected 8 fields, got " + std::to_string(f.size()));
    PathRecord r;
    r.frame = static_cast<int>(io::parse_int(path, line, f[0]));
    r.t = io::parse_double(path, line, f[1]);
    Quaternion q(io::parse_double(path, line, f[2]), io::parse_double(path, line, f[3]),
                 io::parse_double(path, line, f[4]), io::parse_double(path, line, f[5]));
    const double n = q.norm();
    if (!(std::abs(n - 1.0) < 1e-6)) throw FormatError(path, line, "quaternion is not unit length");
    r.pose.R = canonical(normalized(q));
    r.pose.O = {io::parse_double(path, line, f[6]), io::parse_double(path, line, f[7])};
    out.push_back(r);
  });
  return out;
}

}  // namespace fusestab
