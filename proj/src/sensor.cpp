#include "fusestab/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fusestab/io.hpp"

namespace fusestab {

double scanline_time(const FrameMeta& fm, int row) {
  if (row < 0 || row >= fm.height) {
    throw InvalidArgument("scanline_time: row " + std::to_string(row) + " outside [0, " +
                          std::to_string(fm.height) + ")");
  }
  return scanline_time_at(fm, static_cast<double>(row));
}

double scanline_time_at(const FrameMeta& fm, double y) {
  if (fm.height <= 1) return static_cast<double>(fm.t_start);
  const double last = static_cast<double>(fm.height - 1);
  const double r = std::clamp(y, 0.0, last);
  return static_cast<double>(fm.t_start) + static_cast<double>(fm.readout) * (r / last);
}

SensorTimeline SensorTimeline::from_rotations(std::vector<Nanos> times, std::vector<Quaternion> rotations,
                                              std::vector<OisSample> ois) {
  if (times.size() != rotations.size() || times.empty()) {
    throw InvalidArgument("SensorTimeline: rotation times and values must be non-empty and equal length");
  }
  SensorTimeline tl;
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] <= times[i - 1]) throw InvalidArgument("SensorTimeline: rotation times not strictly increasing");
  }
  tl.rot_t_ = std::move(times);
  tl.rot_.reserve(rotations.size());
  for (const auto& q : rotations) tl.rot_.push_back(canonical(normalized(q)));
  tl.last_gyro_t_ = tl.rot_t_.back();
  for (const auto& s : ois) tl.append_ois(s);
  return tl;
}

void SensorTimeline::append_gyro(const GyroSample& s) {
  if (rot_t_.empty()) {
    rot_t_.push_back(s.t);
    rot_.push_back(Quaternion::Identity());
    last_gyro_t_ = s.t;
    return;
  }
  if (s.t <= last_gyro_t_) {
    throw InvalidArgument("gyro sample at t=" + std::to_string(s.t) + " is not after t=" + std::to_string(last_gyro_t_));
  }
  const double dt = static_cast<double>(s.t - last_gyro_t_) * 1e-9;
  const Quaternion dq = quat_from_angular_velocity(s.omega, dt);
  rot_.push_back(canonical(normalized(Quaternion(dq * rot_.back()))));
  rot_t_.push_back(s.t);
  last_gyro_t_ = s.t;
}

void SensorTimeline::append_ois(const OisSample& s) {
  if (!ois_t_.empty() && s.t <= ois_t_.back()) {
    throw InvalidArgument("OIS sample at t=" + std::to_string(s.t) + " is not after t=" + std::to_string(ois_t_.back()));
  }
  ois_t_.push_back(s.t);
  ois_.push_back(s.o);
}

namespace {

// Index a with times[a] <= t <= times[a + 1] (a + 1 clamped), or -1 when t is outside.
std::ptrdiff_t bracket(std::span<const Nanos> times, double t) {
  if (times.empty()) return -1;
  if (t < static_cast<double>(times.front()) || t > static_cast<double>(times.back())) return -1;
  auto it = std::upper_bound(times.begin(), times.end(), t,
                             [](double v, Nanos s) { return v < static_cast<double>(s); });
  return std::distance(times.begin(), it) - 1;
}

std::string time_range_message(const char* what, double t, double lo, double hi) {
  std::ostringstream ss;
  ss.precision(17);
  ss << what << ": t=" << t << " outside [" << lo << ", " << hi << "]";
  return ss.str();
}

}  // namespace

bool SensorTimeline::covers(double t) const { return bracket(rot_t_, t) >= 0; }

double SensorTimeline::first_time() const {
  if (rot_t_.empty()) throw OutOfRange("SensorTimeline is empty");
  return static_cast<double>(rot_t_.front());
}

double SensorTimeline::last_time() const {
  if (rot_t_.empty()) throw OutOfRange("SensorTimeline is empty");
  return static_cast<double>(rot_t_.back());
}

Quaternion SensorTimeline::query_rotation(double t) const {
  const std::ptrdiff_t a = bracket(rot_t_, t);
  if (a < 0) {
    throw OutOfRange(time_range_message("query_rotation", t, rot_t_.empty() ? 0.0 : first_time(),
                                        rot_t_.empty() ? 0.0 : last_time()));
  }
  const auto ia = static_cast<std::size_t>(a);
  const double ta = static_cast<double>(rot_t_[ia]);
  if (t == ta || ia + 1 == rot_t_.size()) return rot_[ia];
  const double tb = static_cast<double>(rot_t_[ia + 1]);
  return slerp(rot_[ia], rot_[ia + 1], (t - ta) / (tb - ta));
}

Quaternion SensorTimeline::rotation_clamped(double t) const {
  return query_rotation(std::clamp(t, first_time(), last_time()));
}

Eigen::Vector2d SensorTimeline::query_ois(double t) const {
  if (ois_t_.empty()) return Eigen::Vector2d::Zero();
  const std::ptrdiff_t a = bracket(ois_t_, t);
  if (a < 0) {
    throw OutOfRange(time_range_message("query_ois", t, static_cast<double>(ois_t_.front()),
                                        static_cast<double>(ois_t_.back())));
  }
  const auto ia = static_cast<std::size_t>(a);
  const double ta = static_cast<double>(ois_t_[ia]);
  if (t == ta || ia + 1 == ois_t_.size()) return ois_[ia];
  const double tb = static_cast<double>(ois_t_[ia + 1]);
  const double u = (t - ta) / (tb - ta);
  return (1.0 - u) * ois_[ia] + u * ois_[ia + 1];
}

SensorTimeline SensorTimeline::reoriented(const Quaternion& g) const {
  SensorTimeline out = *this;
  for (auto& q : out.rot_) q = canonical(Quaternion(q * g));
  return out;
}

SensorTimeline integrate_gyro(std::span<const GyroSample> samples, std::span<const OisSample> ois) {
  if (samples.size() < 2) throw FormatError("gyro log", 0, "need at least two gyro samples");
  SensorTimeline tl;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i > 0 && samples[i].t <= samples[i - 1].t) {
      throw FormatError("gyro log", 0,
                        "timestamps not strictly increasing at sample " + std::to_string(i) + " (t=" +
                            std::to_string(samples[i].t) + ")");
    }
    tl.append_gyro(samples[i]);
  }
  for (std::size_t i = 0; i < ois.size(); ++i) {
    if (i > 0 && ois[i].t <= ois[i - 1].t) {
      throw FormatError("OIS log", 0, "timestamps not strictly increasing at sample " + std::to_string(i));
    }
    tl.append_ois(ois[i]);
  }
  return tl;
}

namespace {

void expect_fields(const std::string& source, int line, const std::vector<std::string>& f, std::size_t n) {
  if (f.size() != n) {
    throw FormatError(source, line, "expected " + std::to_string(n) + " fields, got " + std::to_string(f.size()));
  }
}

}  // namespace

std::vector<GyroSample> read_gyro_log(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<GyroSample> out;
  io::for_each_csv_row(path, text, [&](int line, const std::vector<std::string>& f) {
    expect_fields(path, line, f, 4);
    GyroSample s;
    s.t = io::parse_int(path, line, f[0]);
    s.omega = {io::parse_double(path, line, f[1]), io::parse_double(path, line, f[2]),
               io::parse_double(path, line, f[3])};
    if (!s.omega.allFinite()) throw FormatError(path, line, "non-finite angular velocity");
    if (!out.empty() && s.t <= out.back().t) throw FormatError(path, line, "timestamp not strictly increasing");
    out.push_back(s);
  });
  return out;
}

std::vector<OisSample> read_ois_log(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<OisSample> out;
  io::for_each_csv_row(path, text, [&](int line, const std::vector<std::string>& f) {
    expect_fields(path, line, f, 3);
    OisSample s;
    s.t = io::parse_int(path, line, f[0]);
    s.o = {io::parse_double(path, line, f[1]), io::parse_double(path, line, f[2])};
    if (!out.empty() && s.t <= out.back().t) throw FormatError(path, line, "timestamp not strictly increasing");
    out.push_back(s);
  });
  return out;
}

std::vector<FrameMeta> read_frame_meta(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<FrameMeta> out;
  io::for_each_csv_row(path, text, [&](int line, const std::vector<std::string>& f) {
    expect_fields(path, line, f, 5);
    FrameMeta m;
    m.index = static_cast<int>(io::parse_int(path, line, f[0]));
    m.t_start = io::parse_int(path, line, f[1]);
    m.readout = io::parse_int(path, line, f[2]);
    m.width = static_cast<int>(io::parse_int(path, line, f[3]));
    m.height = static_cast<int>(io::parse_int(path, line, f[4]));
    if (m.readout < 0) throw FormatError(path, line, "negative readout");
    if (m.width <= 0 || m.height <= 0) throw FormatError(path, line, "non-positive frame size");
    if (!out.empty() && m.t_start <= out.back().t_start) {
      throw FormatError(path, line, "frame start times not strictly increasing");
    }
    out.push_back(m);
  });
  return out;
}

std::string format_gyro_log(std::span<const GyroSample> samples) {
  std::string s = "# t_ns,omega_x,omega_y,omega_z\n";
  for (const auto& g : samples) {
    s += std::to_string(g.t) + "," + io::fmt(g.omega.x()) + "," + io::fmt(g.omega.y()) + "," + io::fmt(g.omega.z()) + "\n";
  }
  return s;
}

std::string format_ois_log(std::span<const OisSample> samples) {
  std::string s = "# t_ns,o_x,o_y\n";
  for (const auto& o : samples) s += std::to_string(o.t) + "," + io::fmt(o.o.x()) + "," + io::fmt(o.o.y()) + "\n";
  return s;
}

std::string format_frame_meta(std::span<const FrameMeta> frames) {
  std::string s = "# index,t_start_ns,readout_ns,width,height\n";
  for (const auto& f : frames) {
    s += std::to_string(f.index) + "," + std::to_string(f.t_start) + "," + std::to_string(f.readout) + "," +
         std::to_string(f.width) + "," + std::to_string(f.height) + "\n";
  }
  return s;
}

}  // namespace fusestab
