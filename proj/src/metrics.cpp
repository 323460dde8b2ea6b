#include "fusestab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"

namespace fusestab {

std::array<std::vector<double>, 3> euler_series(std::span<const Quaternion> path) {
  std::array<std::vector<double>, 3> out;
  for (const auto& q : path) {
    const Eigen::Matrix3d R = q.toRotationMatrix();
    const double yaw = std::atan2(R(1, 0), R(0, 0));
    const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
    const double roll = std::atan2(R(2, 1), R(2, 2));
    const double angles[3] = {yaw, pitch, roll};
    for (int a = 0; a < 3; ++a) {
      double v = angles[a];
      if (!out[a].empty()) {
        // Unwrap against the previous sample.
        const double prev = out[a].back();
        v += 2.0 * M_PI * std::round((prev - v) / (2.0 * M_PI));
      }
      out[a].push_back(v);
    }
  }
  return out;
}

double stability_score(std::span<const double> series) {
  if (series.size() < kStabilityMinSamples) {
    throw DegenerateInput("stability: need at least " + std::to_string(kStabilityMinSamples) + " samples, got " +
                          std::to_string(series.size()));
  }
  Eigen::FFT<double> fft;
  std::vector<double> in(series.begin(), series.end());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  const std::size_t half = series.size() / 2;
  double low = 0.0, total = 0.0;
  for (std::size_t k = 2; k <= half; ++k) {
    const double e = std::norm(spec[k]);
    total += e;
    if (k <= 6) low += e;
  }
  if (total < 1e-12) return 1.0;
  return low / total;
}

double stability(std::span<const Quaternion> path) {
  const auto e = euler_series(path);
  double s = 0.0;
  for (const auto& series : e) s += stability_score(series);
  return s / 3.0;
}

double stability_of_trajectories(const std::vector<std::vector<Eigen::Vector2d>>& trajectories) {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : trajectories) {
    if (t.size() < kStabilityMinSamples) continue;
    for (int a = 0; a < 2; ++a) {
      std::vector<double> s;
      s.reserve(t.size());
      for (const auto& p : t) s.push_back(p(a));
      sum += stability_score(s);
      ++n;
    }
  }
  if (n == 0) throw DegenerateInput("stability: no trajectory has 64 points");
  return sum / n;
}

namespace {

// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
Eigen::Matrix3d normalizer(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) d += (p - c).norm();
  d /= static_cast<double>(pts.size());
  const double s = d > 0.0 ? std::sqrt(2.0) / d : 1.0;
  Eigen::Matrix3d T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

Eigen::Matrix2d affine_block(const Eigen::Matrix3d& H) {
  if (std::abs(H(2, 2)) < 1e-300) throw DegenerateInput("homography has H(2,2) = 0");
  return H.topLeftCorner<2, 2>() / H(2, 2);
}

}  // namespace

Eigen::Matrix3d fit_homography(std::span<const Eigen::Vector2d> src, std::span<const Eigen::Vector2d> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("fit_homography: size mismatch");
  if (src.size() < 4) throw DegenerateInput("fit_homography: need at least 4 correspondences");
  if (std::equal(src.begin(), src.end(), dst.begin())) return Eigen::Matrix3d::Identity();

  const Eigen::Matrix3d Ts = normalizer(src), Td = normalizer(dst);
  Eigen::MatrixXd A(2 * src.size(), 9);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d p = Ts * src[i].homogeneous();
    const Eigen::Vector3d q = Td * dst[i].homogeneous();
    const auto r = static_cast<Eigen::Index>(2 * i);
    A.row(r) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    A.row(r + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d H = Td.inverse() * Hn * Ts;
  if (std::abs(H(2, 2)) > 1e-300) H /= H(2, 2);
  return H;
}

double homography_distortion(const Eigen::Matrix3d& H) {
  const Eigen::Matrix2d A = affine_block(H);
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(A);
  const auto s = svd.singularValues();
  if (s(0) <= 0.0) return 0.0;
  return s(1) / s(0);
}

double homography_scale(const Eigen::Matrix3d& H) { return std::sqrt(std::abs(affine_block(H).determinant())); }

double distortion_score(std::span<const Eigen::Matrix3d> H) {
  if (H.empty()) throw DegenerateInput("distortion: no frames");
  double m = 1.0;
  for (const auto& h : H) m = std::min(m, homography_distortion(h));
  return m;
}

double fov_score(std::span<const Eigen::Matrix3d> H) {
  if (H.empty()) throw DegenerateInput("fov_ratio: no frames");
  double sum = 0.0;
  for (const auto& h : H) {
    const double s = homography_scale(h);
    sum += s > 0.0 ? std::min(s, 1.0 / s) : 0.0;
  }
  return sum / static_cast<double>(H.size());
}

Eigen::Matrix3d mesh_homography(const WarpMesh& mesh, int samples_per_axis) {
  std::vector<Eigen::Vector2d> src, dst;
  for (int r = 0; r <= mesh.rows; ++r) {
    for (int c = 0; c <= mesh.cols; ++c) {
      if (mesh.flags(r, c) != static_cast<std::uint8_t>(VertexFlag::Inside)) continue;
      src.emplace_back(mesh.src_x(r, c), mesh.src_y(r, c));
      dst.push_back(mesh.vertex_pixel(c, r));
    }
  }
  if (static_cast<int>(src.size()) < samples_per_axis * samples_per_axis) {
    // Coarse mesh or heavy cropping: add interior samples through the cell interpolation.
    src.clear();
    dst.clear();
    for (int j = 0; j < samples_per_axis; ++j) {
      for (int i = 0; i < samples_per_axis; ++i) {
        const Eigen::Vector2d x((i + 0.5) * (mesh.width - 1) / samples_per_axis,
                                (j + 0.5) * (mesh.height - 1) / samples_per_axis);
        Eigen::Vector2d s;
        if (!mesh.source_of(x.x(), x.y(), s)) continue;
        if (s.x() < 0 || s.y() < 0 || s.x() > mesh.width - 1 || s.y() > mesh.height - 1) continue;
        src.push_back(s);
        dst.push_back(x);
      }
    }
  }
  if (src.size() < 4) {
    // The virtual view has left the input frame; the warp is still defined by every vertex in front of the camera.
    src.clear();
    dst.clear();
    for (int r = 0; r <= mesh.rows; ++r) {
      for (int c = 0; c <= mesh.cols; ++c) {
        if (mesh.flags(r, c) == static_cast<std::uint8_t>(VertexFlag::BehindCamera)) continue;
        src.emplace_back(mesh.src_x(r, c), mesh.src_y(r, c));
        dst.push_back(mesh.vertex_pixel(c, r));
      }
    }
  }
  return fit_homography(src, dst);
}

double zncc(const std::vector<double>& a, const std::vector<double>& b, const std::vector<std::uint8_t>& mask,
            int channels) {
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < channels; ++c) {
      sa += a[i * channels + c];
      sb += b[i * channels + c];
      ++n;
    }
  }
  if (n == 0) return 1.0;
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    for (int c = 0; c < channels; ++c) {
      const double da = a[i * channels + c] - ma, db = b[i * channels + c] - mb;
      cov += da * db;
      va += da * da;
      vb += db * db;
    }
  }
  if (va < 1e-12 || vb < 1e-12) return 1.0;
  return cov / std::sqrt(va * vb);
}

double frame_correlation(const RasterFrame& input, const RasterFrame& output, const Eigen::Matrix3d& H) {
  if (input.width != output.width || input.height != output.height || input.channels != output.channels) {
    throw InvalidArgument("correlation: input and output frames differ in shape");
  }
  const int W = input.width, Hh = input.height, C = input.channels;
  const Eigen::Matrix3d Hinv = H.inverse();
  std::vector<double> warped(static_cast<std::size_t>(W) * Hh * C, 0.0), out(warped.size(), 0.0);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(W) * Hh, 0);
  for (int y = 0; y < Hh; ++y) {
    for (int x = 0; x < W; ++x) {
      const Eigen::Vector3d p = Hinv * Eigen::Vector3d(x, y, 1.0);
      if (!(p.z() > 0.0)) continue;
      const double sx = p.x() / p.z(), sy = p.y() / p.z();
      // One pixel of margin keeps black borders of the output out of the score.
      if (sx < 1.0 || sy < 1.0 || sx > W - 2.0 || sy > Hh - 2.0) continue;
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      mask[i] = 1;
      for (int c = 0; c < C; ++c) {
        warped[i * C + c] = input.sample(sx, sy, c);
        out[i * C + c] = output.at(x, y, c);
      }
    }
  }
  return std::clamp(zncc(warped, out, mask, C), 0.0, 1.0);
}

MetricReport evaluate_metrics(std::span<const Quaternion> virtual_path, std::span<const Eigen::Matrix3d> H,
                              const std::vector<RasterFrame>* inputs, const std::vector<RasterFrame>* outputs) {
  MetricReport r;
  const auto e = euler_series(virtual_path);
  for (int a = 0; a < 3; ++a) r.stability_axes[static_cast<std::size_t>(a)] = stability_score(e[static_cast<std::size_t>(a)]);
  r.stability = (r.stability_axes[0] + r.stability_axes[1] + r.stability_axes[2]) / 3.0;
  for (const auto& h : H) {
    r.frame_distortion.push_back(homography_distortion(h));
    const double s = homography_scale(h);
    r.frame_fov.push_back(s > 0.0 ? std::min(s, 1.0 / s) : 0.0);
  }
  r.distortion = distortion_score(H);
  r.fov_ratio = fov_score(H);
  if (inputs && outputs) {
    if (inputs->size() != H.size() || outputs->size() != H.size()) {
      throw InvalidArgument("evaluate: frame count does not match the homography count");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < H.size(); ++i) {
      r.frame_correlation.push_back(frame_correlation((*inputs)[i], (*outputs)[i], H[i]));
      sum += r.frame_correlation.back();
    }
    r.correlation = std::clamp(sum / static_cast<double>(H.size()), 0.0, 1.0);
  } else {
    r.correlation = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

std::string format_report(const MetricReport& r) {
  std::string s = "# metric,value\n";
  s += "stability," + io::fmt(r.stability) + "\n";
  s += "distortion," + io::fmt(r.distortion) + "\n";
  s += "correlation," + (std::isnan(r.correlation) ? std::string("nan") : io::fmt(r.correlation)) + "\n";
  s += "fov_ratio," + io::fmt(r.fov_ratio) + "\n";
  s += "stability_yaw," + io::fmt(r.stability_axes[0]) + "\n";
  s += "stability_pitch," + io::fmt(r.stability_axes[1]) + "\n";
  s += "stability_roll," + io::fmt(r.stability_axes[2]) + "\n";
  return s;
}

std::string format_metric_series(const MetricReport& r) {
  std::string s = "# frame,distortion,fov_ratio,correlation\n";
  for (std::size_t i = 0; i < r.frame_distortion.size(); ++i) {
    const std::string corr = i < r.frame_correlation.size() ? io::fmt(r.frame_correlation[i]) : std::string("nan");
    s += std::to_string(i) + "," + io::fmt(r.frame_distortion[i]) + "," + io::fmt(r.frame_fov[i]) + "," + corr + "\n";
  }
  return s;
}

}  // namespace fusestab
