#include <doctest.h>

#include <cmath>

#include "fusestab/errors.hpp"
#include "fusestab/sim.hpp"
#include "test_support.hpp"

using namespace fusestab;

namespace {

constexpr double kDeg = M_PI / 180.0;

ShakeSpec small_spec() {
  ShakeSpec s;
  s.width = 160;
  s.height = 120;
  s.frames = 60;
  return s;
}

double angle_between(const Quaternion& a, const Quaternion& b) {
  return log_map(canonical(Quaternion(a * b.conjugate()))).norm();
}

// Timeline that holds I until 0.5 s and `R` from 1.5 s on.
SensorTimeline step_timeline(const Quaternion& R) {
  return SensorTimeline::from_rotations({0, 500'000'000, 1'500'000'000, 2'000'000'000},
                                        {Quaternion::Identity(), Quaternion::Identity(), R, R});
}

}  // namespace

TEST_CASE("spec validation") {
  ShakeSpec s;
  CHECK_NOTHROW(s.validate());
  s.shake.amplitude = -1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = ShakeSpec{};
  s.shake.high_hz = 120;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = ShakeSpec{};
  s.ois.low_hz = 0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = ShakeSpec{};
  s.readout_ms = 40;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = ShakeSpec{};
  s.base = BasePath::Keyframes;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  CHECK_THROWS_AS(generate_capture(s), InvalidArgument);
}

TEST_CASE("zero shake on a constant base gives an all-zero gyro log") {
  const auto cap = generate_capture(small_spec());
  REQUIRE(cap.gyro.size() > 100);
  for (const auto& g : cap.gyro) CHECK(g.omega == Eigen::Vector3d::Zero());
  CHECK(cap.ois.empty());
  CHECK(cap.frames.size() == 60u);
  CHECK(cap.gyro.front().t == 0);
  CHECK(cap.gyro[1].t - cap.gyro[0].t == kSensorInterval);
  CHECK(cap.gyro.back().t >= cap.frames.back().t_start + cap.frames.back().readout + 500'000'000);
}

TEST_CASE("integrating the generated gyro log reproduces the true path") {
  for (std::uint64_t seed : {1, 2, 3}) {
    ShakeSpec s = small_spec();
    s.seed = seed;
    s.shake.amplitude = 1.0;
    s.base = BasePath::Panning;
    s.pan_rate_deg = 15;
    const auto cap = generate_capture(s);
    const double seconds = static_cast<double>(cap.gyro.back().t) * 1e-9;
    double worst = 0.0;
    const auto rots = cap.timeline.rotations();
    REQUIRE(rots.size() == cap.truth.size());
    for (std::size_t k = 0; k < rots.size(); ++k) worst = std::max(worst, angle_between(rots[k], cap.truth[k]));
    CHECK(worst < 1e-7 * seconds);
  }
}

TEST_CASE("shake rms follows the requested amplitude") {
  ShakeSpec s = small_spec();
  s.shake.amplitude = 1.0;
  s.frames = 600;
  s.seed = 5;
  const CaptureModel model(s);
  double ms = 0.0;
  int n = 0;
  for (double t = 0.5; t < 20.0; t += 0.001, ++n) ms += std::pow(log_map(model.rotation(t) * model.rotation(0.0).conjugate()).norm(), 2);
  // Same anchor, so this is the rms of exp(s(t)) exp(s(0))^-1, roughly sqrt(2) times the shake rms.
  const double rms = std::sqrt(ms / n) / std::sqrt(2.0);
  CHECK(rms == doctest::Approx(1.0 * kDeg).epsilon(0.35));
}

TEST_CASE("panning 10 deg/s for 2 s turns 20 degrees") {
  ShakeSpec s = small_spec();
  s.base = BasePath::Panning;
  s.pan_rate_deg = 10;
  s.frames = 90;
  const CaptureModel model(s);
  const double t0 = s.padding_s;
  CHECK(std::abs(angle_between(model.rotation(t0 + 2.0), model.rotation(t0)) - 20 * kDeg) < 1e-6);
  CHECK(std::abs(angle_between(model.base_rotation(t0 + 2.0), model.base_rotation(t0)) - 20 * kDeg) < 1e-6);

  const auto cap = generate_capture(s);
  const auto a = cap.timeline.query_rotation(t0 * 1e9);
  const auto b = cap.timeline.query_rotation((t0 + 2.0) * 1e9);
  CHECK(std::abs(angle_between(b, a) - 20 * kDeg) < 1e-6);
  // Yaw about the camera y axis.
  const Eigen::Vector3d axis = log_map(canonical(Quaternion(b * a.conjugate()))).normalized();
  CHECK(std::abs(std::abs(axis.y()) - 1.0) < 1e-9);
}

TEST_CASE("keyframe base interpolates and holds at the ends") {
  ShakeSpec s = small_spec();
  s.base = BasePath::Keyframes;
  s.keyframes = {{0.0, Eigen::Vector3d::Zero()}, {1.0, Eigen::Vector3d(0, 0, 0.2)}};
  const CaptureModel model(s);
  const double t0 = s.padding_s;
  CHECK(std::abs(angle_between(model.rotation(t0 + 0.5), model.rotation(t0)) - 0.1) < 1e-12);
  CHECK(angle_between(model.rotation(t0 + 1.5), model.rotation(t0 + 1.0)) < 1e-12);
  CHECK(angle_between(model.rotation(0.0), model.rotation(t0)) < 1e-12);
}

TEST_CASE("same seed, same capture") {
  ShakeSpec s = small_spec();
  s.shake.amplitude = 1.0;
  s.ois.amplitude = 2.0;
  const auto a = generate_capture(s);
  const auto b = generate_capture(s);
  REQUIRE(a.gyro.size() == b.gyro.size());
  for (std::size_t i = 0; i < a.gyro.size(); ++i) CHECK(a.gyro[i].omega == b.gyro[i].omega);
  for (std::size_t i = 0; i < a.ois.size(); ++i) CHECK(a.ois[i].o == b.ois[i].o);
  s.seed = 2;
  const auto c = generate_capture(s);
  CHECK(c.gyro[10].omega != a.gyro[10].omega);
}

TEST_CASE("identical poses, global shutter, no OIS give zero flow") {
  const auto tl = step_timeline(Quaternion::Identity());
  const FrameMeta f0{0, 500'000'000, 0, 160, 120}, f1{1, 1'500'000'000, 0, 160, 120};
  const auto K = Intrinsics::for_frame(160, 120);
  const auto fl = analytic_flow(tl, f0, f1, K, 8.0, FlowDirection::Forward);
  CHECK(fl.raw.width == 20);
  CHECK(fl.raw.height == 15);
  CHECK(fl.raw.valid.all());
  CHECK(fl.raw.u.abs().maxCoeff() < 1e-9);
  CHECK(fl.raw.v.abs().maxCoeff() < 1e-9);
}

TEST_CASE("one degree of yaw moves the centre by f tan(1 deg)") {
  const auto tl = step_timeline(exp_map<double>(Eigen::Vector3d(0, 1.0 * kDeg, 0)));
  const FrameMeta f0{0, 500'000'000, 0, 641, 481}, f1{1, 1'500'000'000, 0, 641, 481};
  const auto K = Intrinsics::for_frame(641, 481);
  const auto fl = analytic_flow(tl, f0, f1, K, 8.0, FlowDirection::Forward);
  const Eigen::Vector2d d = fl.raw.at(40, 30);
  REQUIRE(fl.raw.node_pixel(40, 30) == Eigen::Vector2d(K.cx, K.cy));
  CHECK(std::abs(std::abs(d.x()) - kFocalLength * std::tan(1.0 * kDeg)) < 1e-9);
  CHECK(std::abs(std::abs(d.x()) - 26.39) < 0.01);
  CHECK(std::abs(d.y()) < 1e-9);
  const auto bw = analytic_flow(tl, f0, f1, K, 8.0, FlowDirection::Backward);
  CHECK(std::abs(bw.raw.at(40, 30).x() + d.x()) < 1e-9);
}

TEST_CASE("removing OIS from analytic flow gives the OIS-free analytic flow") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    ShakeSpec s = small_spec();
    s.seed = seed;
    s.shake.amplitude = 1.0;
    s.ois.amplitude = 3.0;
    const auto cap = generate_capture(s);
    const auto K = Intrinsics::for_frame(s.width, s.height);
    for (int n : {0, 20, 58}) {
      for (auto dir : {FlowDirection::Forward, FlowDirection::Backward}) {
        const auto fl = analytic_flow(cap.timeline, cap.frames[n], cap.frames[n + 1], K, 4.0, dir);
        const auto cleaned = remove_ois(fl.raw, cap.timeline, cap.frames[n], cap.frames[n + 1]);
        double worst = 0.0;
        for (int r = 0; r < fl.raw.height; ++r)
          for (int c = 0; c < fl.raw.width; ++c) {
            if (!fl.raw.valid(r, c)) continue;
            worst = std::max(worst, (cleaned.at(c, r) - fl.ois_free.at(c, r)).norm());
          }
        CHECK(worst < 1e-6);
        // The OIS actually moved things.
        CHECK((fl.raw.u - fl.ois_free.u).abs().maxCoeff() > 1e-3);
      }
    }
  }
}

TEST_CASE("forward then backward analytic mapping returns to the origin") {
  ShakeSpec s = small_spec();
  s.shake.amplitude = 1.5;
  s.ois.amplitude = 2.0;
  s.base = BasePath::Panning;
  s.pan_rate_deg = 20;
  const auto cap = generate_capture(s);
  const auto K = Intrinsics::for_frame(s.width, s.height);
  const auto fl = analytic_flow(cap.timeline, cap.frames[10], cap.frames[11], K, 8.0, FlowDirection::Forward);
  int checked = 0;
  for (int r = 0; r < fl.raw.height; ++r)
    for (int c = 0; c < fl.raw.width; ++c) {
      if (!fl.raw.valid(r, c)) continue;
      const Eigen::Vector2d x = fl.raw.node_pixel(c, r);
      const Eigen::Vector2d y = x + fl.raw.at(c, r);
      const auto back = analytic_target(cap.timeline, cap.frames[11], cap.frames[10], K, y);
      REQUIRE(back);
      CHECK((*back - x).norm() < 1e-6);
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("flow scales linearly with focal length for small angles") {
  const auto tl = step_timeline(exp_map<double>(Eigen::Vector3d(0.001, 0.003, 0.0005)));
  const FrameMeta f0{0, 500'000'000, 0, 201, 201}, f1{1, 1'500'000'000, 0, 201, 201};
  const auto a = analytic_flow(tl, f0, f1, Intrinsics::for_frame(201, 201, 1511.8), 10.0, FlowDirection::Forward);
  const auto b = analytic_flow(tl, f0, f1, Intrinsics::for_frame(201, 201, 3023.6), 10.0, FlowDirection::Forward);
  int checked = 0;
  for (int r = 0; r < a.raw.height; ++r)
    for (int c = 0; c < a.raw.width; ++c) {
      if (!a.raw.valid(r, c) || !b.raw.valid(r, c)) continue;
      ++checked;
      const Eigen::Vector2d fa = a.raw.at(c, r), fb = b.raw.at(c, r);
      CHECK((fb - 2.0 * fa).norm() <= 0.01 * (2.0 * fa).norm());
    }
  CHECK(checked > 300);
}

TEST_CASE("analytic flow argument checks") {
  const auto tl = step_timeline(Quaternion::Identity());
  const FrameMeta f0{0, 500'000'000, 0, 16, 16}, f1{1, 1'500'000'000, 0, 16, 16};
  CHECK_THROWS_AS(analytic_flow(tl, f0, f1, Intrinsics::for_frame(16, 16), 0.0, FlowDirection::Forward),
                  InvalidArgument);
  const FrameMeta late{1, 3'000'000'000, 0, 16, 16};
  CHECK_THROWS_AS(analytic_flow(tl, f0, late, Intrinsics::for_frame(16, 16), 4.0, FlowDirection::Forward), OutOfRange);
}

TEST_CASE("static camera renders identical frames") {
  ShakeSpec s = small_spec();
  const auto cap = generate_capture(s);
  const auto K = Intrinsics::for_frame(s.width, s.height);
  const auto a = render_synthetic_frame(cap.timeline, cap.frames[0], K);
  const auto b = render_synthetic_frame(cap.timeline, cap.frames[37], K, 1);
  CHECK(a.data == b.data);
  // The texture is not flat.
  const auto [lo, hi] = std::minmax_element(a.data.begin(), a.data.end());
  CHECK(*hi - *lo > 100);
  const auto rgb = render_synthetic_frame(cap.timeline, cap.frames[0], K, 3);
  CHECK(rgb.channels == 3);
  CHECK(rgb.at(10, 10, 0) != rgb.at(10, 10, 1));
}

TEST_CASE("rolling shutter skews a rotating capture") {
  ShakeSpec s = small_spec();
  s.base = BasePath::Panning;
  s.pan_rate_deg = 90;
  const auto cap = generate_capture(s);
  const auto K = Intrinsics::for_frame(s.width, s.height);
  FrameMeta gs = cap.frames[5];
  gs.readout = 0;
  const auto rs = render_synthetic_frame(cap.timeline, cap.frames[5], K);
  const auto global = render_synthetic_frame(cap.timeline, gs, K);
  // First rows coincide (same exposure instant), later rows do not.
  for (int x = 0; x < s.width; ++x) CHECK(rs.at(x, 0) == global.at(x, 0));
  int differ = 0;
  for (int x = 0; x < s.width; ++x) differ += rs.at(x, s.height - 1) != global.at(x, s.height - 1);
  CHECK(differ > s.width / 2);
}

TEST_CASE("warping a rolling-shutter frame with the mid-frame pose recovers the global-shutter view") {
  ShakeSpec s;
  s.base = BasePath::Panning;
  s.pan_rate_deg = 90;  // 3 degrees per frame at 30 fps
  s.readout_ms = 25;
  s.frames = 12;
  const auto cap = generate_capture(s);
  const auto K = Intrinsics::for_frame(s.width, s.height);
  const auto& fm = cap.frames[6];
  const CameraPose Pv{cap.timeline.query_rotation(fm.t_mid()), Eigen::Vector2d::Zero()};
  const auto input = render_synthetic_frame(cap.timeline, fm, K);
  const auto ref = render_reference(Pv, K);
  const auto mesh = build_mesh(fm, cap.timeline, Pv, K);
  const auto out = render(mesh, input);

  double se = 0.0, se_raw = 0.0;
  int n = 0;
  for (int y = s.height / 10; y < s.height - s.height / 10; ++y)
    for (int x = s.width / 10; x < s.width - s.width / 10; ++x) {
      if (!out.coverage[static_cast<std::size_t>(y) * s.width + x]) continue;
      se += std::pow(out.image.at(x, y) - ref.at(x, y), 2);
      se_raw += std::pow(input.at(x, y) - ref.at(x, y), 2);
      ++n;
    }
  REQUIRE(n > s.width * s.height / 2);
  const double rmse = std::sqrt(se / n);
  MESSAGE("rs correction rmse " << rmse << " levels, uncorrected " << std::sqrt(se_raw / n));
  CHECK(rmse < 2.0);
  CHECK(std::sqrt(se_raw / n) > 10.0);
}
