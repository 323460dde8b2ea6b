#include <doctest.h>

#include <cmath>

#include "fusestab/errors.hpp"
#include "fusestab/warp.hpp"
#include "test_support.hpp"

using namespace fusestab;

namespace {

RasterFrame noise_frame(int w, int h, int c, std::uint64_t seed) {
  Rng rng(seed);
  RasterFrame f(w, h, c);
  for (auto& v : f.data) v = static_cast<std::uint8_t>(rng.below(256));
  return f;
}

SensorTimeline constant_timeline(const Quaternion& R) {
  return SensorTimeline::from_rotations({0, 2'000'000'000}, {R, R});
}

FrameMeta global_frame(int w, int h) { return FrameMeta{0, 1'000'000'000, 0, w, h}; }

Eigen::Matrix3d kmat(const Intrinsics& K) {
  Eigen::Matrix3d M;
  M << K.f, 0, K.cx, 0, K.f, K.cy, 0, 0, 1;
  return M;
}

// Bilinear sample with the same clamping rule as the renderer.
double direct_sample(const RasterFrame& f, const Eigen::Vector2d& s) { return f.sample(s.x(), s.y(), 0); }

}  // namespace

TEST_CASE("raster frame basics and pnm round trip") {
  const auto f = noise_frame(7, 5, 3, 1);
  CHECK(f.data.size() == 7u * 5u * 3u);
  const auto back = decode_pnm(encode_pnm(f));
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.channels == 3);
  CHECK(back.data == f.data);

  const auto g = noise_frame(4, 3, 1, 2);
  CHECK(decode_pnm(encode_pnm(g)).data == g.data);

  const std::string with_comment = "P5\n# made by hand\n2 1\n255\nAB";
  const auto c = decode_pnm(std::vector<std::uint8_t>(with_comment.begin(), with_comment.end()));
  CHECK(c.at(0, 0) == 'A');
  CHECK(c.at(1, 0) == 'B');

  CHECK_THROWS_AS(RasterFrame(0, 3, 1), InvalidArgument);
  CHECK_THROWS_AS(RasterFrame(3, 3, 2), InvalidArgument);
  const std::string bad = "P3\n1 1\n255\n0";
  CHECK_THROWS_AS(decode_pnm(std::vector<std::uint8_t>(bad.begin(), bad.end())), FormatError);
  const std::string trunc = "P5\n4 4\n255\nab";
  CHECK_THROWS_AS(decode_pnm(std::vector<std::uint8_t>(trunc.begin(), trunc.end())), FormatError);
  const std::string deep = "P5\n1 1\n65535\nab";
  CHECK_THROWS_AS(decode_pnm(std::vector<std::uint8_t>(deep.begin(), deep.end())), FormatError);
}

TEST_CASE("identity mesh renders a bit-identical copy") {
  for (int c : {1, 3}) {
    const auto f = noise_frame(61, 37, c, 3 + c);
    const auto res = render(identity_mesh(61, 37, 16, 12), f);
    CHECK(res.image.data == f.data);
    CHECK(coverage_ratio(res.coverage) == 1.0);
  }
}

TEST_CASE("integer translation mesh shifts and leaves a 5-column band") {
  const int W = 40, H = 20;
  const auto f = noise_frame(W, H, 1, 9);
  WarpMesh m = identity_mesh(W, H, 8, 4);
  m.src_x += 5.0;
  const auto res = render(m, f);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto i = static_cast<std::size_t>(y) * W + x;
      if (x < W - 5) {
        CHECK(res.coverage[i] == 1);
        CHECK(res.image.at(x, y) == f.at(x + 5, y));
      } else {
        CHECK(res.coverage[i] == 0);
        CHECK(res.image.at(x, y) == 0);
      }
    }
  }
  CHECK(coverage_ratio(res.coverage) == doctest::Approx(35.0 / 40.0).epsilon(1e-15));
}

TEST_CASE("half-pixel shift of a linear ramp gives the analytic values") {
  const int W = 50, H = 6;
  RasterFrame f(W, H, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) f.at(x, y) = static_cast<std::uint8_t>(4 * x + y);
  WarpMesh m = identity_mesh(W, H, 7, 3);
  m.src_x += 0.5;
  std::vector<std::uint8_t> cov;
  const auto exact = render_exact(m, f, &cov);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W - 1; ++x) {
      const auto i = static_cast<std::size_t>(y) * W + x;
      REQUIRE(cov[i] == 1);
      CHECK(exact[i] == doctest::Approx(4.0 * (x + 0.5) + y).epsilon(1e-12));
    }
    CHECK(cov[static_cast<std::size_t>(y) * W + W - 1] == 0);
  }
}

TEST_CASE("coverage ratio counts") {
  CHECK(coverage_ratio(std::vector<std::uint8_t>(10, 1)) == 1.0);
  CHECK(coverage_ratio(std::vector<std::uint8_t>(10, 0)) == 0.0);
  std::vector<std::uint8_t> half(10, 0);
  for (int i = 0; i < 5; ++i) half[i] = 1;
  CHECK(coverage_ratio(half) == 0.5);
  CHECK(coverage_ratio({}) == 0.0);
}

TEST_CASE("mesh of a locked global-shutter frame is the identity") {
  Rng rng(11);
  const Quaternion R = test::random_unit(rng);
  const auto tl = constant_timeline(R);
  const auto K = Intrinsics::for_frame(640, 480);
  const auto m = build_mesh(global_frame(640, 480), tl, CameraPose{R, Eigen::Vector2d::Zero()}, K);
  CHECK(m.cols == 16);
  CHECK(m.rows == 12);
  for (int r = 0; r <= m.rows; ++r) {
    for (int c = 0; c <= m.cols; ++c) {
      const auto p = m.vertex_pixel(c, r);
      CHECK(std::abs(m.src_x(r, c) - p.x()) < 1e-9);
      CHECK(std::abs(m.src_y(r, c) - p.y()) < 1e-9);
      CHECK(m.flags(r, c) == static_cast<std::uint8_t>(VertexFlag::Inside));
    }
  }
}

TEST_CASE("global-shutter mesh equals the closed-form homography") {
  Rng rng(12);
  const auto K = Intrinsics::for_frame(320, 240);
  for (int trial = 0; trial < 20; ++trial) {
    const Quaternion Rr = test::random_unit(rng);
    const Quaternion rel = exp_map<double>(test::random_vector(rng, 0.05));
    const Quaternion Rv = canonical(Quaternion(rel * Rr));
    const Eigen::Matrix3d H =
        kmat(K) * Rr.toRotationMatrix() * Rv.toRotationMatrix().transpose() * kmat(K).inverse();
    const auto m = build_mesh(global_frame(320, 240), constant_timeline(Rr), CameraPose{Rv, Eigen::Vector2d::Zero()}, K, 8, 6);
    for (int r = 0; r <= m.rows; ++r) {
      for (int c = 0; c <= m.cols; ++c) {
        const Eigen::Vector3d h = H * m.vertex_pixel(c, r).homogeneous();
        CHECK(std::abs(m.src_x(r, c) - h.x() / h.z()) < 1e-9);
        CHECK(std::abs(m.src_y(r, c) - h.y() / h.z()) < 1e-9);
        const bool inside = h.x() / h.z() >= 0 && h.x() / h.z() <= 319 && h.y() / h.z() >= 0 && h.y() / h.z() <= 239;
        CHECK(m.flags(r, c) == static_cast<std::uint8_t>(inside ? VertexFlag::Inside : VertexFlag::Outside));
      }
    }
  }
}

TEST_CASE("rendering a rigid global-shutter warp matches direct homography sampling") {
  const int W = 160, H = 120;
  const auto f = noise_frame(W, H, 1, 13);
  const auto K = Intrinsics::for_frame(W, H);
  const Quaternion Rr = exp_map<double>(Eigen::Vector3d(0.1, -0.2, 0.3));
  // Roll about the optical axis keeps the homography affine, so the mesh is exact inside every cell.
  const Quaternion Rv = canonical(Quaternion(exp_map<double>(Eigen::Vector3d(0, 0, 0.04)) * Rr));
  const Eigen::Matrix3d Hm = kmat(K) * Rr.toRotationMatrix() * Rv.toRotationMatrix().transpose() * kmat(K).inverse();
  const auto m = build_mesh(global_frame(W, H), constant_timeline(Rr), CameraPose{Rv, Eigen::Vector2d::Zero()}, K, 16, 12);
  std::vector<std::uint8_t> cov;
  const auto out = render_exact(m, f, &cov);
  int compared = 0;
  double worst = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Eigen::Vector3d h = Hm * Eigen::Vector3d(x, y, 1);
      const Eigen::Vector2d s(h.x() / h.z(), h.y() / h.z());
      const bool inside = s.x() >= 1e-6 && s.y() >= 1e-6 && s.x() <= W - 1 - 1e-6 && s.y() <= H - 1 - 1e-6;
      if (!inside) continue;
      REQUIRE(cov[static_cast<std::size_t>(y) * W + x] == 1);
      worst = std::max(worst, std::abs(out[static_cast<std::size_t>(y) * W + x] - direct_sample(f, s)));
      ++compared;
    }
  }
  CHECK(compared > W * H / 2);
  CHECK(worst < 1e-3);
}

TEST_CASE("mesh vertices vary continuously with the virtual pose") {
  Rng rng(14);
  const auto K = Intrinsics::for_frame(320, 240);
  const Quaternion Rr = test::random_unit(rng);
  const FrameMeta fm{0, 1'000'000'000, 20'000'000, 320, 240};
  const auto tl = SensorTimeline::from_rotations(
      {0, 2'000'000'000}, {Rr, canonical(Quaternion(exp_map<double>(Eigen::Vector3d(0, 0.3, 0)) * Rr))});
  for (int trial = 0; trial < 10; ++trial) {
    const Quaternion Rv = canonical(Quaternion(exp_map<double>(test::random_vector(rng, 0.05)) * Rr));
    const auto base = build_mesh(fm, tl, CameraPose{Rv, Eigen::Vector2d::Zero()}, K, 8, 6);
    for (double eps : {1e-4, 1e-6}) {
      const Quaternion Rp = canonical(Quaternion(exp_map<double>(test::random_vector(rng, eps)) * Rv));
      const auto pert = build_mesh(fm, tl, CameraPose{Rp, Eigen::Vector2d::Zero()}, K, 8, 6);
      const double dx = (pert.src_x - base.src_x).abs().maxCoeff();
      const double dy = (pert.src_y - base.src_y).abs().maxCoeff();
      // |d src| is bounded by a few focal lengths times the rotation change.
      CHECK(std::max(dx, dy) < 4.0 * K.f * eps);
    }
  }
}

TEST_CASE("mesh errors and dump format") {
  CHECK_THROWS_AS(WarpMesh(1, 5, 2, 2, 0), InvalidArgument);
  CHECK_THROWS_AS(WarpMesh(5, 5, 0, 2, 0), InvalidArgument);
  const auto f = noise_frame(10, 10, 1, 1);
  CHECK_THROWS_AS(render(identity_mesh(12, 10, 2, 2), f), InvalidArgument);

  const auto tl = SensorTimeline::from_rotations({0, 1000}, {Quaternion::Identity(), Quaternion::Identity()});
  const auto K = Intrinsics::for_frame(10, 10);
  CHECK_THROWS_AS(build_mesh(global_frame(10, 10), tl, CameraPose{}, K, 2, 2), OutOfRange);

  // A 120 degree turn puts part of the view behind the real camera.
  const auto tl2 = constant_timeline(Quaternion::Identity());
  const auto behind = build_mesh(global_frame(100, 100), tl2,
                                 CameraPose{exp_map<double>(Eigen::Vector3d(0, 2.1, 0)), Eigen::Vector2d::Zero()}, K, 2, 2);
  bool any_behind = false;
  for (int r = 0; r <= 2; ++r)
    for (int c = 0; c <= 2; ++c) {
      if (behind.flags(r, c) == static_cast<std::uint8_t>(VertexFlag::BehindCamera)) {
        any_behind = true;
        CHECK(behind.src_x(r, c) == -1.0);
      }
    }
  CHECK(any_behind);

  const auto dump = format_mesh(identity_mesh(4, 3, 1, 1));
  CHECK(dump.rfind("# row,col,src_x,src_y,flag\n", 0) == 0);
  CHECK(dump.find("1,1,3,2,0\n") != std::string::npos);
}
