#include "doctest.h"
#include "test_support.hpp"

#include "fusestab/errors.hpp"
#include "fusestab/flow.hpp"

using namespace fusestab;

namespace {

SensorTimeline still_timeline(std::vector<OisSample> ois, Nanos end = 200'000'000) {
  return SensorTimeline::from_rotations({0, end}, {Quaternion::Identity(), Quaternion::Identity()}, std::move(ois));
}

FlowField random_field(Rng& rng, int w, int h, double scale, FlowDirection dir, double amp) {
  FlowField f(w, h, scale, dir, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      f.u(r, c) = rng.uniform(-amp, amp);
      f.v(r, c) = rng.uniform(-amp, amp);
    }
  }
  return f;
}

}  // namespace

TEST_CASE("FlowField validation and lookup") {
  CHECK_THROWS_AS(FlowField(0, 3, 1.0, FlowDirection::Forward, 0), InvalidArgument);
  CHECK_THROWS_AS(FlowField(3, 3, 0.0, FlowDirection::Forward, 0), InvalidArgument);
  FlowField f(3, 2, 10.0, FlowDirection::Forward, 0);
  f.u << 0, 1, 2, 3, 4, 5;
  CHECK(f.node_pixel(2, 1) == Eigen::Vector2d(20, 10));
  CHECK(f.sample({5.0, 5.0})->x() == doctest::Approx(2.0));
  CHECK(f.sample({20.0, 10.0})->x() == 5.0);
  CHECK_FALSE(f.sample({20.5, 0.0}));
  f.valid(1, 2) = false;
  CHECK_FALSE(f.sample({15.0, 5.0}));
  CHECK(f.sample({5.0, 5.0}));
}

TEST_CASE("remove_ois examples") {
  Rng rng(1);
  const FrameMeta fm_n{0, 10'000'000, 20'000'000, 100, 50};
  const FrameMeta fm_n1{1, 43'000'000, 20'000'000, 100, 50};
  const FlowField raw = random_field(rng, 10, 5, 10.0, FlowDirection::Forward, 3.0);

  const FlowField a = remove_ois(raw, still_timeline({}), fm_n, fm_n1);
  CHECK((a.u == raw.u).all());
  CHECK((a.v == raw.v).all());

  const FlowField b = remove_ois(raw, still_timeline({{0, {2.5, -1.0}}, {200'000'000, {2.5, -1.0}}}), fm_n, fm_n1);
  CHECK((b.u == raw.u).all());
  CHECK((b.v == raw.v).all());

  // OIS jumps from (0,0) to (1,0) between the two frames' readouts.
  const auto tl = still_timeline({{0, {0, 0}}, {30'000'000, {0, 0}}, {40'000'000, {1, 0}}, {200'000'000, {1, 0}}});
  FlowField one(1, 1, 1.0, FlowDirection::Forward, 0);
  one.u(0, 0) = 5.0;
  one.v(0, 0) = 5.0;
  const FlowField c = remove_ois(one, tl, fm_n, fm_n1);
  CHECK(c.u(0, 0) == 4.0);
  CHECK(c.v(0, 0) == 5.0);

  // Backward: source in n + 1, destination in n.
  one.direction = FlowDirection::Backward;
  const FlowField d = remove_ois(one, tl, fm_n, fm_n1);
  CHECK(d.u(0, 0) == 6.0);
  CHECK(d.v(0, 0) == 5.0);
}

TEST_CASE("remove_ois keeps the mask and reports unresolvable times") {
  Rng rng(2);
  FlowField raw = random_field(rng, 6, 4, 20.0, FlowDirection::Forward, 2.0);
  raw.valid(1, 1) = false;
  const FrameMeta fm_n{0, 10'000'000, 10'000'000, 120, 80};
  const FrameMeta fm_n1{1, 50'000'000, 10'000'000, 120, 80};
  const auto tl = still_timeline({{0, {0, 0}}, {100'000'000, {3, 1}}});
  const FlowField out = remove_ois(raw, tl, fm_n, fm_n1);
  CHECK((out.valid == raw.valid).all());
  const FrameMeta late{1, 150'000'000, 10'000'000, 120, 80};
  CHECK_THROWS_AS(remove_ois(raw, tl, fm_n, late), OutOfRange);
}

TEST_CASE("restore_ois inverts remove_ois") {
  Rng rng(3);
  const FrameMeta fm_n{0, 10'000'000, 30'000'000, 640, 480};
  const FrameMeta fm_n1{1, 43'333'333, 30'000'000, 640, 480};
  std::vector<OisSample> ois;
  for (Nanos t = 0; t <= 100'000'000; t += kSensorInterval) {
    ois.push_back({t, {4.0 * std::sin(t * 1e-7), 3.0 * std::cos(t * 2.3e-8)}});
  }
  const auto tl = still_timeline(ois, 100'000'000);
  for (auto dir : {FlowDirection::Forward, FlowDirection::Backward}) {
    const FlowField raw = random_field(rng, 33, 25, 20.0, dir, 15.0);
    const FlowField back = restore_ois(remove_ois(raw, tl, fm_n, fm_n1), tl, fm_n, fm_n1);
    CHECK((back.u - raw.u).abs().maxCoeff() < 1e-12);
    CHECK((back.v - raw.v).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("resample") {
  Rng rng(4);
  const FlowField f = random_field(rng, 9, 7, 8.0, FlowDirection::Forward, 4.0);
  const FlowField same = resample(f, 9, 7);
  CHECK((same.u == f.u).all());
  CHECK((same.v == f.v).all());
  CHECK(same.grid_scale == f.grid_scale);

  FlowField k(17, 13, 4.0, FlowDirection::Backward, 3);
  k.u.setConstant(3.0);
  k.v.setConstant(-2.0);
  for (auto [w, h] : {std::pair{1, 1}, {5, 4}, {17, 13}, {40, 31}}) {
    const FlowField r = resample(k, w, h);
    CHECK((r.u - 3.0).abs().maxCoeff() < 1e-14);
    CHECK((r.v + 2.0).abs().maxCoeff() < 1e-14);
    CHECK(r.valid.all());
    CHECK(r.direction == FlowDirection::Backward);
  }
  CHECK(resample(k, 5, 4).grid_scale == doctest::Approx(16.0));
  CHECK_THROWS_AS(resample(k, 0, 4), InvalidArgument);
}

TEST_CASE("resample with checkerboard validity matches brute-force accumulation") {
  Rng rng(5);
  FlowField f = random_field(rng, 11, 8, 1.0, FlowDirection::Forward, 5.0);
  for (int r = 0; r < f.height; ++r)
    for (int c = 0; c < f.width; ++c) f.valid(r, c) = (r + c) % 2 == 0;
  const int ow = 7, oh = 5;
  const FlowField out = resample(f, ow, oh);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      // Tent-weighted sum over every input node.
      const double gx = c * (f.width - 1.0) / (ow - 1), gy = r * (f.height - 1.0) / (oh - 1);
      double ws = 0, su = 0, sv = 0;
      for (int rr = 0; rr < f.height; ++rr) {
        for (int cc = 0; cc < f.width; ++cc) {
          const double w = std::max(0.0, 1 - std::abs(gx - cc)) * std::max(0.0, 1 - std::abs(gy - rr));
          if (w <= 0 || !f.valid(rr, cc)) continue;
          ws += w;
          su += w * f.u(rr, cc);
          sv += w * f.v(rr, cc);
        }
      }
      CHECK(out.valid(r, c) == (ws > 0));
      if (ws > 0) {
        CHECK(out.u(r, c) == doctest::Approx(su / ws).epsilon(1e-12));
        CHECK(out.v(r, c) == doctest::Approx(sv / ws).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("remove_ois commutes with resample under constant OIS") {
  Rng rng(6);
  const FrameMeta fm_n{0, 10'000'000, 30'000'000, 320, 240};
  const FrameMeta fm_n1{1, 43'000'000, 30'000'000, 320, 240};
  const auto tl = still_timeline({{0, {1.5, -0.5}}, {200'000'000, {1.5, -0.5}}});
  const FlowField f = random_field(rng, 33, 25, 10.0, FlowDirection::Forward, 6.0);
  const FlowField a = resample(remove_ois(f, tl, fm_n, fm_n1), 12, 9);
  const FlowField b = remove_ois(resample(f, 12, 9), tl, fm_n, fm_n1);
  CHECK((a.u - b.u).abs().maxCoeff() < 1e-6);
  CHECK((a.v - b.v).abs().maxCoeff() < 1e-6);
}

TEST_CASE("chain_trajectories") {
  std::vector<FlowField> zero, ones;
  for (int n = 0; n < 10; ++n) {
    zero.emplace_back(30, 30, 1.0, FlowDirection::Forward, n);
    FlowField f(30, 30, 1.0, FlowDirection::Forward, n);
    f.u.setConstant(1.0);
    ones.push_back(f);
  }
  const std::vector<Eigen::Vector2d> seeds{{0, 0}, {4.5, 7.25}};
  for (const auto& t : chain_trajectories(zero, seeds)) {
    REQUIRE(t.size() == 11);
    CHECK(t.back() == t.front());
  }
  const auto tr = chain_trajectories(ones, seeds);
  CHECK(tr[0].back() == Eigen::Vector2d(10, 0));
  CHECK(tr[1].back() == Eigen::Vector2d(14.5, 7.25));

  // Terminates on leaving the grid.
  const std::vector<Eigen::Vector2d> edge{{26.0, 3.0}};
  CHECK(chain_trajectories(ones, edge)[0].size() == 5);

  CHECK_THROWS_AS(chain_trajectories(ones, {}), InvalidArgument);
  std::swap(ones[2], ones[3]);
  CHECK_THROWS_AS(chain_trajectories(ones, seeds), InvalidArgument);
}

TEST_CASE("flow file round trip") {
  Rng rng(7);
  FlowField f = random_field(rng, 5, 4, 2.5, FlowDirection::Backward, 10.0);
  f.frame_index = 41;
  f.valid(2, 3) = false;
  for (int r = 0; r < f.height; ++r)
    for (int c = 0; c < f.width; ++c) {
      f.u(r, c) = static_cast<float>(f.u(r, c));
      f.v(r, c) = static_cast<float>(f.v(r, c));
    }
  const auto bytes = encode_flow(f);
  CHECK(bytes.size() == 24 + 5 * 4 * 9);
  const FlowField g = decode_flow(bytes);
  CHECK(g.width == 5);
  CHECK(g.height == 4);
  CHECK(g.direction == FlowDirection::Backward);
  CHECK(g.frame_index == 41);
  CHECK(g.grid_scale == 2.5);
  CHECK((g.u == f.u).all());
  CHECK((g.v == f.v).all());
  CHECK((g.valid == f.valid).all());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_flow(bad), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_flow(truncated), FormatError);
}
