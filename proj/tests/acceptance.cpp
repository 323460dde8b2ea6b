// Acceptance run: one PASS/FAIL line per criterion. Arguments select criteria
// by number; no arguments runs all of them. Exit status 0 iff all selected pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fusestab/io.hpp"
#include "fusestab/losses.hpp"
#include "fusestab/metrics.hpp"
#include "fusestab/random.hpp"
#include "fusestab/sim.hpp"
#include "fusestab/solver/dataset.hpp"
#include "fusestab/solver/gradcheck.hpp"
#include "fusestab/solver/optimize.hpp"
#include "fusestab/solver/train.hpp"

namespace fs = std::filesystem;
using namespace fusestab;

namespace {

constexpr double kDeg = M_PI / 180.0;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [failed]");
  }
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

double angle_between(const Quaternion& a, const Quaternion& b) { return spherical_angle(a, b); }

Quaternion random_unit(Rng& rng) {
  return canonical(normalized(Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal())));
}

Eigen::Vector3d random_vector(Rng& rng, double max_norm) {
  Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized() * rng.uniform(0.0, max_norm);
}

// 1. Gyro round trip.
Outcome gyro_round_trip() {
  Outcome o;
  double worst_rate = 0.0;
  for (const bool shake : {false, true}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      ShakeSpec s;
      s.seed = seed;
      if (shake) {
        s.shake.amplitude = 1.0;
      } else {
        s.base = BasePath::Panning;
        s.pan_rate_deg = 20.0 * static_cast<double>(seed);
        s.pan_axis = Eigen::Vector3d(0.2, 1.0, -0.3 * static_cast<double>(seed));
      }
      const Capture cap = generate_capture(s);
      const double seconds = static_cast<double>(cap.gyro.back().t - cap.gyro.front().t) * 1e-9;
      const auto rots = cap.timeline.rotations();
      double worst = 0.0;
      for (std::size_t k = 0; k < rots.size(); ++k) worst = std::max(worst, angle_between(rots[k], cap.truth[k]));
      worst_rate = std::max(worst_rate, worst / seconds);
    }
  }
  o.require(worst_rate < 1e-7, "worst drift " + num(worst_rate) + " rad/s (< 1e-7)");

  std::vector<GyroSample> samples;
  for (Nanos t = 0; t <= 1'000'000'000; t += kSensorInterval) samples.push_back({t, Eigen::Vector3d(0, 0, M_PI / 2)});
  const SensorTimeline tl = integrate_gyro(samples);
  const double direct = std::abs(angle_between(tl.rotations().back(), tl.rotations().front()) - M_PI / 2);

  ShakeSpec pan;
  pan.base = BasePath::Panning;
  pan.pan_rate_deg = 90.0;
  pan.pan_axis = Eigen::Vector3d::UnitZ();
  pan.frames = 60;
  const Capture cap = generate_capture(pan);
  const Nanos t0 = cap.gyro[20].t;
  const double simulated = std::abs(
      angle_between(cap.timeline.query_rotation(static_cast<double>(t0 + 1'000'000'000)),
                    cap.timeline.query_rotation(static_cast<double>(t0))) -
      M_PI / 2);
  o.require(direct < 1e-9 && simulated < 1e-9,
            "omega (0,0,pi/2) for 1 s: |angle - 90 deg| = " + num(direct) + " rad, simulated " + num(simulated));
  return o;
}

// 2. Geometry oracle.
Outcome geometry_oracle() {
  Outcome o;
  Rng rng(2024);
  const Intrinsics K = Intrinsics::for_frame(1920, 1080);
  double worst = 0.0, worst_trip = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const Quaternion Rr = random_unit(rng);
    const Quaternion Rv = canonical(Quaternion(exp_map<double>(random_vector(rng, 0.2)) * Rr));
    const Eigen::Vector2d O(rng.uniform(-20, 20), rng.uniform(-20, 20));
    const CameraPose Pr{Rr, O}, Pv{Rv, Eigen::Vector2d::Zero()};
    const Eigen::Vector2d x(rng.uniform(0, K.width - 1), rng.uniform(0, K.height - 1));
    // x_v = K R_v R_r^T K_O^-1 x_r with the principal point of K_O shifted by O.
    Eigen::Matrix3d Kv, Kr;
    Kv << K.f, 0, K.cx, 0, K.f, K.cy, 0, 0, 1;
    Kr << K.f, 0, K.cx + O.x(), 0, K.f, K.cy + O.y(), 0, 0, 1;
    const Eigen::Matrix3d H = Kv * Rv.toRotationMatrix() * Rr.toRotationMatrix().transpose() * Kr.inverse();
    const Eigen::Vector3d p = H * x.homogeneous();
    if (p.z() <= 0.0) continue;
    const Eigen::Vector2d xv = project_real_to_virtual(x, Pr, Pv, K);
    worst = std::max(worst, (xv - p.hnormalized()).norm());
    worst_trip = std::max(worst_trip, (project_virtual_to_real(xv, Pr, Pv, K) - x).norm());
  }
  o.require(worst < 1e-9, "max deviation from the 3x3 homography " + num(worst) + " px");
  o.require(worst_trip < 1e-9, "round trip " + num(worst_trip) + " px");
  return o;
}

// 3. Loss suite invariants.
Outcome loss_invariants() {
  Outcome o;
  const LossConfig cfg;

  // Non-negativity on a shaky capture under random virtual paths.
  ShakeSpec s;
  s.width = 320;
  s.height = 240;
  s.frames = 40;
  s.shake.amplitude = 1.0;
  s.ois.amplitude = 1.0;
  s.seed = 8;
  const SequenceData seq = sequence_from_capture(generate_capture(s), 16.0, kFocalLength / 2);
  const auto pairs = flow_pairs(seq, cfg.flow);
  const auto times = seq.times();
  const auto inputs = prepare_frame_inputs(seq.timeline, seq.frames, times, pairs, cfg);
  Rng rng(3);
  double most_negative = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Quaternion> path;
    for (const auto& in : inputs) path.push_back(exp_map<double>(random_vector(rng, 0.05 * trial)) * in.real_rotation);
    for (const auto& b : path_losses(inputs, seq.K, cfg, path)) {
      for (double v : {b.c0, b.c1, b.p, b.d, b.f}) most_negative = std::min(most_negative, v);
    }
  }
  o.require(most_negative >= 0.0, "smallest term " + num(most_negative));

  // Locked path of a static capture.
  ShakeSpec still = s;
  still.shake.amplitude = 0.0;
  still.ois.amplitude = 0.0;
  const SequenceData sseq = sequence_from_capture(generate_capture(still), 16.0, kFocalLength / 2);
  const auto spairs = flow_pairs(sseq, cfg.flow);
  const auto stimes = sseq.times();
  const auto sinputs = prepare_frame_inputs(sseq.timeline, sseq.frames, stimes, spairs, cfg);
  std::vector<Quaternion> locked;
  for (const auto& in : sinputs) locked.push_back(in.real_rotation);
  double largest = 0.0;
  for (const auto& b : path_losses(sinputs, sseq.K, cfg, locked)) {
    for (double v : {b.c0, b.c1, b.p, b.d, b.f}) largest = std::max(largest, v);
  }
  o.require(largest < 1e-20, "locked static capture: largest term " + num(largest));

  // Global re-orientation.
  double smooth_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Quaternion a = random_unit(rng), b = random_unit(rng), c = random_unit(rng), g = random_unit(rng);
    smooth_dev = std::max({smooth_dev, std::abs(loss_c0<double>(g * a, g * b) - loss_c0(a, b)),
                           std::abs(loss_c0<double>(a * g, b * g) - loss_c0(a, b)),
                           std::abs(loss_c1<double>(g * a, g * b, g * c) - loss_c1(a, b, c)),
                           std::abs(loss_c1<double>(a * g, b * g, c * g) - loss_c1(a, b, c))});
  }
  o.require(smooth_dev < 1e-12, "C0/C1 under re-orientation " + num(smooth_dev));

  VirtualPath vp;
  vp.seed = random_unit(rng);
  for (std::size_t i = 0; i < times.size(); ++i) {
    vp.times.push_back(times[i]);
    vp.rotations.push_back(canonical(Quaternion(exp_map<double>(random_vector(rng, 0.03)) * inputs[i].real_rotation)));
  }
  double hist_dev = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Quaternion G = random_unit(rng);
    VirtualPath vg = vp;
    for (auto& q : vg.rotations) q = canonical(Quaternion(q * G));
    vg.seed = canonical(Quaternion(vp.seed * G));
    const SensorTimeline tg = seq.timeline.reoriented(G);
    const double t = times[static_cast<std::size_t>(20 + trial % 10)];
    const MotionHistory h = build_history(seq.timeline, vp, t, cfg.history);
    const MotionHistory hg = build_history(tg, vg, t, cfg.history);
    for (std::size_t i = 0; i < h.real.size(); ++i) hist_dev = std::max(hist_dev, angle_between(h.real[i], hg.real[i]));
    for (std::size_t i = 0; i < h.virt.size(); ++i) hist_dev = std::max(hist_dev, angle_between(h.virt[i], hg.virt[i]));
  }
  o.require(hist_dev < 1e-12, "motion history under re-orientation " + num(hist_dev));

  const DistortionParams dp;
  const Quaternion I = Quaternion::Identity();
  const auto about = [](double a) { return Quaternion(exp_map<double>(Eigen::Vector3d(0.3, -0.5, 0.8).normalized() * a)); };
  const double d0 = loss_distortion(I, I, dp), d1 = loss_distortion(about(dp.beta0), I, dp),
               d2 = loss_distortion(about(2 * dp.beta0), I, dp);
  o.require(d0 == 0.0 && std::abs(d1 - dp.beta0 / 2) < 1e-12 && std::abs(d2 - 2 * dp.beta0) < 1e-4,
            "distortion at 0, b0, 2 b0: " + num(d0) + ", " + num(d1) + ", " + num(d2));
  return o;
}

// 4. Gradient contract.
Outcome gradient_contract() {
  Outcome o;
  const GradcheckResult r = run_gradcheck(GradcheckOptions{});
  o.require(r.passed && r.worst < 1e-4 && r.instances >= 20,
            std::to_string(r.instances) + " instances, " + std::to_string(r.tensors.size()) + " tensors, worst " +
                num(r.worst) + " (< 1e-4)");
  return o;
}

// 5. Optimizer efficacy.
Outcome optimizer_efficacy() {
  Outcome o;
  const LossConfig cfg;
  double worst_ratio = 0.0, worst_gain = 1.0, slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    ShakeSpec s;
    s.frames = 240;
    s.fps = 30.0;
    s.shake = BandNoise{1.0, 2.0, 8.0, 8};
    s.seed = seed;
    const SequenceData seq = sequence_from_capture(generate_capture(s), 16.0);
    const auto pairs = flow_pairs(seq, cfg.flow);
    const auto times = seq.times();
    const auto inputs = prepare_frame_inputs(seq.timeline, seq.frames, times, pairs, cfg);
    const OptimizeResult r = optimize_path(inputs, times, seq.K, cfg);
    std::vector<Quaternion> locked;
    for (const auto& in : inputs) locked.push_back(in.real_rotation);
    const LossBreakdown lb = sum_breakdown(path_losses(inputs, seq.K, cfg, locked));
    const LossBreakdown ob = sum_breakdown(r.per_frame);
    const double ratio = (ob.c0 + ob.c1) / (lb.c0 + lb.c1);
    const double gain = stability(r.path.rotations) - stability(locked);
    worst_ratio = std::max(worst_ratio, ratio);
    worst_gain = std::min(worst_gain, gain);
    slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  o.require(worst_ratio <= 0.05, "worst smoothness ratio " + num(worst_ratio) + " (<= 0.05)");
  o.require(worst_gain > 0.0, "smallest stability gain " + num(worst_gain));
  o.require(slowest < 300.0, "slowest capture " + num(slowest) + " s");
  return o;
}

// 6. Rolling-shutter correction.
Outcome rolling_shutter() {
  Outcome o;
  ShakeSpec s;
  s.base = BasePath::Panning;
  s.pan_rate_deg = 90.0;  // 3 degrees per frame at 30 fps
  s.readout_ms = 25.0;
  s.frames = 12;
  const Capture cap = generate_capture(s);
  const Intrinsics K = Intrinsics::for_frame(s.width, s.height);
  const FrameMeta& fm = cap.frames[6];
  const CameraPose Pv{cap.timeline.query_rotation(fm.t_mid()), Eigen::Vector2d::Zero()};
  const RasterFrame input = render_synthetic_frame(cap.timeline, fm, K);
  const RasterFrame ref = render_reference(Pv, K);
  const RenderResult out = render(build_mesh(fm, cap.timeline, Pv, K), input);
  double se = 0.0;
  int n = 0;
  for (int y = s.height / 10; y < s.height - s.height / 10; ++y) {
    for (int x = s.width / 10; x < s.width - s.width / 10; ++x) {
      if (!out.coverage[static_cast<std::size_t>(y) * s.width + x]) continue;
      se += std::pow(out.image.at(x, y) - ref.at(x, y), 2);
      ++n;
    }
  }
  const double rmse = n > 0 ? std::sqrt(se / n) : INFINITY;
  o.require(n > s.width * s.height / 2, std::to_string(n) + " interior pixels covered");
  o.require(rmse < 2.0, "interior rmse " + num(rmse) + "/255 (< 2/255)");
  return o;
}

// 7. OIS cancellation.
Outcome ois_cancellation() {
  Outcome o;
  double worst = 0.0, moved = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    ShakeSpec s;
    s.frames = 30;
    s.seed = seed;
    s.shake.amplitude = 1.0;
    s.ois.amplitude = 3.0;
    const Capture cap = generate_capture(s);
    const Intrinsics K = Intrinsics::for_frame(s.width, s.height);
    for (std::size_t n = 0; n + 1 < cap.frames.size(); n += 7) {
      for (FlowDirection dir : {FlowDirection::Forward, FlowDirection::Backward}) {
        const AnalyticFlow fl = analytic_flow(cap.timeline, cap.frames[n], cap.frames[n + 1], K, 8.0, dir);
        const FlowField cleaned = remove_ois(fl.raw, cap.timeline, cap.frames[n], cap.frames[n + 1]);
        for (int r = 0; r < fl.raw.height; ++r) {
          for (int c = 0; c < fl.raw.width; ++c) {
            if (!fl.raw.valid(r, c)) continue;
            worst = std::max(worst, (cleaned.at(c, r) - fl.ois_free.at(c, r)).norm());
            moved = std::max(moved, (fl.raw.at(c, r) - fl.ois_free.at(c, r)).norm());
          }
        }
      }
    }
  }
  o.require(worst < 1e-6, "max residual " + num(worst) + " px (OIS moved flow by up to " + num(moved) + " px)");
  return o;
}

// Runs the command-line tool; returns its exit status.
int run_tool(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + FUSESTAB_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fusestab_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 8. Multi-stage schedule, through the train command.
Outcome training_schedule() {
  Outcome o;
  const TrainConfig defaults;
  o.require(defaults.boundaries() == std::array<int, 3>{200, 300, 800}, "boundaries 200/300/800");

  const fs::path dir = scratch("train");
  io::write_file_atomic(dir / "train.ini", "[output]\ndir = out\n");
  const int status = run_tool("train \"" + (dir / "train.ini").string() + "\"", dir / "train.log");
  o.require(status == 0, "train exit " + std::to_string(status));
  if (status != 0) return o;

  const auto curve = parse_telemetry("telemetry.csv", io::read_file(dir / "out" / "telemetry.csv"));
  bool rows_ok = curve.size() == 800;
  for (std::size_t i = 0; rows_ok && i < curve.size(); ++i) {
    rows_ok = curve[i].iter == static_cast<int>(i) && curve[i].stage == defaults.stage_of(static_cast<int>(i));
  }
  o.require(rows_ok, "telemetry validates: " + std::to_string(curve.size()) + " rows, stage switches at 200 and 300");

  const auto eval = parse_telemetry("eval.csv", io::read_file(dir / "out" / "eval.csv"));
  const bool eval_ok = eval.size() == 4 && eval[0].iter == 0 && eval[1].iter == 200 && eval[2].iter == 300 &&
                       eval[3].iter == 800 && eval[0].stage == 1 && eval[1].stage == 1;
  o.require(eval_ok, "evaluation rows at 0/200/300/800");
  if (!eval_ok) return o;
  const double drop = 1.0 - eval[1].total / eval[0].total;
  o.require(drop >= 0.5, "stage-1 loss " + num(eval[0].total) + " -> " + num(eval[1].total) + ", drop " +
                             num(100.0 * drop) + "% (>= 50%)");
  return o;
}

// 9. Metric sanity.
Outcome metric_sanity() {
  Outcome o;
  const WarpMesh id = identity_mesh(640, 480, 16, 12);
  const std::vector<Eigen::Matrix3d> H(128, mesh_homography(id));
  const std::vector<Quaternion> still(128, Quaternion::Identity());
  const MetricReport r = evaluate_metrics(still, H);
  o.require(r.distortion == 1.0 && r.fov_ratio == 1.0,
            "identity: distortion " + io::fmt(r.distortion) + ", fov " + io::fmt(r.fov_ratio));

  Eigen::Matrix3d aniso = Eigen::Matrix3d::Identity();
  aniso(1, 1) = 0.8;
  std::vector<Eigen::Vector2d> src, dst;
  for (int j = 0; j < 8; ++j) {
    for (int i = 0; i < 8; ++i) {
      src.emplace_back(60.0 * i, 50.0 * j);
      dst.push_back((aniso * src.back().homogeneous()).hnormalized());
    }
  }
  const double d = homography_distortion(fit_homography(src, dst));
  o.require(std::abs(d - 0.8) < 1e-9, "diag(1, 0.8): distortion " + io::fmt(d));

  const auto yaw_path = [](double hz) {
    std::vector<Quaternion> p;
    for (int i = 0; i < 256; ++i) {
      p.emplace_back(exp_map<double>(Eigen::Vector3d(0, 0.02 * std::sin(2 * M_PI * hz * i / 30.0), 0)));
    }
    return p;
  };
  const double slow = stability(yaw_path(0.5)), fast = stability(yaw_path(8.0));
  o.require(slow > fast, "stability 0.5 Hz " + num(slow) + " > 8 Hz " + num(fast));
  return o;
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<fs::path> files;
  for (const fs::path& root : {a, b}) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
    }
  }
  for (const fs::path& f : files) {
    if (!fs::exists(a / f) || !fs::exists(b / f) || io::read_file(a / f) != io::read_file(b / f)) {
      why = f.generic_string();
      return false;
    }
  }
  return !files.empty();
}

// 10. End-to-end determinism.
Outcome end_to_end() {
  Outcome o;
  const std::string spec =
      "[camera]\nwidth = 320\nheight = 240\nframes = 96\nfocal = 755.9\n\n[motion]\nseed = 11\n\n"
      "[shake]\namplitude_deg = 1\n\n[ois]\namplitude_px = 1\n\n[output]\nrender = true\n";
  fs::path runs[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = scratch("e2e" + std::to_string(k));
    runs[k] = dir;
    io::write_file_atomic(dir / "sim.ini", spec);
    const std::string d = "\"" + dir.string() + "/";
    const int s1 = run_tool("simulate " + d + "sim.ini\" " + d + "capture\"", dir / "simulate.log");
    const int s2 = run_tool("stabilize " + d + "capture/config.ini\" --seed 0 --output " + d + "stabilized\"",
                            dir / "stabilize.log");
    const int s3 = run_tool("evaluate " + d + "stabilized\" " + d + "report\"", dir / "evaluate.log");
    const int s4 = run_tool("stabilize " + d + "capture/config.ini\" --backend locked --output " + d + "locked\"",
                            dir / "locked.log");
    const int s5 = run_tool("evaluate " + d + "locked\" " + d + "locked_report\"", dir / "locked_eval.log");
    if (k == 0) {
      o.require(s1 == 0 && s2 == 0 && s3 == 0, "simulate, stabilize, evaluate exit " + std::to_string(s1) + "/" +
                                                   std::to_string(s2) + "/" + std::to_string(s3));
      o.require(s4 == 0 && s5 == 0, "locked pipeline exit " + std::to_string(s4) + "/" + std::to_string(s5));
    }
  }
  for (const char* sub : {"capture", "stabilized", "report", "locked", "locked_report"}) {
    std::string why;
    o.require(same_tree(runs[0] / sub, runs[1] / sub, why),
              std::string(sub) + " bit-identical" + (why.empty() ? "" : " (differs: " + why + ")"));
  }
  const fs::path dir = runs[0];
  io::write_file_atomic(dir / "broken.ini", "[input]\ngyro = no_such_gyro.csv\n");
  const int missing = run_tool("stabilize \"" + (dir / "broken.ini").string() + "\"", dir / "missing.log");
  const std::string log = io::read_file(dir / "missing.log");
  o.require(missing != 0 && log.find("no_such_gyro.csv") != std::string::npos,
            "missing gyro log: exit " + std::to_string(missing) + ", diagnostic names the path");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gyro round trip", gyro_round_trip},
      {"geometry oracle", geometry_oracle},
      {"loss invariants", loss_invariants},
      {"gradient contract", gradient_contract},
      {"optimizer efficacy", optimizer_efficacy},
      {"rolling-shutter correction", rolling_shutter},
      {"OIS cancellation", ois_cancellation},
      {"multi-stage schedule", training_schedule},
      {"metric sanity", metric_sanity},
      {"end-to-end determinism", end_to_end},
  };
  const double limits[] = {1.0, 1e9, 1e9, 60.0, 1500.0, 10.0, 1e9, 900.0, 1e9, 1e9};

  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limits[i] < 1e9) o.require(seconds < limits[i], "runtime " + num(seconds) + " s (< " + num(limits[i]) + " s)");
    all = all && o.pass;
    std::printf("criterion %d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / ("fusestab_acceptance_" + std::to_string(::getpid())));
  return all ? 0 : 1;
}
