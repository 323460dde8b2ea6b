#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "fusestab/config.hpp"
#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"
#include "fusestab/metrics.hpp"
#include "fusestab/sim.hpp"
#include "fusestab/solver/dataset.hpp"
#include "fusestab/solver/gradcheck.hpp"
#include "fusestab/solver/online.hpp"
#include "fusestab/solver/optimize.hpp"
#include "fusestab/solver/train.hpp"

namespace fs = std::filesystem;

namespace fusestab::cli {

namespace {

std::string numbered(const char* prefix, int n, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%04d%s", prefix, n, ext);
  return buf;
}

std::string flow_name(FlowDirection dir, int n) {
  return numbered(dir == FlowDirection::Forward ? "fwd_" : "bwd_", n, ".flo");
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw Error("missing " + what + ": " + p.string());
}

// Input frame n as NNNN.pgm or NNNN.ppm.
fs::path frame_file(const fs::path& dir, int n) {
  const fs::path pgm = dir / numbered("", n, ".pgm");
  if (fs::exists(pgm)) return pgm;
  const fs::path ppm = dir / numbered("", n, ".ppm");
  if (fs::exists(ppm)) return ppm;
  throw Error("missing frame: " + pgm.string());
}

std::string pnm_name(const RasterFrame& f, int n) { return numbered("", n, f.channels == 3 ? ".ppm" : ".pgm"); }

// Path of `p` as seen from directory `from`, so a file written there stays valid wherever the pair is moved.
std::string relative_to(const fs::path& p, const fs::path& from) {
  return fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(from).lexically_normal()).generic_string();
}

SequenceData load_sequence(const RunConfig& cfg) {
  const fs::path gyro = cfg.resolve(cfg.gyro), ois = cfg.resolve(cfg.ois), frames = cfg.resolve(cfg.frames);
  require_file(gyro, "gyro log");
  require_file(ois, "OIS log");
  require_file(frames, "frame metadata");
  SequenceData seq;
  const auto g = read_gyro_log(gyro.string());
  const auto o = read_ois_log(ois.string());
  seq.timeline = integrate_gyro(g, o);
  seq.frames = read_frame_meta(frames.string());
  if (seq.frames.empty()) throw FormatError(frames.string(), 0, "no frames");
  seq.K = Intrinsics::for_frame(seq.frames[0].width, seq.frames[0].height, cfg.focal);
  if (!cfg.flow.empty()) {
    const fs::path dir = cfg.resolve(cfg.flow);
    for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i) {
      const int n = static_cast<int>(i);
      for (FlowDirection d : {FlowDirection::Forward, FlowDirection::Backward}) {
        const fs::path p = dir / flow_name(d, n);
        require_file(p, "flow file");
        FlowField f = read_flow_file(p.string());
        if (f.direction != d || f.frame_index != n) throw FormatError(p.string(), 0, "flow direction or pair index mismatch");
        (d == FlowDirection::Forward ? seq.forward : seq.backward).push_back(std::move(f));
      }
    }
  }
  seq.validate();
  return seq;
}

std::string format_homographies(std::span<const Eigen::Matrix3d> H) {
  std::string s = "# frame,h00,h01,h02,h10,h11,h12,h20,h21,h22\n";
  for (std::size_t i = 0; i < H.size(); ++i) {
    s += std::to_string(i);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) s += "," + io::fmt(H[i](r, c));
    }
    s += "\n";
  }
  return s;
}

std::vector<Eigen::Matrix3d> read_homographies(const std::string& path) {
  std::vector<Eigen::Matrix3d> out;
  io::for_each_csv_row(path, io::read_file(path), [&](int line, const std::vector<std::string>& f) {
    if (f.size() != 10) throw FormatError(path, line, "expected 10 fields, got " + std::to_string(f.size()));
    if (io::parse_int(path, line, f[0]) != static_cast<std::int64_t>(out.size())) {
      throw FormatError(path, line, "frames must be listed in order from 0");
    }
    Eigen::Matrix3d H;
    for (int k = 0; k < 9; ++k) H(k / 3, k % 3) = io::parse_double(path, line, f[static_cast<std::size_t>(k) + 1]);
    out.push_back(H);
  });
  return out;
}

}  // namespace

void simulate(const std::string& spec_path, const std::string& outdir) {
  const SimConfig sc = read_sim_config(spec_path);
  const Capture cap = generate_capture(sc.spec);
  const Intrinsics K = Intrinsics::for_frame(sc.spec.width, sc.spec.height, sc.focal);

  io::OutputStage out(outdir);
  out.write("gyro.csv", format_gyro_log(cap.gyro));
  out.write("ois.csv", format_ois_log(cap.ois));
  out.write("frames.csv", format_frame_meta(cap.frames));
  out.write("real_path.csv", format_path(cap.real_path));
  out.write("base_path.csv", format_path(cap.base_path));
  out.write("sim.ini", format_sim_config(sc));

  RunConfig rc;
  rc.focal = sc.focal;
  if (sc.flow_spacing > 0.0) {
    rc.flow = "flow";
    for (std::size_t i = 0; i + 1 < cap.frames.size(); ++i) {
      for (FlowDirection d : {FlowDirection::Forward, FlowDirection::Backward}) {
        const FlowField f = analytic_flow(cap.timeline, cap.frames[i], cap.frames[i + 1], K, sc.flow_spacing, d).raw;
        out.write_binary(fs::path("flow") / flow_name(d, static_cast<int>(i)), encode_flow(f));
      }
    }
  }
  if (sc.render) {
    rc.images = "frames";
    rc.render = true;
    for (const FrameMeta& fm : cap.frames) {
      const RasterFrame img = render_synthetic_frame(cap.timeline, fm, K, sc.channels);
      out.write_binary(fs::path("frames") / pnm_name(img, fm.index), encode_pnm(img));
    }
  }
  // A ready-to-run stabilization config for this capture.
  out.write("config.ini", format_run_config(rc));
  out.commit();
  std::cout << "simulate: " << cap.frames.size() << " frames -> " << outdir << "\n";
}

void stabilize(const std::string& config_path, const StabilizeOverrides& o) {
  RunConfig cfg = read_run_config(config_path);
  if (o.backend) cfg.backend = parse_backend(*o.backend);
  if (o.seed) cfg.seed = cfg.train.seed = *o.seed;
  const fs::path outdir = o.output ? fs::path(*o.output) : cfg.resolve(cfg.output);
  if (cfg.render && cfg.images.empty()) throw InvalidArgument("stabilize: render needs an images directory");

  const SequenceData seq = load_sequence(cfg);
  const std::vector<FlowPairSamples> pairs = flow_pairs(seq, cfg.loss.flow);
  const std::vector<double> times = seq.times();
  const std::vector<FrameLossInputs> inputs = prepare_frame_inputs(seq.timeline, seq.frames, times, pairs, cfg.loss);

  OnlineOptions oo;
  oo.mesh_cols = cfg.mesh_cols;
  oo.mesh_rows = cfg.mesh_rows;
  oo.history = cfg.loss.history;

  const auto t0 = std::chrono::steady_clock::now();
  OnlineRun run;
  if (cfg.backend == Backend::Infer) {
    if (cfg.weights.empty()) throw InvalidArgument("stabilize: the infer backend needs [input] weights");
    const fs::path wpath = cfg.resolve(cfg.weights);
    require_file(wpath, "weights file");
    PredictorNet net(cfg.net, cfg.seed);
    read_weights_file(wpath.string(), net);
    OnlineStabilizer stab(net, seq.timeline, seq.K, inputs.front().real_rotation, oo);
    run = run_online(stab, seq);
  } else {
    VirtualPath path;
    if (cfg.backend == Backend::Optimize) {
      path = optimize_path(inputs, times, seq.K, cfg.loss, cfg.optimize).path;
    } else {
      path.backend = "locked";
      path.times = times;
      for (const auto& in : inputs) path.rotations.push_back(in.real_rotation);
      path.seed = path.rotations.front();
    }
    OnlineStabilizer stab(std::move(path), seq.timeline, seq.K, oo);
    run = run_online(stab, seq);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  io::OutputStage out(outdir);
  std::vector<PathRecord> records;
  for (std::size_t i = 0; i < run.path.size(); ++i) {
    records.push_back({static_cast<int>(i), run.path.times[i], run.path.pose(i)});
  }
  out.write("path.csv", format_path(records));

  const auto losses = path_losses(inputs, seq.K, cfg.loss, run.path.rotations);
  std::string report = "# frame,L_c0,L_c1,L_p,L_d,L_f,total\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    report += format_loss_line(static_cast<int>(i), losses[i], cfg.loss.weights) + "\n";
  }
  out.write("losses.csv", report);

  std::vector<Eigen::Matrix3d> H;
  for (const WarpMesh& m : run.meshes) {
    out.write(fs::path("meshes") / numbered("", m.frame_index, ".csv"), format_mesh(m));
    H.push_back(mesh_homography(m));
  }
  out.write("homographies.csv", format_homographies(H));

  if (cfg.render) {
    const fs::path dir = cfg.resolve(cfg.images);
    for (const WarpMesh& m : run.meshes) {
      const RasterFrame src = read_pnm(frame_file(dir, seq.frames[static_cast<std::size_t>(m.frame_index)].index).string());
      const RasterFrame img = render(m, src).image;
      out.write_binary(fs::path("frames") / pnm_name(img, m.frame_index), encode_pnm(img));
    }
  }

  // Effective configuration; input paths are rewritten relative to the output directory.
  RunConfig eff = cfg;
  for (std::string* p : {&eff.gyro, &eff.ois, &eff.frames, &eff.flow, &eff.images, &eff.weights}) {
    if (!p->empty()) *p = relative_to(cfg.resolve(*p), outdir);
  }
  eff.output = ".";
  out.write("config.ini", format_run_config(eff));
  out.commit();

  const LossBreakdown sum = sum_breakdown(losses);
  std::cout << "stabilize: backend " << backend_name(cfg.backend) << ", " << run.meshes.size() << " frames, "
            << "loss " << sum.total(cfg.loss.weights) << "\n";
  std::cout << "throughput: " << (seconds > 0.0 ? run.meshes.size() / seconds : 0.0) << " frames/s (warp "
            << run.fps() << " frames/s)\n";
}

void train(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> output) {
  RunConfig cfg = read_run_config(config_path);
  if (seed) cfg.seed = cfg.train.seed = *seed;
  const fs::path outdir = output ? fs::path(*output) : cfg.resolve(cfg.output);

  std::vector<PreparedSequence> data;
  for (const ShakeSpec& s : synthetic_training_specs(cfg.seed, cfg.train_captures, cfg.train_frames)) {
    data.emplace_back(sequence_from_capture(generate_capture(s), 16.0, cfg.focal), cfg.net, cfg.loss);
  }
  PredictorNet net(cfg.net, cfg.seed);
  const TrainResult r = train(net, data, cfg.loss, cfg.train, [](const TrainRecord& x) {
    if (x.iter % 50 == 0) std::cout << "stage " << x.stage << " iteration " << x.iter << " loss " << x.total << "\n";
  });

  io::OutputStage out(outdir);
  out.write_binary("weights.bin", encode_weights(net));
  out.write("telemetry.csv", format_telemetry(r.curve));
  out.write("eval.csv", format_telemetry(r.eval));
  RunConfig eff = cfg;
  eff.weights = "weights.bin";
  eff.backend = Backend::Infer;
  eff.output = "stabilized";
  for (std::string* p : {&eff.gyro, &eff.ois, &eff.frames, &eff.flow, &eff.images}) {
    if (!p->empty()) *p = relative_to(cfg.resolve(*p), outdir);
  }
  out.write("config.ini", format_run_config(eff));
  out.commit();
  for (const TrainRecord& e : r.eval) {
    std::cout << "eval stage " << e.stage << " iteration " << e.iter << " loss " << e.total << "\n";
  }
}

void evaluate(const std::string& in_dir, const std::string& out_dir) {
  const fs::path in(in_dir);
  const fs::path path_file = in / "path.csv", h_file = in / "homographies.csv";
  require_file(path_file, "virtual path");
  require_file(h_file, "homographies");
  std::vector<Quaternion> path;
  for (const PathRecord& r : read_path_file(path_file.string())) path.push_back(r.pose.R);
  const std::vector<Eigen::Matrix3d> H = read_homographies(h_file.string());
  if (H.size() != path.size()) throw FormatError(h_file.string(), 0, "frame count differs from path.csv");

  // Frame correlation when the stabilize run rendered its output and knows its input frames.
  std::vector<RasterFrame> inputs, outputs;
  const fs::path cfg_file = in / "config.ini";
  if (fs::exists(cfg_file) && fs::is_directory(in / "frames")) {
    const RunConfig cfg = read_run_config(cfg_file.string());
    if (!cfg.images.empty()) {
      for (std::size_t i = 0; i < path.size(); ++i) {
        const int n = static_cast<int>(i);
        inputs.push_back(read_pnm(frame_file(cfg.resolve(cfg.images), n).string()));
        outputs.push_back(read_pnm(frame_file(in / "frames", n).string()));
      }
    }
  }
  const MetricReport r =
      evaluate_metrics(path, H, inputs.empty() ? nullptr : &inputs, outputs.empty() ? nullptr : &outputs);

  io::OutputStage out(out_dir);
  out.write("report.csv", format_report(r));
  out.write("series.csv", format_metric_series(r));
  out.commit();
  std::cout << format_report(r);
}

bool gradcheck(std::uint64_t seed, int instances) {
  GradcheckOptions opts;
  opts.seed = seed;
  opts.instances = instances;
  const GradcheckResult r = run_gradcheck(opts);
  std::cout << format_gradcheck(r);
  return r.passed;
}

}  // namespace fusestab::cli
