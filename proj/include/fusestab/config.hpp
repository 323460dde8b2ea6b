#pragma once

// Plain-text run and simulation configuration: `[section]` headers and
// `key = value` lines, '#' or ';' comment lines. Every key has a default, and
// format_* emits every key so the output re-parses to the same configuration.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "fusestab/losses.hpp"
#include "fusestab/sim.hpp"
#include "fusestab/solver/net.hpp"
#include "fusestab/solver/optimize.hpp"
#include "fusestab/solver/train.hpp"

namespace fusestab {

enum class Backend { Optimize, Infer, Locked };

std::string backend_name(Backend b);
/// Throws InvalidArgument for anything but optimize, infer or locked.
Backend parse_backend(const std::string& s);

struct RunConfig {
  // [input]; relative paths are resolved against the config file's directory
  std::string gyro = "gyro.csv";
  std::string ois = "ois.csv";
  std::string frames = "frames.csv";
  std::string flow;     // directory of fwd_NNNN.flo / bwd_NNNN.flo; empty for none
  std::string images;   // directory of input frames NNNN.pgm or NNNN.ppm; empty for none
  std::string weights;  // predictor weights for the infer backend
  // [output]
  std::string output = "stabilized";
  bool render = false;  // write warped frames (needs images)
  // [camera]
  double focal = kFocalLength;
  // [solver]
  Backend backend = Backend::Optimize;
  std::uint64_t seed = 0;
  OptimizeOptions optimize;
  // [loss]
  LossConfig loss;
  // [mesh]
  int mesh_cols = 16;
  int mesh_rows = 12;
  // [net]
  NetConfig net;
  // [train]
  TrainConfig train;
  int train_captures = 4;
  int train_frames = 240;

  std::filesystem::path base_dir;  // not part of the file

  std::filesystem::path resolve(const std::string& p) const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& source, std::string_view text);
/// Reads and parses `path`; base_dir becomes the file's directory.
RunConfig read_run_config(const std::string& path);
std::string format_run_config(const RunConfig& c);

struct SimConfig {
  ShakeSpec spec;
  double focal = kFocalLength;
  double flow_spacing = 16.0;  // pixels between flow samples; <= 0 for no flow files
  bool render = false;         // write rendered rolling-shutter frames
  int channels = 1;

  void validate() const;
};

SimConfig parse_sim_config(const std::string& source, std::string_view text);
SimConfig read_sim_config(const std::string& path);
std::string format_sim_config(const SimConfig& c);

}  // namespace fusestab
