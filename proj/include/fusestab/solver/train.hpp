#pragma once

// Unsupervised three-stage training of the predictor on prepared captures.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusestab/losses.hpp"
#include "fusestab/sim.hpp"
#include "fusestab/solver/net.hpp"
#include "fusestab/solver/sequence.hpp"

namespace fusestab {

struct TrainConfig {
  std::array<int, 3> stage_iterations{200, 100, 500};
  int window = 100;            // frames per subsequence
  double augment_deg = 6.0;    // bound on the random seed-pose rotation
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double clip_norm = 0.1;      // global gradient norm cap; <= 0 disables
  int eval_windows = 8;        // fixed windows scored at iteration 0 and at every stage end
  std::uint64_t seed = 0;

  void validate() const;
  int total_iterations() const;
  /// Stage (1, 2 or 3) that global iteration `iter` belongs to.
  int stage_of(int iter) const;
  /// Global iteration at which each stage ends: 200, 300, 800 by default.
  std::array<int, 3> boundaries() const;
};

/// One telemetry row: mean per-frame losses of a window (or of the evaluation
/// windows), L_total under the weights of `stage`.
struct TrainRecord {
  int stage = 1;
  int iter = 0;
  double total = 0.0;
  LossBreakdown terms;
};

struct TrainResult {
  std::vector<TrainRecord> curve;  // one row per iteration, before its update
  std::vector<TrainRecord> eval;   // iteration 0, then the end of each stage
};

/// Trains `net` in place. Each iteration rolls the net over one random
/// window of one random capture, seeded at the window's first real pose
/// rotated by up to augment_deg, and takes one momentum step on the gradient
/// of the window's mean loss. Throws NumericError naming the stage and
/// iteration when a loss exceeds 1e6 or is not finite.
TrainResult train(PredictorNet& net, std::span<const PreparedSequence> data, const LossConfig& loss,
                  const TrainConfig& cfg, const std::function<void(const TrainRecord&)>& progress = {});

/// Mean loss of `net` over fixed windows, L_total under `weights`.
TrainRecord evaluate_windows(const PredictorNet& net, std::span<const PreparedSequence> data, const LossConfig& loss,
                             const LossWeights& weights, int window, int count, double augment_deg,
                             std::uint64_t seed);

/// `stage,iter,L_total,L_c0,L_c1,L_p,L_d,L_f` with a header line of the same names.
std::string format_telemetry(std::span<const TrainRecord> rows);
/// Parses and checks telemetry: header, eight numeric fields, stage in 1..3,
/// non-decreasing stage and iteration, non-negative finite losses.
std::vector<TrainRecord> parse_telemetry(const std::string& source, std::string_view text);

/// The default synthetic training set: shaky captures, half of them on a
/// panning base.
std::vector<ShakeSpec> synthetic_training_specs(std::uint64_t seed, int captures = 4, int frames = 240);

}  // namespace fusestab
