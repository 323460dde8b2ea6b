#pragma once

// Unrolling the predictor over a run of frames, on a tape, together with the
// loss of the resulting virtual path.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "fusestab/losses.hpp"
#include "fusestab/solver/dataset.hpp"
#include "fusestab/solver/net.hpp"
#include "fusestab/solver/tape.hpp"

namespace fusestab {

/// Frames of look-ahead a streaming stabilizer buffers before emitting a frame.
inline constexpr int kLatencyFrames = 10;

/// Everything the predictor needs about frame n that does not depend on the
/// virtual path.
struct PredictorFrame {
  double t = 0.0;  // frame timestamp, ns
  Quaternion real_rotation = Quaternion::Identity();
  std::vector<Quaternion> real_history;  // H_r, 2N + 1 entries
  Eigen::VectorXd flow;                  // encoder input for the pair (n - 1, n)
};

/// `ois_free_forward[i]` is the OIS-free flow of the pair (i, i + 1); empty
/// means no flow (zero encoder input). The real history of frame n only sees
/// sensor data up to the end of frame n + latency_frames' readout.
std::vector<PredictorFrame> prepare_predictor_frames(const SensorTimeline& tl, std::span<const FrameMeta> frames,
                                                     std::span<const double> times,
                                                     std::span<const FlowField> ois_free_forward,
                                                     const NetConfig& net, const HistoryParams& hp,
                                                     int latency_frames = kLatencyFrames);

/// Newest sensor time a stream has seen when frame n is processed.
double sensor_horizon(std::span<const FrameMeta> frames, std::size_t n, int latency_frames);

/// Every path-independent input of a capture, computed once: loss inputs and
/// predictor inputs per frame. Loss inputs point into `pairs`, so the object
/// may be moved but not copied.
struct PreparedSequence {
  SequenceData data;
  std::vector<FlowPairSamples> pairs;
  std::vector<double> times;
  std::vector<FrameLossInputs> loss_inputs;
  std::vector<PredictorFrame> predictor;

  PreparedSequence(SequenceData seq, const NetConfig& net, const LossConfig& cfg, int latency_frames = kLatencyFrames);
  PreparedSequence(const PreparedSequence&) = delete;
  PreparedSequence& operator=(const PreparedSequence&) = delete;
  PreparedSequence(PreparedSequence&&) = default;
  PreparedSequence& operator=(PreparedSequence&&) = default;

  std::size_t size() const { return times.size(); }
  std::span<const FrameLossInputs> loss_window(std::size_t first, std::size_t count) const;
  std::span<const PredictorFrame> predictor_window(std::size_t first, std::size_t count) const;
};

struct Rollout {
  std::vector<ad::Var> rotations;  // R_v per frame as (w, x, y, z)
};

/// Runs the predictor over `frames` with a fresh LSTM state. Virtual history
/// before the first frame is `seed`; R_v(n) = dR(n) R_v(n - 1) with R_v(-1) = seed.
Rollout rollout(ad::Tape& tape, const PredictorNet& net, std::span<const PredictorFrame> frames,
                const Quaternion& seed, const HistoryParams& hp);

struct WindowLoss {
  ad::Var total;        // mean over frames of the weighted per-frame total
  LossBreakdown mean;   // unweighted per-term means
  double total_value = 0.0;
};

/// Loss of a rolled-out window. The first frame has no predecessor inside the
/// window, so its smoothness and flow terms are skipped (likewise L_c1 at the
/// second frame). Terms with zero weight are evaluated for reporting only.
WindowLoss window_loss(ad::Tape& tape, const Rollout& r, std::span<const FrameLossInputs> inputs,
                       const Intrinsics& K, const LossConfig& cfg, const LossWeights& w);

}  // namespace fusestab
