#pragma once

// Frame-by-frame stabilization with a fixed look-ahead buffer.

#include <deque>
#include <optional>
#include <vector>

#include "fusestab/flow.hpp"
#include "fusestab/pose.hpp"
#include "fusestab/sensor.hpp"
#include "fusestab/solver/net.hpp"
#include "fusestab/solver/sequence.hpp"
#include "fusestab/warp.hpp"

namespace fusestab {

struct OnlineOptions {
  int latency_frames = kLatencyFrames;
  int mesh_cols = 16;
  int mesh_rows = 12;
  HistoryParams history;
};

struct OnlineFrame {
  std::size_t index = 0;
  double t = 0.0;
  Quaternion rotation = Quaternion::Identity();
  WarpMesh mesh;
};

/// Takes frames one at a time and emits each one latency_frames later, once the
/// sensor data its real-pose history looks ahead into has arrived. The virtual
/// pose comes from the predictor (one LSTM step per frame, seeded at `seed`)
/// or from a precomputed path.
class OnlineStabilizer {
 public:
  OnlineStabilizer(const PredictorNet& net, const SensorTimeline& tl, const Intrinsics& K, const Quaternion& seed,
                   const OnlineOptions& opts = {});
  OnlineStabilizer(VirtualPath path, const SensorTimeline& tl, const Intrinsics& K, const OnlineOptions& opts = {});

  /// Frame n with the raw (OIS-affected) forward flow of the pair (n - 1, n),
  /// or null when there is none. Returns frame n - latency_frames when it is due.
  std::optional<OnlineFrame> push(const FrameMeta& fm, const FlowField* raw_flow_from_previous);
  /// Emits every buffered frame; the stream is over.
  std::vector<OnlineFrame> flush();

  const VirtualPath& path() const { return path_; }

 private:
  OnlineFrame emit();

  const PredictorNet* net_ = nullptr;
  const SensorTimeline& tl_;
  Intrinsics K_;
  OnlineOptions opts_;
  VirtualPath path_;    // emitted rotations (inference) or the replayed path
  std::size_t emitted_ = 0;
  std::vector<FrameMeta> frames_;
  std::deque<Eigen::VectorXd> flows_;  // encoder inputs of frames not yet emitted
  Eigen::VectorXd h_, c_;              // LSTM state
};

struct OnlineRun {
  VirtualPath path;
  std::vector<WarpMesh> meshes;
  double seconds = 0.0;  // wall time of the frame loop
  double fps() const { return seconds > 0.0 ? static_cast<double>(meshes.size()) / seconds : 0.0; }
};

/// Streams a whole sequence through `stab`.
OnlineRun run_online(OnlineStabilizer& stab, const SequenceData& seq);

}  // namespace fusestab
