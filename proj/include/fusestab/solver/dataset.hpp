#pragma once

// One capture as the solvers consume it: sensor timeline, frame timing and the
// raw (OIS-affected) optical flow between adjacent frames.

#include <vector>

#include "fusestab/flow.hpp"
#include "fusestab/losses.hpp"
#include "fusestab/pose.hpp"
#include "fusestab/sensor.hpp"
#include "fusestab/sim.hpp"

namespace fusestab {

struct SequenceData {
  SensorTimeline timeline;
  std::vector<FrameMeta> frames;
  Intrinsics K;
  std::vector<FlowField> forward;   // pair (i, i + 1); empty when no flow is available
  std::vector<FlowField> backward;

  bool has_flow() const { return !forward.empty(); }
  /// Frame timestamps (mid-readout), ns.
  std::vector<double> times() const;
  void validate() const;
};

/// Packs a simulated capture, with analytic flow on a grid of spacing
/// `flow_spacing` pixels (no flow when the spacing is <= 0).
SequenceData sequence_from_capture(const Capture& cap, double flow_spacing = 16.0, double focal = kFocalLength);

/// Flow-loss samples per adjacent pair (empty without flow).
std::vector<FlowPairSamples> flow_pairs(const SequenceData& seq, const FlowLossOptions& opt);

/// OIS-free forward flow per adjacent pair (empty without flow).
std::vector<FlowField> ois_free_forward(const SequenceData& seq);

/// Contiguous frames [first, first + count) with their flows.
SequenceData subsequence(const SequenceData& seq, std::size_t first, std::size_t count);

}  // namespace fusestab
