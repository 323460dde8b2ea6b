#include "fusestab/solver/dataset.hpp"

#include "fusestab/errors.hpp"

namespace fusestab {

std::vector<double> SequenceData::times() const {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.t_mid());
  return out;
}

void SequenceData::validate() const {
  if (frames.empty()) throw InvalidArgument("sequence has no frames");
  if (forward.size() != backward.size()) throw InvalidArgument("sequence: forward and backward flow counts differ");
  if (has_flow() && forward.size() + 1 != frames.size()) {
    throw InvalidArgument("sequence: need one flow field per adjacent frame pair");
  }
}

SequenceData sequence_from_capture(const Capture& cap, double flow_spacing, double focal) {
  SequenceData seq;
  seq.timeline = cap.timeline;
  seq.frames = cap.frames;
  seq.K = Intrinsics::for_frame(cap.spec.width, cap.spec.height, focal);
  if (flow_spacing > 0.0) {
    for (std::size_t i = 0; i + 1 < cap.frames.size(); ++i) {
      seq.forward.push_back(
          analytic_flow(cap.timeline, cap.frames[i], cap.frames[i + 1], seq.K, flow_spacing, FlowDirection::Forward)
              .raw);
      seq.backward.push_back(
          analytic_flow(cap.timeline, cap.frames[i], cap.frames[i + 1], seq.K, flow_spacing, FlowDirection::Backward)
              .raw);
    }
  }
  return seq;
}

std::vector<FlowPairSamples> flow_pairs(const SequenceData& seq, const FlowLossOptions& opt) {
  std::vector<FlowPairSamples> out;
  for (std::size_t i = 0; i < seq.forward.size(); ++i) {
    out.push_back(prepare_flow_pair(seq.forward[i], seq.backward[i], seq.timeline, seq.frames[i], seq.frames[i + 1],
                                    seq.K, opt));
  }
  return out;
}

std::vector<FlowField> ois_free_forward(const SequenceData& seq) {
  std::vector<FlowField> out;
  for (std::size_t i = 0; i < seq.forward.size(); ++i) {
    out.push_back(remove_ois(seq.forward[i], seq.timeline, seq.frames[i], seq.frames[i + 1]));
  }
  return out;
}

SequenceData subsequence(const SequenceData& seq, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > seq.frames.size()) throw OutOfRange("subsequence: range outside the sequence");
  SequenceData out;
  out.timeline = seq.timeline;
  out.K = seq.K;
  out.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(first),
                    seq.frames.begin() + static_cast<std::ptrdiff_t>(first + count));
  if (seq.has_flow()) {
    out.forward.assign(seq.forward.begin() + static_cast<std::ptrdiff_t>(first),
                       seq.forward.begin() + static_cast<std::ptrdiff_t>(first + count - 1));
    out.backward.assign(seq.backward.begin() + static_cast<std::ptrdiff_t>(first),
                        seq.backward.begin() + static_cast<std::ptrdiff_t>(first + count - 1));
  }
  return out;
}

}  // namespace fusestab
