#include "fusestab/solver/online.hpp"

#include <chrono>

#include "fusestab/errors.hpp"

namespace fusestab {

OnlineStabilizer::OnlineStabilizer(const PredictorNet& net, const SensorTimeline& tl, const Intrinsics& K,
                                   const Quaternion& seed, const OnlineOptions& opts)
    : net_(&net), tl_(tl), K_(K), opts_(opts) {
  if (opts.history.N != net.config().history_N) throw InvalidArgument("online: history N differs from the network's");
  if (opts.latency_frames < 0) throw InvalidArgument("online: latency must be >= 0");
  path_.seed = canonical(seed);
  path_.backend = "infer";
  h_ = Eigen::VectorXd::Zero(net.config().hidden);
  c_ = Eigen::VectorXd::Zero(net.config().hidden);
}

OnlineStabilizer::OnlineStabilizer(VirtualPath path, const SensorTimeline& tl, const Intrinsics& K,
                                   const OnlineOptions& opts)
    : tl_(tl), K_(K), opts_(opts), path_(std::move(path)) {
  if (opts.latency_frames < 0) throw InvalidArgument("online: latency must be >= 0");
}

std::optional<OnlineFrame> OnlineStabilizer::push(const FrameMeta& fm, const FlowField* raw_flow_from_previous) {
  if (net_) {
    const int grid = net_->config().flow_grid;
    flows_.push_back(raw_flow_from_previous && !frames_.empty()
                         ? flow_input(remove_ois(*raw_flow_from_previous, tl_, frames_.back(), fm), grid)
                         : zero_flow_input(grid));
  }
  frames_.push_back(fm);
  if (frames_.size() > emitted_ + static_cast<std::size_t>(opts_.latency_frames)) return emit();
  return std::nullopt;
}

std::vector<OnlineFrame> OnlineStabilizer::flush() {
  std::vector<OnlineFrame> out;
  while (emitted_ < frames_.size()) out.push_back(emit());
  return out;
}

OnlineFrame OnlineStabilizer::emit() {
  const std::size_t n = emitted_;
  const FrameMeta& fm = frames_[n];
  OnlineFrame out;
  out.index = n;
  out.t = fm.t_mid();

  if (net_) {
    const double horizon = sensor_horizon(frames_, n, opts_.latency_frames);
    const MotionHistory hist = build_history(tl_, path_, out.t, opts_.history, n, true, horizon);
    ad::Tape tape;
    const PredictorNet::State state{tape.constant(h_), tape.constant(c_)};
    const PredictorNet::Step step =
        net_->forward(tape, state, tape.constant(flows_.front()), tape.constant(history_input(hist)));
    const Eigen::VectorXd& d = tape.value(step.delta);
    const Quaternion prev = n == 0 ? path_.seed : path_.rotations.back();
    out.rotation = canonical(Quaternion(Quaternion(d(0), d(1), d(2), d(3)) * prev));
    h_ = tape.value(step.state.h);
    c_ = tape.value(step.state.c);
    flows_.pop_front();
    path_.times.push_back(out.t);
    path_.rotations.push_back(out.rotation);
  } else {
    if (n >= path_.size()) throw OutOfRange("online: replayed path is shorter than the stream");
    out.rotation = path_.rotations[n];
  }

  out.mesh = build_mesh(fm, tl_, CameraPose{out.rotation, Eigen::Vector2d::Zero()}, K_, opts_.mesh_cols,
                        opts_.mesh_rows);
  out.mesh.frame_index = static_cast<int>(n);
  ++emitted_;
  return out;
}

OnlineRun run_online(OnlineStabilizer& stab, const SequenceData& seq) {
  seq.validate();
  OnlineRun run;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const FlowField* flow = seq.has_flow() && i > 0 ? &seq.forward[i - 1] : nullptr;
    if (auto f = stab.push(seq.frames[i], flow)) run.meshes.push_back(std::move(f->mesh));
  }
  for (auto& f : stab.flush()) run.meshes.push_back(std::move(f.mesh));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.path = stab.path();
  return run;
}

}  // namespace fusestab
