#include "fusestab/solver/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "fusestab/errors.hpp"

namespace fusestab {

namespace {

template <typename V>
Quat<typename V::Scalar> quat_at(const V& v, Eigen::Index off) {
  return Quat<typename V::Scalar>(v(off), v(off + 1), v(off + 2), v(off + 3));
}

ad::AdVector as_vector(const Quat<AdScalar>& q) {
  ad::AdVector out(4);
  out << q.w(), q.x(), q.y(), q.z();
  return out;
}

ad::AdVector scalar_vector(const AdScalar& s) {
  ad::AdVector out(1);
  out(0) = s;
  return out;
}

}  // namespace

double sensor_horizon(std::span<const FrameMeta> frames, std::size_t n, int latency_frames) {
  if (frames.empty()) throw InvalidArgument("sensor_horizon: no frames");
  const std::size_t k = std::min(frames.size() - 1, n + static_cast<std::size_t>(std::max(latency_frames, 0)));
  return static_cast<double>(frames[k].t_start + frames[k].readout);
}

std::vector<PredictorFrame> prepare_predictor_frames(const SensorTimeline& tl, std::span<const FrameMeta> frames,
                                                     std::span<const double> times,
                                                     std::span<const FlowField> ois_free_forward,
                                                     const NetConfig& net, const HistoryParams& hp,
                                                     int latency_frames) {
  if (frames.size() != times.size()) throw InvalidArgument("prepare_predictor_frames: size mismatch");
  if (!ois_free_forward.empty() && ois_free_forward.size() + 1 != frames.size()) {
    throw InvalidArgument("prepare_predictor_frames: need one flow per adjacent frame pair");
  }
  if (hp.N != net.history_N) throw InvalidArgument("prepare_predictor_frames: history N differs from the network's");
  const VirtualPath none;
  std::vector<PredictorFrame> out(frames.size());
  for (std::size_t n = 0; n < frames.size(); ++n) {
    PredictorFrame& f = out[n];
    f.t = times[n];
    f.real_rotation = tl.query_rotation(f.t);
    f.real_history = build_history(tl, none, f.t, hp, 0, true, sensor_horizon(frames, n, latency_frames)).real;
    f.flow = n > 0 && !ois_free_forward.empty() ? flow_input(ois_free_forward[n - 1], net.flow_grid)
                                                : zero_flow_input(net.flow_grid);
  }
  return out;
}

PreparedSequence::PreparedSequence(SequenceData seq, const NetConfig& net, const LossConfig& cfg, int latency_frames)
    : data(std::move(seq)) {
  data.validate();
  pairs = flow_pairs(data, cfg.flow);
  times = data.times();
  loss_inputs = prepare_frame_inputs(data.timeline, data.frames, times, pairs, cfg);
  predictor = prepare_predictor_frames(data.timeline, data.frames, times, ois_free_forward(data), net, cfg.history,
                                       latency_frames);
}

std::span<const FrameLossInputs> PreparedSequence::loss_window(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw OutOfRange("window outside the sequence");
  return std::span<const FrameLossInputs>(loss_inputs).subspan(first, count);
}

std::span<const PredictorFrame> PreparedSequence::predictor_window(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw OutOfRange("window outside the sequence");
  return std::span<const PredictorFrame>(predictor).subspan(first, count);
}

Rollout rollout(ad::Tape& tape, const PredictorNet& net, std::span<const PredictorFrame> frames,
                const Quaternion& seed, const HistoryParams& hp) {
  Rollout r;
  if (frames.empty()) return r;
  std::vector<double> times;
  for (const auto& f : frames) times.push_back(f.t);
  const ad::Var seed_var = tape.constant(Eigen::VectorXd(to_wxyz(canonical(seed))));
  PredictorNet::State state = net.initial_state(tape);

  for (std::size_t n = 0; n < frames.size(); ++n) {
    const PredictorFrame& fr = frames[n];
    if (static_cast<int>(fr.real_history.size()) != 2 * hp.N + 1) {
      throw InvalidArgument("rollout: real history has the wrong length");
    }
    const Quaternion inv_now = fr.real_rotation.conjugate();
    std::vector<ad::Var> hist;
    Eigen::VectorXd real(4 * fr.real_history.size());
    for (std::size_t k = 0; k < fr.real_history.size(); ++k) real.segment<4>(4 * k) = to_wxyz(fr.real_history[k]);
    hist.push_back(tape.constant(std::move(real)));

    // H_v: virtual rotations at t - k * step, relative to R_r(t).
    const Quat<AdScalar> inv_ad = inv_now.cast<AdScalar>();
    for (int k = hp.N; k >= 1; --k) {
      const QueueLookup l = lookup_queue(times, n, fr.t - k * hp.step_ns);
      if (l.a < 0) {
        hist.push_back(tape.constant(Eigen::VectorXd(to_wxyz(canonical(Quaternion(seed * inv_now))))));
      } else if (l.u == 0.0 || l.a == l.b) {
        hist.push_back(tape.custom({r.rotations[static_cast<std::size_t>(l.a)]}, [inv_ad](const ad::AdVector& v) {
          return as_vector(canonical(Quat<AdScalar>(quat_at(v, 0) * inv_ad)));
        }));
      } else {
        const double u = l.u;
        hist.push_back(tape.custom(
            {r.rotations[static_cast<std::size_t>(l.a)], r.rotations[static_cast<std::size_t>(l.b)]},
            [inv_ad, u](const ad::AdVector& v) {
              const Quat<AdScalar> q = slerp(quat_at(v, 0), quat_at(v, 4), AdScalar(u));
              return as_vector(canonical(Quat<AdScalar>(q * inv_ad)));
            }));
      }
    }
    const ad::Var history = tape.concat(hist);
    const ad::Var flow = tape.constant(fr.flow);
    const PredictorNet::Step step = net.forward(tape, state, flow, history);
    state = step.state;
    const ad::Var prev = n == 0 ? seed_var : r.rotations.back();
    r.rotations.push_back(tape.custom({step.delta, prev}, [](const ad::AdVector& v) {
      return as_vector(canonical(Quat<AdScalar>(quat_at(v, 0) * quat_at(v, 4))));
    }));
  }
  return r;
}

WindowLoss window_loss(ad::Tape& tape, const Rollout& r, std::span<const FrameLossInputs> inputs,
                       const Intrinsics& K, const LossConfig& cfg, const LossWeights& w) {
  if (r.rotations.size() != inputs.size()) throw InvalidArgument("window_loss: size mismatch");
  if (inputs.empty()) throw InvalidArgument("window_loss: empty window");
  std::vector<ad::Var> terms;
  std::vector<double> weights;
  WindowLoss out;
  const double inv_n = 1.0 / static_cast<double>(inputs.size());

  // Adds one term: on the tape when it carries weight, as a plain value otherwise.
  auto term = [&](double weight, double& report, const std::vector<ad::Var>& args, auto&& f) {
    if (weight != 0.0) {
      const ad::Var v = tape.custom(args, [&f](const ad::AdVector& x) { return scalar_vector(f(x)); });
      report += tape.scalar(v) * inv_n;
      terms.push_back(v);
      weights.push_back(weight * inv_n);
      return;
    }
    Eigen::VectorXd x(4 * static_cast<Eigen::Index>(args.size()));
    for (std::size_t i = 0; i < args.size(); ++i) x.segment<4>(4 * static_cast<Eigen::Index>(i)) = tape.value(args[i]);
    report += value_of(f(x.cast<AdScalar>().eval())) * inv_n;
  };

  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const FrameLossInputs& in = inputs[n];
    const ad::Var cur = r.rotations[n];
    if (n >= 1) {
      const ad::Var prev = r.rotations[n - 1];
      term(w.c0, out.mean.c0, {cur, prev},
           [](const ad::AdVector& x) { return loss_c0(quat_at(x, 0), quat_at(x, 4)); });
      if (in.flow) {
        const FlowPairSamples* pair = in.flow;
        term(w.f, out.mean.f, {prev, cur}, [pair](const ad::AdVector& x) {
          return eval_flow_loss<AdScalar>(*pair, quat_at(x, 0), quat_at(x, 4)).value;
        });
      }
    }
    if (n >= 2) {
      term(w.c1, out.mean.c1, {cur, r.rotations[n - 1], r.rotations[n - 2]},
           [](const ad::AdVector& x) { return loss_c1(quat_at(x, 0), quat_at(x, 4), quat_at(x, 8)); });
    }
    if (!in.lookahead.empty()) {
      const FrameLossInputs* pin = &in;
      term(w.p, out.mean.p, {cur}, [pin, &K, &cfg](const ad::AdVector& x) {
        return loss_protrusion<AdScalar>(quat_at(x, 0), pin->lookahead, K, cfg.protrusion);
      });
    }
    const Quat<AdScalar> Rr = in.real_rotation.cast<AdScalar>();
    term(w.d, out.mean.d, {cur}, [Rr, &cfg](const ad::AdVector& x) {
      return loss_distortion<AdScalar>(quat_at(x, 0), Rr, cfg.distortion);
    });
  }
  out.total = tape.weighted_sum(terms, weights);
  out.total_value = tape.scalar(out.total);
  if (!std::isfinite(out.total_value)) throw NumericError("window loss is not finite");
  return out;
}

}  // namespace fusestab
