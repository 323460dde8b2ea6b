#pragma once

// Unsupervised loss terms for a candidate virtual path.
//
// Every term is templated on the scalar; the optimizer and the training tape
// instantiate them with AdScalar to obtain local gradients.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusestab/flow.hpp"
#include "fusestab/pose.hpp"
#include "fusestab/rotmath.hpp"

namespace fusestab {

struct LossWeights {
  double c0 = 2.0;
  double c1 = 40.0;
  double p = 2.0;
  double d = 1.0;
  double f = 1.0;

  /// Weights with only the terms active in training stage 1, 2 or 3 kept.
  LossWeights for_stage(int stage) const;
};

struct ProtrusionParams {
  double sigma = 2.5;  // frames
  int N = 10;          // look-ahead frames
  double alpha = 0.2;
  double beta = 0.08;   // virtual crop ratio
  double gamma = 0.04;  // real crop ratio

  void validate() const;
};

struct DistortionParams {
  double beta0 = 6.0 * M_PI / 180.0;  // radians
  double beta1 = 100.0;               // per radian

  void validate() const;
};

struct FlowLossOptions {
  int grid = 16;  // samples per axis
};

struct LossConfig {
  LossWeights weights;
  ProtrusionParams protrusion;
  DistortionParams distortion;
  FlowLossOptions flow;
  HistoryParams history;  // step is the look-ahead spacing for protrusion
};

template <typename S>
struct LossTerms {
  S c0 = S(0.0);
  S c1 = S(0.0);
  S p = S(0.0);
  S d = S(0.0);
  S f = S(0.0);

  S total(const LossWeights& w) const {
    // Summed one materialized term at a time: AdScalar terms may carry no derivatives.
    S acc = S(w.c0 * c0);
    for (const auto& [wi, t] : {std::pair{w.c1, &c1}, std::pair{w.p, &p}, std::pair{w.d, &d}, std::pair{w.f, &f}}) {
      acc = S(acc + S(wi * *t));
    }
    return acc;
  }
};

using LossBreakdown = LossTerms<double>;

/// Text report line `frame,L_c0,L_c1,L_p,L_d,L_f,total`.
std::string format_loss_line(int frame, const LossBreakdown& b, const LossWeights& w);

// ---------------------------------------------------------------------------
// Smoothness

/// ||a - b||^2 after flipping b into a's hemisphere; equals 2 - 2 cos(theta / 2).
template <typename S>
S loss_c0(const Quat<S>& a, const Quat<S>& b) {
  const S sgn = value_of(dot(a, b)) < 0.0 ? S(-1.0) : S(1.0);
  const Vec4<S> diff = to_wxyz(a) - sgn * to_wxyz(b);
  return diff.squaredNorm();
}

/// ||a b^-1 - b c^-1||^2 on sign-canonical increments.
template <typename S>
S loss_c1(const Quat<S>& a, const Quat<S>& b, const Quat<S>& c) {
  const Quat<S> inc1 = canonical(Quat<S>(a * b.conjugate()));
  const Quat<S> inc2 = canonical(Quat<S>(b * c.conjugate()));
  return (to_wxyz(inc1) - to_wxyz(inc2)).squaredNorm();
}

// ---------------------------------------------------------------------------
// Protrusion

/// Max normalized signed distance of the beta-inset virtual corners, projected
/// into the real frame, to the gamma-inset real boundary (positive = outside).
/// A corner behind the real camera saturates the value to 1.
template <typename S>
S protrude(const Quat<S>& Rv, const CameraPose& P_r, const Intrinsics& K, double beta, double gamma) {
  const double W = K.width;
  const double H = K.height;
  const Quat<S> Rr = P_r.R.template cast<S>();
  const Vec2<S> Or = P_r.O.template cast<S>();
  const Vec2<S> zero(S(0.0), S(0.0));
  const double xs[2] = {beta * W, W - beta * W};
  const double ys[2] = {beta * H, H - beta * H};
  const double lo_x = gamma * W, hi_x = W - gamma * W;
  const double lo_y = gamma * H, hi_y = H - gamma * H;
  S worst = S(0.0);
  bool first = true;
  for (double y : ys) {
    for (double x : xs) {
      const auto p = virtual_to_real<S>(Vec2<S>(S(x), S(y)), Rr, Or, Rv, zero, K);
      if (!p) return S(1.0);
      const S dx1 = (S(lo_x) - p->x()) / W;
      const S dx2 = (p->x() - S(hi_x)) / W;
      const S dy1 = (S(lo_y) - p->y()) / H;
      const S dy2 = (p->y() - S(hi_y)) / H;
      for (const S* d : {&dx1, &dx2, &dy1, &dy2}) {
        if (first || value_of(*d) > value_of(worst)) {
          worst = *d;
          first = false;
        }
      }
    }
  }
  return worst;
}

/// Normalized half-Gaussian weights over look-ahead offsets 0..count-1.
std::vector<double> protrusion_weights(double sigma, int count);

/// sum_i w_i * min(max(protrude_i, 0) / alpha, 1)^2 over the available
/// look-ahead real poses (index 0 = current frame).
template <typename S>
S loss_protrusion(const Quat<S>& Rv, std::span<const CameraPose> real_poses, const Intrinsics& K,
                  const ProtrusionParams& pp) {
  if (real_poses.empty()) throw InvalidArgument("loss_protrusion: no real poses");
  const auto w = protrusion_weights(pp.sigma, static_cast<int>(real_poses.size()));
  S acc = S(0.0);
  for (std::size_t i = 0; i < real_poses.size(); ++i) {
    S p = protrude(Rv, real_poses[i], K, pp.beta, pp.gamma);
    if (value_of(p) <= 0.0) continue;
    const S r = p / pp.alpha;
    // A saturated pose contributes the constant w; AdScalar cannot add a
    // derivative-free operand into a derivative expression.
    const S term = value_of(r) >= 1.0 ? S(w[i]) : S(w[i] * r * r);
    acc = S(acc + term);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Distortion

/// Omega / (1 + exp(-beta1 (Omega - beta0))) with Omega the spherical angle.
template <typename S>
S loss_distortion(const Quat<S>& Rv, const Quat<S>& Rr, const DistortionParams& dp) {
  using std::exp;
  const S omega = spherical_angle(Rv, Rr);
  return omega / (S(1.0) + exp(-dp.beta1 * (omega - S(dp.beta0))));
}

// ---------------------------------------------------------------------------
// Optical flow

/// A real-frame pixel to virtual-frame pixel map; empty when undefined.
using PixelTransform = std::function<std::optional<Eigen::Vector2d>(const Eigen::Vector2d&)>;

/// Flow-grid nodes used as loss samples: up to grid x grid evenly spaced nodes.
std::vector<Eigen::Vector2i> flow_sample_nodes(const FlowField& f, int grid);

/// Mean of ||T_n(x) - T_{n+1}(x + F_fwd(x))||^2 over valid forward samples plus
/// the mirrored backward mean. Samples whose mapped points leave
/// [0, W) x [0, H) or whose flow is masked are excluded. Throws DegenerateInput
/// when no sample survives in either direction.
double loss_flow(const PixelTransform& T_n, const PixelTransform& T_n1, const FlowField& fwd, const FlowField& bwd,
                 int width, int height, const FlowLossOptions& opt = {});

/// Flow-loss samples for one frame pair reduced to world rays, so the loss is a
/// closed-form function of the two virtual rotations.
struct FlowPairSamples {
  Intrinsics K;
  std::vector<Eigen::Vector3d> fwd_src;  // rays of x in frame n
  std::vector<Eigen::Vector3d> fwd_dst;  // rays of x + F(x) in frame n + 1
  std::vector<Eigen::Vector3d> bwd_src;  // rays of y in frame n + 1
  std::vector<Eigen::Vector3d> bwd_dst;  // rays of y + B(y) in frame n

  bool empty() const { return fwd_src.empty() && bwd_src.empty(); }
};

/// Uses the raw (OIS-bearing) flows; each endpoint takes the real rotation and
/// OIS offset at its own scanline time.
FlowPairSamples prepare_flow_pair(const FlowField& fwd, const FlowField& bwd, const SensorTimeline& tl,
                                  const FrameMeta& fm_n, const FrameMeta& fm_n1, const Intrinsics& K,
                                  const FlowLossOptions& opt);

template <typename S>
struct FlowLossValue {
  S value = S(0.0);
  int forward_count = 0;
  int backward_count = 0;
};

template <typename S>
FlowLossValue<S> eval_flow_loss(const FlowPairSamples& s, const Quat<S>& Rv_n, const Quat<S>& Rv_n1) {
  const Vec2<S> zero(S(0.0), S(0.0));
  const double W = s.K.width;
  const double H = s.K.height;
  auto inside = [&](const Vec2<S>& p) {
    const double x = value_of(p.x()), y = value_of(p.y());
    return x >= 0.0 && x < W && y >= 0.0 && y < H;
  };
  auto mean_sq = [&](const std::vector<Eigen::Vector3d>& src, const std::vector<Eigen::Vector3d>& dst,
                     const Quat<S>& Ra, const Quat<S>& Rb, int& count) {
    S acc = S(0.0);
    count = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto a = project<S>(rotate(Ra, Vec3<S>(src[i].template cast<S>())), zero, s.K);
      if (!a || !inside(*a)) continue;
      const auto b = project<S>(rotate(Rb, Vec3<S>(dst[i].template cast<S>())), zero, s.K);
      if (!b || !inside(*b)) continue;
      acc += (*a - *b).squaredNorm();
      ++count;
    }
    return count > 0 ? S(acc / static_cast<double>(count)) : S(0.0);
  };
  FlowLossValue<S> out;
  out.value = mean_sq(s.fwd_src, s.fwd_dst, Rv_n, Rv_n1, out.forward_count) +
              mean_sq(s.bwd_src, s.bwd_dst, Rv_n1, Rv_n, out.backward_count);
  return out;
}

/// Which samples eval_flow_loss keeps, forward samples then backward ones.
std::vector<bool> flow_sample_mask(const FlowPairSamples& s, const Quaternion& Rv_n, const Quaternion& Rv_n1);

struct FlowLossGradient {
  double value = 0.0;
  Eigen::Vector3d d_n = Eigen::Vector3d::Zero();   // w.r.t. dv in R_v(n) <- exp(dv) R_v(n)
  Eigen::Vector3d d_n1 = Eigen::Vector3d::Zero();  // same for R_v(n + 1)
};

/// eval_flow_loss and its gradient under left perturbations of both rotations,
/// differentiated by hand (the per-sample cost of forward-mode AD adds up).
FlowLossGradient flow_loss_gradient(const FlowPairSamples& s, const Quaternion& Rv_n, const Quaternion& Rv_n1);

// ---------------------------------------------------------------------------
// Per-frame composition

/// Everything about frame t that does not depend on the virtual path.
struct FrameLossInputs {
  Quaternion real_rotation;               // R_r at the frame timestamp
  std::vector<CameraPose> lookahead;      // real poses at t + i * step, i = 0..N (shrinks at the tail)
  const FlowPairSamples* flow = nullptr;  // pair (t - 1, t); null for the first frame
};

/// Builds the path-independent inputs for every frame.
std::vector<FrameLossInputs> prepare_frame_inputs(const SensorTimeline& tl, std::span<const FrameMeta> frames,
                                                  std::span<const double> frame_times,
                                                  std::span<const FlowPairSamples> pairs, const LossConfig& cfg);

/// All five terms at frame t. `prev` / `prev2` are R_v(t - 1) / R_v(t - 2) when
/// they exist; terms needing a missing predecessor are zero. Terms whose weight
/// is zero are skipped unless `all_terms`.
template <typename S>
LossTerms<S> frame_losses(const FrameLossInputs& in, const Intrinsics& K, const LossConfig& cfg, const Quat<S>& cur,
                          const Quat<S>* prev, const Quat<S>* prev2, bool all_terms = false) {
  LossTerms<S> t;
  const LossWeights& w = cfg.weights;
  if (prev && (all_terms || w.c0 != 0.0)) t.c0 = loss_c0(cur, *prev);
  if (prev && prev2 && (all_terms || w.c1 != 0.0)) t.c1 = loss_c1(cur, *prev, *prev2);
  if (!in.lookahead.empty() && (all_terms || w.p != 0.0)) t.p = loss_protrusion(cur, in.lookahead, K, cfg.protrusion);
  if (all_terms || w.d != 0.0) t.d = loss_distortion(cur, Quat<S>(in.real_rotation.template cast<S>()), cfg.distortion);
  if (prev && in.flow && (all_terms || w.f != 0.0)) t.f = eval_flow_loss(*in.flow, *prev, cur).value;
  return t;
}

/// Per-frame breakdown of a whole path.
std::vector<LossBreakdown> path_losses(std::span<const FrameLossInputs> inputs, const Intrinsics& K,
                                       const LossConfig& cfg, std::span<const Quaternion> path);

LossBreakdown sum_breakdown(std::span<const LossBreakdown> per_frame);

}  // namespace fusestab
