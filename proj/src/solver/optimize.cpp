#include "fusestab/solver/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "fusestab/errors.hpp"

namespace fusestab {

namespace {

using Tangents = std::vector<Eigen::Vector3d>;

std::vector<Quaternion> path_of(std::span<const FrameLossInputs> inputs, const Tangents& v) {
  std::vector<Quaternion> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out[i] = canonical(Quaternion(exp_map<double>(v[i]) * inputs[i].real_rotation));
  }
  return out;
}

double objective(std::span<const FrameLossInputs> inputs, const Intrinsics& K, const LossConfig& cfg,
                 const Tangents& v, std::vector<LossBreakdown>* per_frame = nullptr) {
  const auto path = path_of(inputs, v);
  double sum = 0.0;
  if (per_frame) per_frame->assign(inputs.size(), LossBreakdown{});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Quaternion* prev = i >= 1 ? &path[i - 1] : nullptr;
    const Quaternion* prev2 = i >= 2 ? &path[i - 2] : nullptr;
    const LossBreakdown b = frame_losses<double>(inputs[i], K, cfg, path[i], prev, prev2, per_frame != nullptr);
    if (per_frame) (*per_frame)[i] = b;
    sum += b.total(cfg.weights);
  }
  return sum;
}

[[noreturn]] void report_non_finite(std::span<const FrameLossInputs> inputs, const Intrinsics& K,
                                    const LossConfig& cfg, const Tangents& v) {
  std::vector<LossBreakdown> per;
  objective(inputs, K, cfg, v, &per);
  for (std::size_t i = 0; i < per.size(); ++i) {
    const std::pair<const char*, double> terms[] = {
        {"L_c0", per[i].c0}, {"L_c1", per[i].c1}, {"L_p", per[i].p}, {"L_d", per[i].d}, {"L_f", per[i].f}};
    for (const auto& [name, value] : terms) {
      if (!std::isfinite(value)) {
        throw NumericError("optimize: " + std::string(name) + " is not finite at frame " + std::to_string(i));
      }
    }
    if (!v[i].allFinite()) throw NumericError("optimize: pose of frame " + std::to_string(i) + " is not finite");
  }
  throw NumericError("optimize: objective is not finite");
}

// Rotations of `path` at frame i - k seeded for forward-mode AD: exp(dv) R with
// dv = 0 carrying derivatives 3k..3k+2.
Quat<AdScalar> seeded(const std::vector<Quaternion>& path, std::size_t i, int k, int nd) {
  Vec3<AdScalar> dv;
  for (int a = 0; a < 3; ++a) dv(a) = AdScalar(0.0, AdDerivatives::Unit(nd, 3 * k + a));
  return Quat<AdScalar>(exp_map<AdScalar>(dv) * path[i - static_cast<std::size_t>(k)].cast<AdScalar>());
}

void add_derivatives(const AdScalar& x, double w, Tangents& g, std::size_t i, int n) {
  if (w == 0.0 || x.derivatives().size() != 3 * n) return;  // constant term
  for (int k = 0; k < n; ++k) g[i - static_cast<std::size_t>(k)] += w * x.derivatives().segment<3>(3 * k);
}

// Gradient of the objective with respect to every v_t. Terms are differentiated
// under left perturbations R_v(t) <- exp(dv) R_v(t), then mapped through the
// left Jacobian since exp(v + dv) = exp(J dv) exp(v).
Tangents gradient(std::span<const FrameLossInputs> inputs, const Intrinsics& K, const LossConfig& cfg,
                  const Tangents& v) {
  const std::size_t n = inputs.size();
  const LossWeights& w = cfg.weights;
  const auto path = path_of(inputs, v);
  Tangents g(n, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const FrameLossInputs& in = inputs[i];
    const Quat<AdScalar> cur = seeded(path, i, 0, 3);
    if (!in.lookahead.empty() && w.p != 0.0) {
      add_derivatives(loss_protrusion<AdScalar>(cur, in.lookahead, K, cfg.protrusion), w.p, g, i, 1);
    }
    if (w.d != 0.0) {
      const Quat<AdScalar> Rr = in.real_rotation.cast<AdScalar>();
      add_derivatives(loss_distortion<AdScalar>(cur, Rr, cfg.distortion), w.d, g, i, 1);
    }
    if (i >= 1 && w.c0 != 0.0) {
      add_derivatives(loss_c0(seeded(path, i, 0, 6), seeded(path, i, 1, 6)), w.c0, g, i, 2);
    }
    if (i >= 2 && w.c1 != 0.0) {
      add_derivatives(loss_c1(seeded(path, i, 0, 9), seeded(path, i, 1, 9), seeded(path, i, 2, 9)), w.c1, g, i, 3);
    }
    if (i >= 1 && in.flow && w.f != 0.0) {
      const FlowLossGradient fg = flow_loss_gradient(*in.flow, path[i - 1], path[i]);
      g[i - 1] += w.f * fg.d_n;
      g[i] += w.f * fg.d_n1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) g[i] = left_jacobian(v[i]).transpose() * g[i];
  return g;
}

double max_norm(const Tangents& g) {
  double m = 0.0;
  for (const auto& x : g) m = std::max(m, x.norm());
  return m;
}

}  // namespace

OptimizeResult optimize_path(std::span<const FrameLossInputs> inputs, std::span<const double> times,
                             const Intrinsics& K, const LossConfig& cfg, const OptimizeOptions& opts) {
  if (inputs.size() != times.size()) throw InvalidArgument("optimize: size mismatch");
  if (inputs.empty()) throw InvalidArgument("optimize: no frames");
  if (!(opts.momentum >= 0.0 && opts.momentum < 1.0)) throw InvalidArgument("optimize: momentum must be in [0, 1)");
  const std::size_t n = inputs.size();

  Tangents v(n, Eigen::Vector3d::Zero());
  OptimizeResult res;
  double f = objective(inputs, K, cfg, v);
  if (!std::isfinite(f)) report_non_finite(inputs, K, cfg, v);
  res.initial_objective = f;
  Tangents g = gradient(inputs, K, cfg, v);
  const double g0 = max_norm(g);
  double lr = g0 > 0.0 ? opts.first_step / g0 : 0.0;
  Tangents vel(n, Eigen::Vector3d::Zero());
  int stalled = 0;

  for (int it = 0; it < opts.max_iterations && g0 > 0.0; ++it) {
    res.iterations = it + 1;
    Tangents trial(n);
    for (std::size_t i = 0; i < n; ++i) {
      vel[i] = opts.momentum * vel[i] - lr * g[i];
      trial[i] = v[i] + vel[i];
    }
    const double ft = objective(inputs, K, cfg, trial);
    if (!std::isfinite(ft)) report_non_finite(inputs, K, cfg, trial);
    if (ft <= f) {
      stalled = f - ft <= opts.stall_tolerance * std::max(f, 1e-300) ? stalled + 1 : 0;
      v = std::move(trial);
      f = ft;
      res.accepted.push_back(f);
      g = gradient(inputs, K, cfg, v);
      lr *= 1.1;
      if (stalled >= opts.patience || max_norm(g) == 0.0) break;
    } else {
      for (auto& x : vel) x.setZero();
      lr *= 0.5;
      if (lr * max_norm(g) < 1e-15) break;  // steps below round-off
    }
  }

  res.objective = objective(inputs, K, cfg, v, &res.per_frame);
  res.path.backend = "optimize";
  res.path.times.assign(times.begin(), times.end());
  res.path.rotations = path_of(inputs, v);
  res.path.seed = res.path.rotations.front();
  return res;
}

}  // namespace fusestab
