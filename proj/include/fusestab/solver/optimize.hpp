#pragma once

// Backend A: direct optimization of the virtual path against the loss suite.

#include <span>
#include <vector>

#include "fusestab/losses.hpp"
#include "fusestab/pose.hpp"

namespace fusestab {

struct OptimizeOptions {
  int max_iterations = 1000;
  double momentum = 0.9;
  double first_step = 1e-3;  // largest per-frame rotation change (rad) of the first step
  double stall_tolerance = 1e-10;  // relative objective decrease counted as no progress
  int patience = 100;              // accepted steps without progress before stopping
};

struct OptimizeResult {
  VirtualPath path;
  std::vector<LossBreakdown> per_frame;
  double objective = 0.0;           // sum over frames of the weighted total
  double initial_objective = 0.0;   // same for the locked path R_v = R_r
  int iterations = 0;
  std::vector<double> accepted;     // objective after every accepted step
};

/// Minimizes sum_t total_loss(t) over tangent vectors v_t with
/// R_v(t) = exp(v_t) R_r(t), starting from the locked path. Gradient descent
/// with momentum; a step that raises the objective is discarded, the momentum
/// cleared and the step size halved. Gradients come from forward-mode AD of the
/// per-frame terms. Throws NumericError naming the frame and term when the
/// objective stops being finite.
OptimizeResult optimize_path(std::span<const FrameLossInputs> inputs, std::span<const double> times,
                             const Intrinsics& K, const LossConfig& cfg, const OptimizeOptions& opts = {});

}  // namespace fusestab
