#pragma once

// Finite-difference check of the reverse-mode gradients of the whole
// predictor + loss graph on small random instances.

#include <cstdint>
#include <string>
#include <vector>

#include "fusestab/losses.hpp"

namespace fusestab {

struct GradcheckOptions {
  int instances = 20;
  std::uint64_t seed = 0;
  double step = 1e-4;
  double tolerance = 1e-4;  // on the per-tensor relative error
  double floor = 1e-6;      // gradient norms below this count as this
  int entries_per_tensor = 6;
  int frames = 4;
  int max_redraws = 200;
  LossWeights weights;  // all five terms by default
};

struct TensorCheck {
  std::string name;
  double worst = 0.0;  // largest relative error over all instances
};

struct GradcheckResult {
  int instances = 0;
  int redraws = 0;          // instances dropped for lack of smooth entries
  int skipped_entries = 0;  // entries whose difference interval holds a kink or jump
  std::vector<TensorCheck> tensors;
  double worst = 0.0;
  bool passed = false;
};

/// Each instance: a fresh random network (8x8 flow grid, N = 2 history), a
/// short simulated capture with shake and OIS, a perturbed seed pose and all
/// five loss terms. Per tensor, `entries_per_tensor` random entries are
/// perturbed by +-step; the error is |g - g_fd| / max(|g|, |g_fd|, floor) over
/// those entries, where g_fd combines the central differences at step and
/// step / 2 to cancel their h^2 error. An entry whose interval holds a ReLU
/// flip, a flow sample crossing the frame border or another kink is replaced
/// by another one.
GradcheckResult run_gradcheck(const GradcheckOptions& opts);

std::string format_gradcheck(const GradcheckResult& r);

}  // namespace fusestab
