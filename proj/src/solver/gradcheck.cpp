#include "fusestab/solver/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"
#include "fusestab/random.hpp"
#include "fusestab/solver/sequence.hpp"

namespace fusestab {

namespace {

// Largest relative disagreement between the two extrapolated differences of a smooth entry.
constexpr double kSmoothness = 1e-5;

struct Instance {
  PredictorNet net;
  PreparedSequence seq;
  Quaternion seed;
  LossConfig cfg;
};

Instance make_instance(Rng& rng, const GradcheckOptions& opts) {
  NetConfig nc;
  nc.flow_grid = 8;
  nc.history_N = 2;
  LossConfig cfg;
  cfg.weights = opts.weights;
  cfg.history.N = nc.history_N;
  ShakeSpec spec;
  spec.width = 160;
  spec.height = 120;
  spec.frames = opts.frames;
  spec.shake.amplitude = 1.0;
  spec.ois.amplitude = 1.0;
  spec.seed = rng.next();
  // Field of view of a full-resolution frame, so a 3 degree seed offset leaves
  // the protrusion term active but unclamped. Offsets near beta0 sit on the
  // steep part of the distortion logistic, where a 1e-4 difference is dominated
  // by truncation.
  const double focal = kFocalLength * spec.width / 1920.0;
  PreparedSequence seq(sequence_from_capture(generate_capture(spec), 8.0, focal), nc, cfg);
  const Quaternion seed = canonical(Quaternion(
      random_rotation([&] { return rng.uniform(); }, 3.0 * M_PI / 180.0) * seq.loss_inputs.front().real_rotation));
  PredictorNet net(nc, rng.next());
  // Zero biases put every unit fed by an all-zero input exactly on a ReLU kink.
  for (auto& p : net.params()) {
    if (p.name.find(".bias") == std::string::npos || p.name == "fc2.bias") continue;
    for (Eigen::Index i = 0; i < p.size(); ++i) p.value(i) += rng.uniform(-0.1, 0.1);
  }
  return Instance{std::move(net), std::move(seq), seed, cfg};
}

// Every discrete choice the graph makes: ReLU signs and which flow samples
// the loss keeps.
struct Branches {
  std::vector<std::uint8_t> relu;
  std::vector<bool> flow;
  bool operator==(const Branches&) const = default;
};

double evaluate(const Instance& in, ad::Tape& tape, bool backward, Branches* branches = nullptr) {
  const Rollout r = rollout(tape, in.net, in.seq.predictor, in.seed, in.cfg.history);
  const WindowLoss wl = window_loss(tape, r, in.seq.loss_inputs, in.seq.data.K, in.cfg, in.cfg.weights);
  if (backward) tape.backward(wl.total);
  if (branches) {
    branches->relu = tape.relu_pattern();
    branches->flow.clear();
    auto rotation = [&](std::size_t n) {
      const Eigen::VectorXd& q = tape.value(r.rotations[n]);
      return Quaternion(q(0), q(1), q(2), q(3));
    };
    for (std::size_t n = 1; n < in.seq.loss_inputs.size(); ++n) {
      if (const FlowPairSamples* f = in.seq.loss_inputs[n].flow) {
        const std::vector<bool> m = flow_sample_mask(*f, rotation(n - 1), rotation(n));
        branches->flow.insert(branches->flow.end(), m.begin(), m.end());
      }
    }
  }
  return wl.total_value;
}

}  // namespace

GradcheckResult run_gradcheck(const GradcheckOptions& opts) {
  if (opts.instances < 1 || opts.entries_per_tensor < 1 || opts.frames < 3) {
    throw InvalidArgument("gradcheck: need >= 1 instance, >= 1 entry per tensor and >= 3 frames");
  }
  if (!(opts.step > 0.0)) throw InvalidArgument("gradcheck: step must be > 0");
  Rng rng(opts.seed);
  GradcheckResult res;

  while (res.instances < opts.instances) {
    Instance in = make_instance(rng, opts);
    in.net.zero_grad();
    ad::Tape base;
    Branches pattern;
    evaluate(in, base, true, &pattern);

    // Central differences at h, h / 2 and h / 4, Richardson-combined to cancel
    // the h^2 term. The estimate from (h, h / 2) is the reference; it is
    // rejected when a ReLU flips or a flow sample crosses the frame border
    // inside the interval, or when it disagrees with the one from (h / 2, h / 4)
    // (another kink, such as a protrusion corner switch). The derivative there
    // is not what the tape computes.
    auto smooth_fd = [&](ad::Param& p, Eigen::Index i) -> std::optional<double> {
      const double x0 = p.value(i);
      double fd[3];
      for (int k = 0; k < 3; ++k) {
        const double h = std::ldexp(opts.step, -k);
        ad::Tape tp, tm;
        Branches bp, bm;
        p.value(i) = x0 + h;
        const double fp = evaluate(in, tp, false, &bp);
        p.value(i) = x0 - h;
        const double fm = evaluate(in, tm, false, &bm);
        p.value(i) = x0;
        if (bp != pattern || bm != pattern) return std::nullopt;
        fd[k] = (fp - fm) / (2.0 * h);
      }
      const double coarse = (4.0 * fd[1] - fd[0]) / 3.0;
      const double fine = (4.0 * fd[2] - fd[1]) / 3.0;
      if (std::abs(coarse - fine) > kSmoothness * std::max({std::abs(coarse), std::abs(fine), opts.floor})) {
        return std::nullopt;
      }
      return coarse;
    };

    // Smallest tensors first: they have no spare entries, so an instance that
    // cannot serve them is dropped before the large ones are paid for.
    std::vector<std::size_t> order(in.net.params().size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return in.net.params()[a].size() < in.net.params()[b].size(); });
    std::vector<TensorCheck> checks(order.size());
    bool usable = true;
    int skipped = 0;
    for (const std::size_t j : order) {
      ad::Param& p = in.net.params()[j];
      const Eigen::Index n = p.size();
      const int k = static_cast<int>(std::min<Eigen::Index>(n, opts.entries_per_tensor));
      std::vector<Eigen::Index> tried;
      std::vector<double> g, fd;
      while (static_cast<int>(g.size()) < k && static_cast<Eigen::Index>(tried.size()) < n &&
             static_cast<int>(tried.size()) < 4 * k) {
        const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        if (std::find(tried.begin(), tried.end(), i) != tried.end()) continue;
        tried.push_back(i);
        const auto d = smooth_fd(p, i);
        if (!d) {
          ++skipped;
          continue;
        }
        g.push_back(p.grad(i));
        fd.push_back(*d);
      }
      if (static_cast<int>(g.size()) < k) {
        usable = false;
        break;
      }
      const Eigen::Map<const Eigen::VectorXd> gv(g.data(), k), fv(fd.data(), k);
      checks[j] = {p.name, (gv - fv).norm() / std::max({gv.norm(), fv.norm(), opts.floor})};
    }
    if (!usable) {
      if (++res.redraws > opts.max_redraws) throw NumericError("gradcheck: too many instances without smooth entries");
      continue;
    }
    ++res.instances;
    res.skipped_entries += skipped;
    if (res.tensors.empty()) res.tensors = checks;
    for (std::size_t i = 0; i < checks.size(); ++i) {
      res.tensors[i].worst = std::max(res.tensors[i].worst, checks[i].worst);
    }
  }
  for (const auto& t : res.tensors) res.worst = std::max(res.worst, t.worst);
  res.passed = res.worst < opts.tolerance;
  return res;
}

std::string format_gradcheck(const GradcheckResult& r) {
  std::string out = "# tensor,worst_relative_error\n";
  for (const auto& t : r.tensors) out += t.name + "," + io::fmt(t.worst) + "\n";
  out += "instances," + std::to_string(r.instances) + "\n";
  out += "redraws," + std::to_string(r.redraws) + "\n";
  out += "skipped_entries," + std::to_string(r.skipped_entries) + "\n";
  out += "worst," + io::fmt(r.worst) + "\n";
  out += std::string("result,") + (r.passed ? "pass" : "fail") + "\n";
  return out;
}

}  // namespace fusestab
