#include "fusestab/solver/train.hpp"

#include <cmath>

#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"
#include "fusestab/random.hpp"

namespace fusestab {

namespace {

constexpr double kDivergence = 1e6;
constexpr const char* kTelemetryHeader = "stage,iter,L_total,L_c0,L_c1,L_p,L_d,L_f";

struct WindowDraw {
  std::size_t capture = 0;
  std::size_t first = 0;
  Quaternion offset = Quaternion::Identity();
};

WindowDraw draw_window(Rng& rng, std::span<const PreparedSequence> data, int window, double augment_rad) {
  WindowDraw w;
  w.capture = static_cast<std::size_t>(rng.below(data.size()));
  const std::size_t span = data[w.capture].size() - static_cast<std::size_t>(window) + 1;
  w.first = static_cast<std::size_t>(rng.below(span));
  w.offset = random_rotation([&] { return rng.uniform(); }, augment_rad);
  return w;
}

WindowLoss window_at(ad::Tape& tape, const PredictorNet& net, const PreparedSequence& seq, const WindowDraw& w,
                     int window, const LossConfig& loss, const LossWeights& weights) {
  const auto n = static_cast<std::size_t>(window);
  const auto inputs = seq.loss_window(w.first, n);
  const Quaternion seed = canonical(Quaternion(w.offset * inputs.front().real_rotation));
  const Rollout r = rollout(tape, net, seq.predictor_window(w.first, n), seed, loss.history);
  return window_loss(tape, r, inputs, seq.data.K, loss, weights);
}

void check_data(std::span<const PreparedSequence> data, int window) {
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  for (const auto& s : data) {
    if (s.size() < static_cast<std::size_t>(window)) {
      throw InvalidArgument("train: capture shorter than the " + std::to_string(window) + "-frame window");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  for (int n : stage_iterations) {
    if (n <= 0) throw InvalidArgument("train: stage iteration counts must be > 0");
  }
  if (window < 3) throw InvalidArgument("train: window must be >= 3 frames");
  if (!(augment_deg >= 0.0)) throw InvalidArgument("train: augmentation bound must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train: momentum must be in [0, 1)");
  if (eval_windows < 1) throw InvalidArgument("train: need >= 1 evaluation window");
}

int TrainConfig::total_iterations() const { return stage_iterations[0] + stage_iterations[1] + stage_iterations[2]; }

std::array<int, 3> TrainConfig::boundaries() const {
  return {stage_iterations[0], stage_iterations[0] + stage_iterations[1], total_iterations()};
}

int TrainConfig::stage_of(int iter) const {
  const auto b = boundaries();
  if (iter < 0 || iter >= b[2]) throw OutOfRange("train: iteration outside the schedule");
  return iter < b[0] ? 1 : iter < b[1] ? 2 : 3;
}

TrainRecord evaluate_windows(const PredictorNet& net, std::span<const PreparedSequence> data, const LossConfig& loss,
                             const LossWeights& weights, int window, int count, double augment_deg,
                             std::uint64_t seed) {
  check_data(data, window);
  Rng rng(seed);
  TrainRecord rec;
  for (int k = 0; k < count; ++k) {
    const WindowDraw w = draw_window(rng, data, window, augment_deg * M_PI / 180.0);
    ad::Tape tape;
    const WindowLoss wl = window_at(tape, net, data[w.capture], w, window, loss, weights);
    rec.total += wl.total_value / count;
    rec.terms.c0 += wl.mean.c0 / count;
    rec.terms.c1 += wl.mean.c1 / count;
    rec.terms.p += wl.mean.p / count;
    rec.terms.d += wl.mean.d / count;
    rec.terms.f += wl.mean.f / count;
  }
  return rec;
}

TrainResult train(PredictorNet& net, std::span<const PreparedSequence> data, const LossConfig& loss,
                  const TrainConfig& cfg, const std::function<void(const TrainRecord&)>& progress) {
  cfg.validate();
  check_data(data, cfg.window);
  Rng rng(cfg.seed);
  const std::uint64_t eval_seed = rng.next();
  const double augment_rad = cfg.augment_deg * M_PI / 180.0;

  TrainResult res;
  auto eval = [&](int stage, int iter) {
    TrainRecord r = evaluate_windows(net, data, loss, loss.weights.for_stage(stage), cfg.window, cfg.eval_windows,
                                     cfg.augment_deg, eval_seed);
    r.stage = stage;
    r.iter = iter;
    res.eval.push_back(r);
  };
  eval(1, 0);

  std::vector<Eigen::VectorXd> velocity;
  for (const auto& p : net.params()) velocity.push_back(Eigen::VectorXd::Zero(p.size()));

  const auto ends = cfg.boundaries();
  for (int iter = 0; iter < cfg.total_iterations(); ++iter) {
    const int stage = cfg.stage_of(iter);
    const LossWeights weights = loss.weights.for_stage(stage);
    const WindowDraw w = draw_window(rng, data, cfg.window, augment_rad);

    // One window is one mini-batch: its per-frame losses are averaged on the
    // tape, so the gradients of all its frames are accumulated before the step.
    net.zero_grad();
    ad::Tape tape;
    const WindowLoss wl = window_at(tape, net, data[w.capture], w, cfg.window, loss, weights);
    if (!std::isfinite(wl.total_value) || wl.total_value > kDivergence) {
      throw NumericError("train: loss diverged at stage " + std::to_string(stage) + " iteration " +
                         std::to_string(iter) + " (L_total = " + io::fmt(wl.total_value) + ")");
    }
    tape.backward(wl.total);

    TrainRecord rec{stage, iter, wl.total_value, wl.mean};
    res.curve.push_back(rec);
    if (progress) progress(rec);

    double norm2 = 0.0;
    for (const auto& p : net.params()) norm2 += p.grad.squaredNorm();
    if (!std::isfinite(norm2)) {
      throw NumericError("train: non-finite gradient at stage " + std::to_string(stage) + " iteration " +
                         std::to_string(iter));
    }
    const double norm = std::sqrt(norm2);
    const double scale = cfg.clip_norm > 0.0 && norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    auto& params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * scale * params[i].grad;
      params[i].value += velocity[i];
    }

    for (int s = 0; s < 3; ++s) {
      if (iter + 1 == ends[static_cast<std::size_t>(s)]) eval(s + 1, iter + 1);
    }
  }
  return res;
}

std::string format_telemetry(std::span<const TrainRecord> rows) {
  std::string out = std::string(kTelemetryHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.stage) + "," + std::to_string(r.iter) + "," + io::fmt(r.total) + "," + io::fmt(r.terms.c0) +
           "," + io::fmt(r.terms.c1) + "," + io::fmt(r.terms.p) + "," + io::fmt(r.terms.d) + "," +
           io::fmt(r.terms.f) + "\n";
  }
  return out;
}

std::vector<TrainRecord> parse_telemetry(const std::string& source, std::string_view text) {
  std::vector<TrainRecord> rows;
  bool header = false;
  io::for_each_csv_row(source, text, [&](int line, const std::vector<std::string>& f) {
    if (f.size() != 8) throw FormatError(source, line, "expected 8 fields, got " + std::to_string(f.size()));
    if (!header) {
      std::string joined;
      for (std::size_t i = 0; i < f.size(); ++i) joined += (i ? "," : "") + f[i];
      if (joined != kTelemetryHeader) throw FormatError(source, line, "expected header " + std::string(kTelemetryHeader));
      header = true;
      return;
    }
    TrainRecord r;
    r.stage = static_cast<int>(io::parse_int(source, line, f[0]));
    r.iter = static_cast<int>(io::parse_int(source, line, f[1]));
    double* v[] = {&r.total, &r.terms.c0, &r.terms.c1, &r.terms.p, &r.terms.d, &r.terms.f};
    for (int k = 0; k < 6; ++k) {
      *v[k] = io::parse_double(source, line, f[static_cast<std::size_t>(k + 2)]);
      if (!std::isfinite(*v[k]) || *v[k] < 0.0) throw FormatError(source, line, "losses must be finite and >= 0");
    }
    if (r.stage < 1 || r.stage > 3) throw FormatError(source, line, "stage must be 1, 2 or 3");
    if (r.iter < 0) throw FormatError(source, line, "iteration must be >= 0");
    if (!rows.empty() && (r.stage < rows.back().stage || r.iter < rows.back().iter)) {
      throw FormatError(source, line, "stage and iteration must not decrease");
    }
    rows.push_back(r);
  });
  if (!header) throw FormatError(source, 0, "empty telemetry");
  return rows;
}

std::vector<ShakeSpec> synthetic_training_specs(std::uint64_t seed, int captures, int frames) {
  if (captures < 1) throw InvalidArgument("training set: need >= 1 capture");
  Rng rng(seed);
  std::vector<ShakeSpec> out;
  for (int i = 0; i < captures; ++i) {
    ShakeSpec s;
    s.frames = frames;
    s.shake.amplitude = 1.0;
    s.ois.amplitude = 1.0;
    if (i % 2 == 1) {
      s.base = BasePath::Panning;
      s.pan_rate_deg = rng.uniform(4.0, 10.0);
      s.pan_axis = Eigen::Vector3d(rng.uniform(-0.3, 0.3), 1.0, rng.uniform(-0.1, 0.1)).normalized();
    }
    s.seed = rng.next();
    out.push_back(s);
  }
  return out;
}

}  // namespace fusestab
