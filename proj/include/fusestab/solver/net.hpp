#pragma once

// Learned pose predictor: flow encoder + LSTM cell + FC head emitting an
// incremental rotation for the virtual camera.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/flow.hpp"
#include "fusestab/pose.hpp"
#include "fusestab/solver/tape.hpp"

namespace fusestab {

struct NetConfig {
  int flow_grid = 64;  // the encoder sees a 2 x flow_grid x flow_grid OIS-free flow
  std::array<int, 4> widths{8, 16, 32, 64};
  int history_N = 10;
  int hidden = 128;
  int fc = 64;

  int latent() const { return widths[3]; }
  int history_size() const { return 4 * (2 * history_N + 1) + 4 * history_N; }
  int joint_size() const { return latent() + history_size(); }
  void validate() const;
};

/// Scale applied to flow (pixels) before it enters the encoder.
inline constexpr double kFlowInputScale = 1.0 / 16.0;

/// Encoder input for one frame pair: the OIS-free flow resampled to grid x grid,
/// channel-major (u plane then v plane), scaled by kFlowInputScale, zero where
/// invalid.
Eigen::VectorXd flow_input(const FlowField& ois_free, int grid);

/// The net sees each history quaternion as kHistoryInputScale * (q - identity):
/// the vector parts of the relative rotations that matter are a few hundredths.
inline constexpr double kHistoryInputScale = 16.0;
Eigen::VectorXd zero_flow_input(int grid);

/// H_r then H_v, each quaternion as (w, x, y, z).
Eigen::VectorXd history_input(const MotionHistory& h);

class PredictorNet {
 public:
  struct State {
    ad::Var h, c;
  };
  struct Step {
    ad::Var delta;  // unit quaternion (w, x, y, z), w >= 0
    State state;
  };

  /// Random initialization from `seed`; the output layer starts near identity.
  explicit PredictorNet(const NetConfig& cfg = {}, std::uint64_t seed = 0);

  const NetConfig& config() const { return cfg_; }
  std::vector<ad::Param>& params() { return params_; }
  const std::vector<ad::Param>& params() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();
  /// Every parameter zero except the output bias (1, 0, 0, 0): the identity predictor.
  void lock();

  State initial_state(ad::Tape& tape) const;
  /// One time step. `flow` has 2 * grid^2 entries, `history` history_size().
  Step forward(ad::Tape& tape, const State& state, ad::Var flow, ad::Var history) const;

 private:
  const ad::Param& p(std::size_t i) const { return params_[i]; }

  NetConfig cfg_;
  std::vector<ad::Param> params_;
};

/// Normalized, sign-canonical quaternion of a raw 4-vector (identity when it vanishes).
template <typename S>
Vec4<S> unit_quaternion(const Vec4<S>& raw) {
  using std::sqrt;
  const S n = sqrt(raw.squaredNorm());
  if (!(value_of(n) > 1e-12)) return Vec4<S>(S(1.0), S(0.0), S(0.0), S(0.0));
  Vec4<S> q = raw / n;
  if (value_of(q(0)) < 0.0) q = -q;
  return q;
}

// Weights file: "FVSW", u32 version, then tensors until the end of the file,
// each u16 name length, name bytes, u32 rank, u32 dims..., f64 data; little-endian.
std::vector<std::uint8_t> encode_weights(const PredictorNet& net);
/// Loads into `net`, whose tensor names and shapes must match the file.
void decode_weights(std::span<const std::uint8_t> bytes, PredictorNet& net, const std::string& source = "weights");
void write_weights_file(const std::string& path, const PredictorNet& net);
void read_weights_file(const std::string& path, PredictorNet& net);

}  // namespace fusestab
