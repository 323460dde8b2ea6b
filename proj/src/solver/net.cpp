#include "fusestab/solver/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"
#include "fusestab/random.hpp"

namespace fusestab {

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

// Parameter slots, in file order.
enum Slot : std::size_t {
  kConv0W, kConv0B, kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B,
  kLstmW, kLstmB, kFc1W, kFc1B, kFc2W, kFc2B, kSlotCount
};

void fill_uniform(ad::Param& p, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < p.size(); ++i) p.value(i) = rng.uniform(-bound, bound);
}

}  // namespace

void NetConfig::validate() const {
  if (flow_grid < 1) throw InvalidArgument("net: flow grid must be >= 1");
  for (int w : widths) {
    if (w < 1) throw InvalidArgument("net: channel widths must be >= 1");
  }
  if (history_N < 0) throw InvalidArgument("net: history N must be >= 0");
  if (hidden < 1 || fc < 1) throw InvalidArgument("net: layer sizes must be >= 1");
}

Eigen::VectorXd zero_flow_input(int grid) { return Eigen::VectorXd::Zero(2 * grid * grid); }

Eigen::VectorXd flow_input(const FlowField& ois_free, int grid) {
  const FlowField r = resample(ois_free, grid, grid);
  Eigen::VectorXd out = zero_flow_input(grid);
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      if (!r.valid(y, x)) continue;
      out(y * grid + x) = r.u(y, x) * kFlowInputScale;
      out(grid * grid + y * grid + x) = r.v(y, x) * kFlowInputScale;
    }
  }
  return out;
}

Eigen::VectorXd history_input(const MotionHistory& h) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(4 * (h.real.size() + h.virt.size())));
  Eigen::Index i = 0;
  for (const auto* list : {&h.real, &h.virt}) {
    for (const auto& q : *list) {
      out.segment<4>(i) = to_wxyz(q);
      i += 4;
    }
  }
  return out;
}

PredictorNet::PredictorNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int c_in = 2;
  for (int s = 0; s < 4; ++s) {
    const int c_out = cfg_.widths[static_cast<std::size_t>(s)];
    ad::Param W("conv" + std::to_string(s) + ".weight", {c_out, c_in * 9});
    ad::Param b("conv" + std::to_string(s) + ".bias", {c_out});
    fill_uniform(W, rng, std::sqrt(6.0 / (c_in * 9)));
    params_.push_back(std::move(W));
    params_.push_back(std::move(b));
    c_in = c_out;
  }
  const int H = cfg_.hidden;
  ad::Param lw("lstm.weight", {4 * H, cfg_.joint_size() + H});
  ad::Param lb("lstm.bias", {4 * H});
  fill_uniform(lw, rng, 1.0 / std::sqrt(static_cast<double>(H)));
  lb.value.segment(H, H).setOnes();  // forget gate
  params_.push_back(std::move(lw));
  params_.push_back(std::move(lb));

  ad::Param f1("fc1.weight", {cfg_.fc, H});
  ad::Param f1b("fc1.bias", {cfg_.fc});
  fill_uniform(f1, rng, std::sqrt(6.0 / H));
  params_.push_back(std::move(f1));
  params_.push_back(std::move(f1b));

  ad::Param f2("fc2.weight", {4, cfg_.fc});
  ad::Param f2b("fc2.bias", {4});
  fill_uniform(f2, rng, 1e-3 / std::sqrt(static_cast<double>(cfg_.fc)));
  f2b.value(0) = 1.0;
  params_.push_back(std::move(f2));
  params_.push_back(std::move(f2b));
}

std::size_t PredictorNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

void PredictorNet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

void PredictorNet::lock() {
  for (auto& p : params_) p.value.setZero();
  params_[kFc2B].value(0) = 1.0;
}

PredictorNet::State PredictorNet::initial_state(ad::Tape& tape) const {
  return {tape.constant(Eigen::VectorXd::Zero(cfg_.hidden)), tape.constant(Eigen::VectorXd::Zero(cfg_.hidden))};
}

PredictorNet::Step PredictorNet::forward(ad::Tape& tape, const State& state, ad::Var flow, ad::Var history) const {
  const int G = cfg_.flow_grid;
  if (tape.value(flow).size() != 2 * G * G) throw InvalidArgument("net: flow input has the wrong size");
  if (tape.value(history).size() != cfg_.history_size()) throw InvalidArgument("net: history input has the wrong size");

  ad::Var x = flow;
  int c = 2, h = G, w = G;
  for (std::size_t s = 0; s < 4; ++s) {
    x = tape.relu(tape.conv3x3(x, c, h, w, p(kConv0W + 2 * s), p(kConv0B + 2 * s), 2));
    c = cfg_.widths[s];
    h = ad::Tape::conv_out_size(h, 2);
    w = ad::Tape::conv_out_size(w, 2);
  }
  const ad::Var z = tape.channel_mean(x, c);

  Eigen::VectorXd shift = Eigen::VectorXd::Zero(cfg_.history_size());
  for (Eigen::Index k = 0; k < shift.size(); k += 4) shift(k) = -1.0;
  const ad::Var hist = tape.scale(tape.add(history, tape.constant(std::move(shift))), kHistoryInputScale);

  const int H = cfg_.hidden;
  const ad::Var gates = tape.affine(p(kLstmW), &p(kLstmB), tape.concat({z, hist, state.h}));
  const ad::Var i = tape.sigmoid(tape.slice(gates, 0, H));
  const ad::Var f = tape.sigmoid(tape.slice(gates, H, H));
  const ad::Var g = tape.tanh(tape.slice(gates, 2 * H, H));
  const ad::Var o = tape.sigmoid(tape.slice(gates, 3 * H, H));
  const ad::Var c_new = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  const ad::Var h_new = tape.mul(o, tape.tanh(c_new));

  const ad::Var y = tape.relu(tape.affine(p(kFc1W), &p(kFc1B), h_new));
  const ad::Var raw = tape.affine(p(kFc2W), &p(kFc2B), y);
  const ad::Var delta =
      tape.custom({raw}, [](const ad::AdVector& v) -> ad::AdVector { return unit_quaternion<AdScalar>(v.head<4>()); });
  return {delta, {h_new, c_new}};
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "weights files are little-endian");
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos, const std::string& source) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError(source, 0, "truncated weights file");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const PredictorNet& net) {
  std::vector<std::uint8_t> out;
  for (char ch : {'F', 'V', 'S', 'W'}) out.push_back(static_cast<std::uint8_t>(ch));
  put<std::uint32_t>(out, kWeightsVersion);
  for (const auto& p : net.params()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.dims.size()));
    for (int d : p.dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < p.size(); ++i) put<double>(out, p.value(i));
  }
  return out;
}

void decode_weights(std::span<const std::uint8_t> bytes, PredictorNet& net, const std::string& source) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "FVSW", 4) != 0) throw FormatError(source, 0, "bad weights magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos, source);
  if (version != kWeightsVersion) throw FormatError(source, 0, "unsupported weights version " + std::to_string(version));
  std::vector<Eigen::VectorXd> loaded;
  for (const auto& p : net.params()) {
    if (pos >= bytes.size()) throw FormatError(source, 0, "missing tensor '" + p.name + "'");
    const auto len = get<std::uint16_t>(bytes, pos, source);
    if (pos + len > bytes.size()) throw FormatError(source, 0, "truncated weights file");
    const std::string name(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    if (name != p.name) throw FormatError(source, 0, "expected tensor '" + p.name + "', found '" + name + "'");
    const auto rank = get<std::uint32_t>(bytes, pos, source);
    if (rank != p.dims.size()) throw FormatError(source, 0, "tensor '" + name + "' has the wrong rank");
    for (int d : p.dims) {
      if (get<std::uint32_t>(bytes, pos, source) != static_cast<std::uint32_t>(d)) {
        throw FormatError(source, 0, "tensor '" + name + "' has the wrong shape");
      }
    }
    Eigen::VectorXd v(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      v(i) = get<double>(bytes, pos, source);
      if (!std::isfinite(v(i))) throw FormatError(source, 0, "non-finite value in tensor '" + name + "'");
    }
    loaded.push_back(std::move(v));
  }
  if (pos != bytes.size()) throw FormatError(source, 0, "trailing data after the last tensor");
  for (std::size_t i = 0; i < loaded.size(); ++i) net.params()[i].value = std::move(loaded[i]);
}

void write_weights_file(const std::string& path, const PredictorNet& net) {
  const auto bytes = encode_weights(net);
  io::write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void read_weights_file(const std::string& path, PredictorNet& net) {
  const std::string text = io::read_file(path);
  decode_weights(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), net, path);
}

}  // namespace fusestab
