#pragma once

// Reverse-mode differentiation over vector-valued nodes.
//
// A Tape records operations as they run; backward() walks the records in
// reverse and accumulates gradients into the nodes and into Param::grad.
// Small nonlinear pieces (quaternion algebra, loss terms) enter as custom ops
// whose local Jacobian comes from forward-mode AdScalar evaluation.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusestab/scalar.hpp"

namespace fusestab::ad {

/// Trainable tensor, stored flat in row-major order.
struct Param {
  std::string name;
  std::vector<int> dims;
  Eigen::VectorXd value;
  mutable Eigen::VectorXd grad;  // written by Tape::backward through const references

  Param() = default;
  Param(std::string name, std::vector<int> dims);
  Eigen::Index size() const { return value.size(); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

using AdVector = Eigen::Matrix<AdScalar, Eigen::Dynamic, 1>;
using CustomFn = std::function<AdVector(const AdVector&)>;

/// Most inputs a custom op may take (the inline derivative capacity).
inline constexpr int kMaxCustomInputs = 16;

class Tape {
 public:
  Var constant(Eigen::VectorXd value);
  Var constant(std::initializer_list<double> value);

  /// y = W x (+ b), W of shape rows x cols.
  Var affine(const Param& W, const Param* b, Var x);
  /// 3x3 convolution with zero padding 1. x is channel-major (c, y, x);
  /// K has shape (c_out, c_in * 9) and b has c_out entries.
  Var conv3x3(Var x, int c_in, int height, int width, const Param& K, const Param& b, int stride);
  static int conv_out_size(int n, int stride) { return (n - 1) / stride + 1; }

  Var relu(Var x);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var mul(Var a, Var b);  // elementwise
  Var add(Var a, Var b);
  Var scale(Var a, double s);
  Var concat(std::initializer_list<Var> parts);
  Var concat(const std::vector<Var>& parts);
  Var slice(Var x, int offset, int length);
  /// Mean over each channel of a channel-major (channels, n) input.
  Var channel_mean(Var x, int channels);
  Var squared_norm(Var x);
  /// sum_i w_i * x_i over scalar nodes.
  Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& w);

  /// Op with at most kMaxCustomInputs scalar inputs (the concatenated `inputs`).
  Var custom(const std::vector<Var>& inputs, const CustomFn& f);

  const Eigen::VectorXd& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  double scalar(Var v) const { return value(v)(0); }
  const Eigen::VectorXd& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  /// Seeds d(out)/d(out) = 1 for a scalar node and propagates.
  void backward(Var out);

  /// One byte per ReLU unit in recording order: 1 where the input is positive.
  /// Lets callers detect when a perturbation crosses a kink.
  const std::vector<std::uint8_t>& relu_pattern() const { return relu_pattern_; }

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Eigen::VectorXd&)> back;  // receives this node's gradient
  };

  Var push(Eigen::VectorXd value, bool needs_grad, std::function<void(Tape&, const Eigen::VectorXd&)> back);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  void accumulate(Var v, const Eigen::VectorXd& g);

  std::vector<Node> nodes_;
  std::vector<std::uint8_t> relu_pattern_;
};

}  // namespace fusestab::ad
