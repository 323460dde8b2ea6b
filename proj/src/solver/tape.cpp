#include "fusestab/solver/tape.hpp"

#include <cmath>
#include <utility>

#include "fusestab/errors.hpp"

namespace fusestab::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

}  // namespace

Param::Param(std::string n, std::vector<int> d) : name(std::move(n)), dims(std::move(d)) {
  Eigen::Index count = 1;
  for (int v : dims) {
    if (v < 1) throw InvalidArgument("Param '" + name + "': dimensions must be >= 1");
    count *= v;
  }
  value = Eigen::VectorXd::Zero(count);
  grad = Eigen::VectorXd::Zero(count);
}

Var Tape::push(Eigen::VectorXd value, bool needs_grad, std::function<void(Tape&, const Eigen::VectorXd&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Eigen::VectorXd& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::clear() {
  nodes_.clear();
  relu_pattern_.clear();
}

Var Tape::constant(Eigen::VectorXd value) { return push(std::move(value), false, nullptr); }

Var Tape::constant(std::initializer_list<double> value) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(value.size()));
  Eigen::Index i = 0;
  for (double x : value) v(i++) = x;
  return constant(std::move(v));
}

Var Tape::affine(const Param& W, const Param* b, Var x) {
  if (W.dims.size() != 2) throw InvalidArgument("affine: '" + W.name + "' is not a matrix");
  const int rows = W.dims[0], cols = W.dims[1];
  if (value(x).size() != cols) {
    throw InvalidArgument("affine: '" + W.name + "' expects " + std::to_string(cols) + " inputs, got " +
                          std::to_string(value(x).size()));
  }
  const ConstRowMap Wm(W.value.data(), rows, cols);
  Eigen::VectorXd y = Wm * value(x);
  if (b) y += b->value;
  const Param* Wp = &W;
  return push(std::move(y), true, [Wp, b, x, rows, cols](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd& xv = t.value(x);
    RowMap(Wp->grad.data(), rows, cols).noalias() += g * xv.transpose();
    if (b) b->grad += g;
    if (t.needs(x)) t.accumulate(x, ConstRowMap(Wp->value.data(), rows, cols).transpose() * g);
  });
}

Var Tape::conv3x3(Var x, int c_in, int height, int width, const Param& K, const Param& b, int stride) {
  if (K.dims.size() != 2 || K.dims[1] != c_in * 9) {
    throw InvalidArgument("conv3x3: '" + K.name + "' must have shape (c_out, " + std::to_string(c_in * 9) + ")");
  }
  if (value(x).size() != static_cast<Eigen::Index>(c_in) * height * width) {
    throw InvalidArgument("conv3x3: input size does not match its shape");
  }
  const int c_out = K.dims[0];
  const int ho = conv_out_size(height, stride), wo = conv_out_size(width, stride);
  const int npix = ho * wo;
  const Eigen::VectorXd& xv = value(x);

  // im2col: row (ci, ky, kx), column (oy, ox).
  RowMat cols = RowMat::Zero(c_in * 9, npix);
  for (int ci = 0; ci < c_in; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = ci * 9 + ky * 3 + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= width) continue;
            cols(row, oy * wo + ox) = xv((ci * height + iy) * width + ix);
          }
        }
      }

  Eigen::VectorXd y(static_cast<Eigen::Index>(c_out) * npix);
  RowMap ym(y.data(), c_out, npix);
  ym.noalias() = ConstRowMap(K.value.data(), c_out, c_in * 9) * cols;
  ym.colwise() += b.value;

  const Param* Kp = &K;
  const Param* bp = &b;
  return push(std::move(y), true,
              [Kp, bp, x, c_in, c_out, height, width, ho, wo, npix, stride, cols = std::move(cols)](
                  Tape& t, const Eigen::VectorXd& g) {
                const ConstRowMap gm(g.data(), c_out, npix);
                RowMap(Kp->grad.data(), c_out, c_in * 9).noalias() += gm * cols.transpose();
                bp->grad += gm.rowwise().sum();
                if (!t.needs(x)) return;
                const RowMat gcols = ConstRowMap(Kp->value.data(), c_out, c_in * 9).transpose() * gm;
                Eigen::VectorXd gx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c_in) * height * width);
                for (int ci = 0; ci < c_in; ++ci)
                  for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                      const int row = ci * 9 + ky * 3 + kx;
                      for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= height) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                          const int ix = ox * stride + kx - 1;
                          if (ix < 0 || ix >= width) continue;
                          gx((ci * height + iy) * width + ix) += gcols(row, oy * wo + ox);
                        }
                      }
                    }
                t.accumulate(x, gx);
              });
}

Var Tape::relu(Var x) {
  const Eigen::VectorXd& xv = value(x);
  Eigen::VectorXd y = xv.cwiseMax(0.0);
  for (Eigen::Index i = 0; i < xv.size(); ++i) relu_pattern_.push_back(xv(i) > 0.0 ? 1 : 0);
  return push(std::move(y), needs(x), [x](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd& xv = t.value(x);
    t.accumulate(x, (xv.array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var Tape::sigmoid(Var x) {
  Eigen::VectorXd y = (1.0 + (-value(x).array()).exp()).inverse().matrix();
  const Eigen::VectorXd yc = y;
  return push(std::move(y), needs(x), [x, yc](Tape& t, const Eigen::VectorXd& g) {
    t.accumulate(x, (g.array() * yc.array() * (1.0 - yc.array())).matrix());
  });
}

Var Tape::tanh(Var x) {
  Eigen::VectorXd y = value(x).array().tanh().matrix();
  const Eigen::VectorXd yc = y;
  return push(std::move(y), needs(x), [x, yc](Tape& t, const Eigen::VectorXd& g) {
    t.accumulate(x, (g.array() * (1.0 - yc.array().square())).matrix());
  });
}

Var Tape::mul(Var a, Var b) {
  if (value(a).size() != value(b).size()) throw InvalidArgument("mul: size mismatch");
  Eigen::VectorXd y = value(a).cwiseProduct(value(b));
  return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, const Eigen::VectorXd& g) {
    if (t.needs(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::add(Var a, Var b) {
  if (value(a).size() != value(b).size()) throw InvalidArgument("add: size mismatch");
  Eigen::VectorXd y = value(a) + value(b);
  return push(std::move(y), needs(a) || needs(b), [a, b](Tape& t, const Eigen::VectorXd& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::scale(Var a, double s) {
  Eigen::VectorXd y = s * value(a);
  return push(std::move(y), needs(a), [a, s](Tape& t, const Eigen::VectorXd& g) { t.accumulate(a, s * g); });
}

Var Tape::concat(std::initializer_list<Var> parts) { return concat(std::vector<Var>(parts)); }

Var Tape::concat(const std::vector<Var>& parts) {
  Eigen::Index n = 0;
  bool any = false;
  for (Var p : parts) {
    n += value(p).size();
    any = any || needs(p);
  }
  Eigen::VectorXd y(n);
  Eigen::Index off = 0;
  for (Var p : parts) {
    y.segment(off, value(p).size()) = value(p);
    off += value(p).size();
  }
  return push(std::move(y), any, [parts](Tape& t, const Eigen::VectorXd& g) {
    Eigen::Index off = 0;
    for (Var p : parts) {
      const Eigen::Index len = t.value(p).size();
      if (t.needs(p)) t.accumulate(p, g.segment(off, len));
      off += len;
    }
  });
}

Var Tape::slice(Var x, int offset, int length) {
  if (offset < 0 || length < 0 || offset + length > value(x).size()) throw InvalidArgument("slice: out of range");
  Eigen::VectorXd y = value(x).segment(offset, length);
  return push(std::move(y), needs(x), [x, offset, length](Tape& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(t.value(x).size());
    gx.segment(offset, length) = g;
    t.accumulate(x, gx);
  });
}

Var Tape::channel_mean(Var x, int channels) {
  const Eigen::Index total = value(x).size();
  if (channels < 1 || total % channels != 0) throw InvalidArgument("channel_mean: size is not a channel multiple");
  const Eigen::Index n = total / channels;
  const ConstRowMap xm(value(x).data(), channels, n);
  Eigen::VectorXd y = xm.rowwise().mean();
  return push(std::move(y), needs(x), [x, channels, n](Tape& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd gx(static_cast<Eigen::Index>(channels) * n);
    RowMap(gx.data(), channels, n).colwise() = g / static_cast<double>(n);
    t.accumulate(x, gx);
  });
}

Var Tape::squared_norm(Var x) {
  Eigen::VectorXd y(1);
  y(0) = value(x).squaredNorm();
  return push(std::move(y), needs(x), [x](Tape& t, const Eigen::VectorXd& g) {
    t.accumulate(x, 2.0 * g(0) * t.value(x));
  });
}

Var Tape::weighted_sum(const std::vector<Var>& xs, const std::vector<double>& w) {
  if (xs.size() != w.size()) throw InvalidArgument("weighted_sum: size mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
  bool any = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (value(xs[i]).size() != 1) throw InvalidArgument("weighted_sum: inputs must be scalars");
    y(0) += w[i] * value(xs[i])(0);
    any = any || needs(xs[i]);
  }
  return push(std::move(y), any, [xs, w](Tape& t, const Eigen::VectorXd& g) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (t.needs(xs[i])) t.accumulate(xs[i], Eigen::VectorXd::Constant(1, w[i] * g(0)));
    }
  });
}

Var Tape::custom(const std::vector<Var>& inputs, const CustomFn& f) {
  Eigen::Index n = 0;
  bool any = false;
  for (Var v : inputs) {
    n += value(v).size();
    any = any || needs(v);
  }
  if (n > kMaxCustomInputs) throw InvalidArgument("custom op: too many inputs (" + std::to_string(n) + ")");
  AdVector in(n);
  Eigen::Index off = 0;
  for (Var v : inputs) {
    const Eigen::VectorXd& xv = value(v);
    for (Eigen::Index i = 0; i < xv.size(); ++i, ++off) {
      in(off) = AdScalar(xv(i), AdDerivatives::Unit(n, off));
    }
  }
  const AdVector out = f(in);
  Eigen::VectorXd y(out.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(out.size(), n);
  for (Eigen::Index r = 0; r < out.size(); ++r) {
    y(r) = out(r).value();
    // Outputs that do not depend on any input carry an empty derivative vector.
    if (out(r).derivatives().size() == n) J.row(r) = out(r).derivatives().transpose();
  }
  return push(std::move(y), any, [inputs, J = std::move(J)](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd gx = J.transpose() * g;
    Eigen::Index off = 0;
    for (Var v : inputs) {
      const Eigen::Index len = t.value(v).size();
      if (t.needs(v)) t.accumulate(v, gx.segment(off, len));
      off += len;
    }
  });
}

void Tape::backward(Var out) {
  if (value(out).size() != 1) throw InvalidArgument("backward: output must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0);
  node(out).grad = Eigen::VectorXd::Ones(1);
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

}  // namespace fusestab::ad
