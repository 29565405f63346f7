#pragma once

// Convolution and batch-norm graph ops for 5-D tensors laid out as
// (B, C, H, W, T), row-major. Kernels are KxKx1 with stride sxsx1, so the
// time axis is pointwise: each (batch, t) pair is an independent 2-D
// convolution done as im2col + GEMM. Transposed convolution reuses the same
// geometry with gather and scatter swapped.

#include "efe/graph.hpp"

namespace efe::ad {

namespace conv_detail {

// Flat offset of element (b, c, h, w, t) in a (B,C,H,W,T) tensor.
inline Eigen::Index at(Eigen::Index b, Eigen::Index c, Eigen::Index h, Eigen::Index w, Eigen::Index t,
                       const Shape& s) {
  return ((((b * s[1] + c) * s[2] + h) * s[3] + w) * s[4] + t);
}

struct ConvGeom {
  Eigen::Index cin, hin, win, cout, hout, wout, k, stride;
  Eigen::Index patch() const { return cin * k * k; }
  Eigen::Index cols() const { return hout * wout; }
};

// Gathers the (b,t) slice of x into a (cin*k*k) x (hout*wout) column matrix.
template <typename S>
void im2col(const Tensor<S>& x, Eigen::Index b, Eigen::Index t, const ConvGeom& g,
            typename Tensor<S>::Matrix& cols) {
  const Shape& xs = x.shape();
  const S* px = x.data();
  for (Eigen::Index ci = 0; ci < g.cin; ++ci)
    for (Eigen::Index kh = 0; kh < g.k; ++kh)
      for (Eigen::Index kw = 0; kw < g.k; ++kw) {
        Eigen::Index row = (ci * g.k + kh) * g.k + kw;
        for (Eigen::Index ho = 0; ho < g.hout; ++ho) {
          Eigen::Index h = ho * g.stride + kh;
          for (Eigen::Index wo = 0; wo < g.wout; ++wo) {
            Eigen::Index w = wo * g.stride + kw;
            cols(row, ho * g.wout + wo) = px[at(b, ci, h, w, t, xs)];
          }
        }
      }
}

// Adjoint of im2col: scatter-adds columns back into the (b,t) slice of x.
template <typename S>
void col2im_add(const typename Tensor<S>::Matrix& cols, Eigen::Index b, Eigen::Index t, const ConvGeom& g,
                Tensor<S>& x) {
  const Shape& xs = x.shape();
  S* px = x.data();
  for (Eigen::Index ci = 0; ci < g.cin; ++ci)
    for (Eigen::Index kh = 0; kh < g.k; ++kh)
      for (Eigen::Index kw = 0; kw < g.k; ++kw) {
        Eigen::Index row = (ci * g.k + kh) * g.k + kw;
        for (Eigen::Index ho = 0; ho < g.hout; ++ho) {
          Eigen::Index h = ho * g.stride + kh;
          for (Eigen::Index wo = 0; wo < g.wout; ++wo) {
            Eigen::Index w = wo * g.stride + kw;
            px[at(b, ci, h, w, t, xs)] += cols(row, ho * g.wout + wo);
          }
        }
      }
}

// Copies a (cout) x (hout*wout) matrix into the (b,t) slice of y.
template <typename S>
void slice_store(const typename Tensor<S>::Matrix& m, Eigen::Index b, Eigen::Index t, Tensor<S>& y) {
  const Shape& ys = y.shape();
  S* py = y.data();
  for (Eigen::Index c = 0; c < ys[1]; ++c)
    for (Eigen::Index h = 0; h < ys[2]; ++h)
      for (Eigen::Index w = 0; w < ys[3]; ++w) py[at(b, c, h, w, t, ys)] = m(c, h * ys[3] + w);
}

// Gathers the (b,t) slice of y into a (c) x (h*w) matrix.
template <typename S>
void slice_load(const Tensor<S>& y, Eigen::Index b, Eigen::Index t, typename Tensor<S>::Matrix& m) {
  const Shape& ys = y.shape();
  const S* py = y.data();
  for (Eigen::Index c = 0; c < ys[1]; ++c)
    for (Eigen::Index h = 0; h < ys[2]; ++h)
      for (Eigen::Index w = 0; w < ys[3]; ++w) m(c, h * ys[3] + w) = py[at(b, c, h, w, t, ys)];
}

}  // namespace conv_detail

// y = conv(x, w) + bias. x: (B,Cin,H,W,T), w: (Cout,Cin,K,K), bias: (Cout).
template <typename S>
class Conv3dNode : public Node<S> {
 public:
  Conv3dNode(NodePtr<S> x, NodePtr<S> w, NodePtr<S> bias, Eigen::Index stride) : Node<S>() {
    const Shape& xs = x->value.shape();
    const Shape& ws = w->value.shape();
    EFE_CHECK(xs.size() == 5 && ws.size() == 4 && ws[1] == xs[1], "conv3d: bad input/weight shapes");
    EFE_CHECK(bias->value.size() == ws[0], "conv3d: bias length mismatch");
    g_.cin = xs[1];
    g_.hin = xs[2];
    g_.win = xs[3];
    g_.cout = ws[0];
    g_.k = ws[2];
    g_.stride = stride;
    g_.hout = (g_.hin - g_.k) / stride + 1;
    g_.wout = (g_.win - g_.k) / stride + 1;
    EFE_CHECK(g_.hout >= 1 && g_.wout >= 1, "conv3d: kernel larger than input");
    this->parents = {x, w, bias};
    if (grad_enabled()) this->requires_grad = x->requires_grad || w->requires_grad || bias->requires_grad;
    this->value = Tensor<S>({xs[0], g_.cout, g_.hout, g_.wout, xs[4]});

    auto wm = w->value.matrix_view(g_.cout, g_.patch());
    typename Tensor<S>::Matrix cols(g_.patch(), g_.cols());
    typename Tensor<S>::Matrix out(g_.cout, g_.cols());
    auto bv = Eigen::Map<const Eigen::VectorX<S>>(bias->value.data(), g_.cout);
    for (Eigen::Index b = 0; b < xs[0]; ++b)
      for (Eigen::Index t = 0; t < xs[4]; ++t) {
        conv_detail::im2col(x->value, b, t, g_, cols);
        out.noalias() = wm * cols;
        out.colwise() += bv;
        conv_detail::slice_store(out, b, t, this->value);
      }
  }

  void push_grad() override {
    auto& x = this->parents[0];
    auto& w = this->parents[1];
    auto& bias = this->parents[2];
    const Shape& xs = x->value.shape();
    typename Tensor<S>::Matrix gout(g_.cout, g_.cols());
    typename Tensor<S>::Matrix cols(g_.patch(), g_.cols());
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (bias->requires_grad) bias->ensure_grad();
    auto wm = w->value.matrix_view(g_.cout, g_.patch());
    for (Eigen::Index b = 0; b < xs[0]; ++b)
      for (Eigen::Index t = 0; t < xs[4]; ++t) {
        conv_detail::slice_load(this->grad, b, t, gout);
        if (bias->requires_grad)
          Eigen::Map<Eigen::VectorX<S>>(bias->grad.data(), g_.cout) += gout.rowwise().sum();
        if (w->requires_grad) {
          conv_detail::im2col(x->value, b, t, g_, cols);
          w->grad.matrix_view(g_.cout, g_.patch()).noalias() += gout * cols.transpose();
        }
        if (x->requires_grad) {
          cols.noalias() = wm.transpose() * gout;
          conv_detail::col2im_add<S>(cols, b, t, g_, x->grad);
        }
      }
  }

 private:
  conv_detail::ConvGeom g_;
};

template <typename S>
NodePtr<S> conv3d(NodePtr<S> x, NodePtr<S> w, NodePtr<S> bias, Eigen::Index stride) {
  return std::make_shared<Conv3dNode<S>>(std::move(x), std::move(w), std::move(bias), stride);
}

// y = conv_transpose(x, w) + bias. x: (B,Cin,H,W,T), w: (Cin,Cout,K,K),
// bias: (Cout). Output spatial size is (H-1)*stride + K; this node is the
// exact adjoint of conv3d with the same kernel and stride.
template <typename S>
class ConvTranspose3dNode : public Node<S> {
 public:
  ConvTranspose3dNode(NodePtr<S> x, NodePtr<S> w, NodePtr<S> bias, Eigen::Index stride) : Node<S>() {
    const Shape& xs = x->value.shape();
    const Shape& ws = w->value.shape();
    EFE_CHECK(xs.size() == 5 && ws.size() == 4 && ws[0] == xs[1], "conv3d_transpose: bad input/weight shapes");
    EFE_CHECK(bias->value.size() == ws[1], "conv3d_transpose: bias length mismatch");
    // The geometry is phrased as the mirrored forward conv: its input is this
    // node's output.
    g_.cin = ws[1];
    g_.cout = xs[1];
    g_.k = ws[2];
    g_.stride = stride;
    g_.hout = xs[2];
    g_.wout = xs[3];
    g_.hin = (xs[2] - 1) * stride + g_.k;
    g_.win = (xs[3] - 1) * stride + g_.k;
    this->parents = {x, w, bias};
    if (grad_enabled()) this->requires_grad = x->requires_grad || w->requires_grad || bias->requires_grad;
    this->value = Tensor<S>({xs[0], g_.cin, g_.hin, g_.win, xs[4]});

    auto wm = w->value.matrix_view(g_.cout, g_.patch());
    typename Tensor<S>::Matrix xm(g_.cout, g_.cols());
    typename Tensor<S>::Matrix cols(g_.patch(), g_.cols());
    const S* pb = bias->value.data();
    for (Eigen::Index b = 0; b < xs[0]; ++b)
      for (Eigen::Index t = 0; t < xs[4]; ++t) {
        conv_detail::slice_load(x->value, b, t, xm);
        cols.noalias() = wm.transpose() * xm;
        conv_detail::col2im_add<S>(cols, b, t, g_, this->value);
      }
    // Scatter regions overlap, so the bias is added after accumulation.
    S* py = this->value.data();
    const Shape& ys = this->value.shape();
    for (Eigen::Index b = 0; b < ys[0]; ++b)
      for (Eigen::Index c = 0; c < ys[1]; ++c)
        for (Eigen::Index h = 0; h < ys[2]; ++h)
          for (Eigen::Index w2 = 0; w2 < ys[3]; ++w2)
            for (Eigen::Index t = 0; t < ys[4]; ++t) py[conv_detail::at(b, c, h, w2, t, ys)] += pb[c];
  }

  void push_grad() override {
    auto& x = this->parents[0];
    auto& w = this->parents[1];
    auto& bias = this->parents[2];
    const Shape& xs = x->value.shape();
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (bias->requires_grad) {
      bias->ensure_grad();
      // dBias: sum of the output gradient over everything but the channel.
      const S* pg = this->grad.data();
      const Shape& ys = this->grad.shape();
      S* pb = bias->grad.data();
      for (Eigen::Index b = 0; b < ys[0]; ++b)
        for (Eigen::Index c = 0; c < ys[1]; ++c)
          for (Eigen::Index h = 0; h < ys[2]; ++h)
            for (Eigen::Index w2 = 0; w2 < ys[3]; ++w2)
              for (Eigen::Index t = 0; t < ys[4]; ++t) pb[c] += pg[conv_detail::at(b, c, h, w2, t, ys)];
    }
    auto wm = w->value.matrix_view(g_.cout, g_.patch());
    typename Tensor<S>::Matrix cols(g_.patch(), g_.cols());
    typename Tensor<S>::Matrix xm(g_.cout, g_.cols());
    typename Tensor<S>::Matrix gx(g_.cout, g_.cols());
    for (Eigen::Index b = 0; b < xs[0]; ++b)
      for (Eigen::Index t = 0; t < xs[4]; ++t) {
        conv_detail::im2col(this->grad, b, t, g_, cols);
        if (x->requires_grad) {
          gx.noalias() = wm * cols;
          // Accumulate into the (b,t) slice of x->grad.
          const Shape& s = x->grad.shape();
          S* pgx = x->grad.data();
          for (Eigen::Index c = 0; c < s[1]; ++c)
            for (Eigen::Index h = 0; h < s[2]; ++h)
              for (Eigen::Index w2 = 0; w2 < s[3]; ++w2)
                pgx[conv_detail::at(b, c, h, w2, t, s)] += gx(c, h * s[3] + w2);
        }
        if (w->requires_grad) {
          conv_detail::slice_load(x->value, b, t, xm);
          w->grad.matrix_view(g_.cout, g_.patch()).noalias() += xm * cols.transpose();
        }
      }
  }

 private:
  conv_detail::ConvGeom g_;
};

template <typename S>
NodePtr<S> conv3d_transpose(NodePtr<S> x, NodePtr<S> w, NodePtr<S> bias, Eigen::Index stride) {
  return std::make_shared<ConvTranspose3dNode<S>>(std::move(x), std::move(w), std::move(bias), stride);
}

// Per-channel running statistics owned by the enclosing layer; the node
// mutates them through this handle during training-mode forward passes.
template <typename S>
struct BatchNormStats {
  Tensor<S> mean;
  Tensor<S> var;
  explicit BatchNormStats(Eigen::Index channels)
      : mean(Tensor<S>::zeros({channels})), var(Tensor<S>::ones({channels})) {}
};

// Batch norm over (B,H,W,T) per channel. gamma/beta: (C).
template <typename S>
class BatchNormNode : public Node<S> {
 public:
  BatchNormNode(NodePtr<S> x, NodePtr<S> gamma, NodePtr<S> beta, BatchNormStats<S>* stats, bool training,
                S momentum, S eps)
      : Node<S>(), training_(training) {
    const Shape& xs = x->value.shape();
    EFE_CHECK(xs.size() == 5, "batch_norm: 5-D input required");
    Eigen::Index c = xs[1];
    EFE_CHECK(gamma->value.size() == c && beta->value.size() == c && stats != nullptr,
              "batch_norm: parameter length mismatch");
    this->parents = {x, gamma, beta};
    if (grad_enabled()) this->requires_grad = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    n_ = xs[0] * xs[2] * xs[3] * xs[4];
    mean_ = Tensor<S>({c});
    inv_std_ = Tensor<S>({c});
    if (training) {
      for (Eigen::Index ci = 0; ci < c; ++ci) {
        S sum = 0, sq = 0;
        for_channel(x->value, ci, [&](S v) {
          sum += v;
          sq += v * v;
        });
        S m = sum / S(n_);
        S var = sq / S(n_) - m * m;
        if (var < S(0)) var = S(0);
        mean_[ci] = m;
        inv_std_[ci] = S(1) / std::sqrt(var + eps);
        stats->mean[ci] = (S(1) - momentum) * stats->mean[ci] + momentum * m;
        S unbiased = n_ > 1 ? var * S(n_) / S(n_ - 1) : var;
        stats->var[ci] = (S(1) - momentum) * stats->var[ci] + momentum * unbiased;
      }
    } else {
      for (Eigen::Index ci = 0; ci < c; ++ci) {
        mean_[ci] = stats->mean[ci];
        inv_std_[ci] = S(1) / std::sqrt(stats->var[ci] + eps);
      }
    }
    xhat_ = Tensor<S>(xs);
    this->value = Tensor<S>(xs);
    const S* pg = gamma->value.data();
    const S* pb = beta->value.data();
    for (Eigen::Index ci = 0; ci < c; ++ci) {
      S m = mean_[ci], is = inv_std_[ci], ga = pg[ci], be = pb[ci];
      for_channel_idx(x->value, ci, [&](Eigen::Index off) {
        S xh = (x->value[off] - m) * is;
        xhat_[off] = xh;
        this->value[off] = ga * xh + be;
      });
    }
  }

  void push_grad() override {
    auto& x = this->parents[0];
    auto& gamma = this->parents[1];
    auto& beta = this->parents[2];
    Eigen::Index c = x->value.dim(1);
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    for (Eigen::Index ci = 0; ci < c; ++ci) {
      S sum_dy = 0, sum_dy_xhat = 0;
      for_channel_idx(this->grad, ci, [&](Eigen::Index off) {
        sum_dy += this->grad[off];
        sum_dy_xhat += this->grad[off] * xhat_[off];
      });
      if (beta->requires_grad) beta->grad[ci] += sum_dy;
      if (gamma->requires_grad) gamma->grad[ci] += sum_dy_xhat;
      if (x->requires_grad) {
        S ga = gamma->value[ci], is = inv_std_[ci];
        if (training_) {
          S m_dy = sum_dy / S(n_), m_dy_xhat = sum_dy_xhat / S(n_);
          for_channel_idx(this->grad, ci, [&](Eigen::Index off) {
            x->grad[off] += ga * is * (this->grad[off] - m_dy - xhat_[off] * m_dy_xhat);
          });
        } else {
          for_channel_idx(this->grad, ci, [&](Eigen::Index off) { x->grad[off] += ga * is * this->grad[off]; });
        }
      }
    }
  }

 private:
  template <typename F>
  static void for_channel(const Tensor<S>& t, Eigen::Index c, F f) {
    for_channel_idx(t, c, [&](Eigen::Index off) { f(t[off]); });
  }
  template <typename F>
  static void for_channel_idx(const Tensor<S>& t, Eigen::Index c, F f) {
    const Shape& s = t.shape();
    for (Eigen::Index b = 0; b < s[0]; ++b)
      for (Eigen::Index h = 0; h < s[2]; ++h)
        for (Eigen::Index w = 0; w < s[3]; ++w)
          for (Eigen::Index tt = 0; tt < s[4]; ++tt) f(conv_detail::at(b, c, h, w, tt, s));
  }

  bool training_;
  Eigen::Index n_ = 0;
  Tensor<S> mean_, inv_std_, xhat_;
};

template <typename S>
NodePtr<S> batch_norm(NodePtr<S> x, NodePtr<S> gamma, NodePtr<S> beta, BatchNormStats<S>* stats, bool training,
                      S momentum = S(0.1), S eps = S(1e-5)) {
  return std::make_shared<BatchNormNode<S>>(std::move(x), std::move(gamma), std::move(beta), stats, training,
                                            momentum, eps);
}

}  // namespace efe::ad
