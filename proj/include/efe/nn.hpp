#pragma once

// Trainable layers on top of the graph ops, plus Adam and a named parameter
// registry used for checkpointing. All parameters are initialized from
// U(-1/sqrt(fan_in), +1/sqrt(fan_in)) using a caller-supplied RNG stream so
// runs are reproducible end to end.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "efe/conv.hpp"
#include "efe/graph.hpp"

namespace efe::nn {

using ad::NodePtr;

// Named handles to everything a checkpoint must carry: trainable parameters
// (leaf nodes touched by the optimizer) and buffers (batch-norm running
// statistics, updated in forward passes rather than by gradient).
template <typename S>
struct ParamRegistry {
  std::vector<std::pair<std::string, NodePtr<S>>> params;
  std::vector<std::pair<std::string, Tensor<S>*>> buffers;

  void add(const std::string& name, NodePtr<S> p) { params.emplace_back(name, std::move(p)); }
  void add_buffer(const std::string& name, Tensor<S>* t) { buffers.emplace_back(name, t); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& [name, p] : params) n += p->value.size();
    return n;
  }
};

template <typename S>
void uniform_init(Tensor<S>& t, Eigen::Index fan_in, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(dist(rng));
}

template <typename S>
NodePtr<S> init_param(Shape shape, Eigen::Index fan_in, std::mt19937_64& rng) {
  Tensor<S> t(std::move(shape));
  uniform_init(t, fan_in, rng);
  return ad::parameter(std::move(t));
}

// Fully connected layer; input (B, in), output (B, out).
template <typename S>
class Dense {
 public:
  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
      : w(init_param<S>({in, out}, in, rng)), b(init_param<S>({out}, in, rng)) {}

  NodePtr<S> operator()(NodePtr<S> x) const { return ad::add_row(ad::matmul(std::move(x), w), b); }

  void register_into(ParamRegistry<S>& reg, const std::string& prefix) const {
    reg.add(prefix + ".w", w);
    reg.add(prefix + ".b", b);
  }

  NodePtr<S> w, b;
};

template <typename S>
class Conv3dLayer {
 public:
  Conv3dLayer() = default;
  Conv3dLayer(Eigen::Index cin, Eigen::Index cout, Eigen::Index k, Eigen::Index stride, std::mt19937_64& rng)
      : stride_(stride),
        w(init_param<S>({cout, cin, k, k}, cin * k * k, rng)),
        b(init_param<S>({cout}, cin * k * k, rng)) {}

  NodePtr<S> operator()(NodePtr<S> x) const { return ad::conv3d(std::move(x), w, b, stride_); }

  void register_into(ParamRegistry<S>& reg, const std::string& prefix) const {
    reg.add(prefix + ".w", w);
    reg.add(prefix + ".b", b);
  }

  Eigen::Index stride_ = 1;
  NodePtr<S> w, b;
};

template <typename S>
class ConvTranspose3dLayer {
 public:
  ConvTranspose3dLayer() = default;
  ConvTranspose3dLayer(Eigen::Index cin, Eigen::Index cout, Eigen::Index k, Eigen::Index stride,
                       std::mt19937_64& rng)
      : stride_(stride),
        w(init_param<S>({cin, cout, k, k}, cout * k * k, rng)),
        b(init_param<S>({cout}, cout * k * k, rng)) {}

  NodePtr<S> operator()(NodePtr<S> x) const { return ad::conv3d_transpose(std::move(x), w, b, stride_); }

  void register_into(ParamRegistry<S>& reg, const std::string& prefix) const {
    reg.add(prefix + ".w", w);
    reg.add(prefix + ".b", b);
  }

  Eigen::Index stride_ = 1;
  NodePtr<S> w, b;
};

template <typename S>
class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  explicit BatchNorm3d(Eigen::Index channels)
      : gamma(ad::parameter(Tensor<S>::ones({channels}))),
        beta(ad::parameter(Tensor<S>::zeros({channels}))),
        stats(std::make_shared<ad::BatchNormStats<S>>(channels)) {}

  NodePtr<S> operator()(NodePtr<S> x, bool training) const {
    return ad::batch_norm(std::move(x), gamma, beta, stats.get(), training);
  }

  void register_into(ParamRegistry<S>& reg, const std::string& prefix) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
    reg.add_buffer(prefix + ".running_mean", &stats->mean);
    reg.add_buffer(prefix + ".running_var", &stats->var);
  }

  NodePtr<S> gamma, beta;
  std::shared_ptr<ad::BatchNormStats<S>> stats;
};

// Adam with bias correction; one instance per parameter group so each network
// keeps its own learning rate.
template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NodePtr<S>> params, S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& p : params_) {
      m_.push_back(Tensor<S>(p->value.shape()));
      v_.push_back(Tensor<S>(p->value.shape()));
    }
  }

  static Adam from_registry(const ParamRegistry<S>& reg, S lr) {
    std::vector<NodePtr<S>> ps;
    for (const auto& [name, p] : reg.params) ps.push_back(p);
    return Adam(std::move(ps), lr);
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    S c1 = S(1) - std::pow(beta1_, S(t_));
    S c2 = S(1) - std::pow(beta2_, S(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p->grad.size() == 0) continue;  // not part of this step's graph
      auto g = p->grad.array();
      m_[i].array() = beta1_ * m_[i].array() + (S(1) - beta1_) * g;
      v_[i].array() = beta2_ * v_[i].array() + (S(1) - beta2_) * g.square();
      p->value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  S lr() const { return lr_; }

 private:
  std::vector<NodePtr<S>> params_;
  std::vector<Tensor<S>> m_, v_;
  S lr_ = S(0), beta1_ = S(0.9), beta2_ = S(0.999), eps_ = S(1e-8);
  long t_ = 0;
};

}  // namespace efe::nn
