#pragma once

// Closed-form probabilistic kernels shared by the agents: reparameterized
// sampling, categorical and diagonal-Gaussian KL divergences, the
// precision-weighted Boltzmann distribution, and mean squared error. All are
// pure free functions over Eigen expressions, templated on scalar type
// (double in oracle tests, float in training).

#include <Eigen/Dense>

#include <cmath>

#include "efe/tensor.hpp"

namespace efe {

// Floor applied inside logarithms; unguarded logs of zero probabilities
// diverge.
inline constexpr double kProbFloor = 1e-9;
// Additive floor after the encoder's variance head keeps variances positive.
inline constexpr double kVarFloor = 1e-6;

template <typename S>
struct DiagGaussian {
  Eigen::VectorX<S> mean;
  Eigen::VectorX<S> var;
};

template <typename S>
struct Categorical {
  Eigen::VectorX<S> probs;
};

template <typename A, typename B, typename C>
auto reparameterize(const Eigen::MatrixBase<A>& mean, const Eigen::MatrixBase<B>& var,
                    const Eigen::MatrixBase<C>& noise) {
  EFE_CHECK(mean.size() == var.size() && mean.size() == noise.size(), "reparameterize: length mismatch");
  using S = typename A::Scalar;
  return Eigen::VectorX<S>((mean.array() + var.array().sqrt() * noise.array()).matrix());
}

template <typename S>
Eigen::VectorX<S> reparameterize(const DiagGaussian<S>& d, const Eigen::VectorX<S>& noise) {
  return reparameterize(d.mean, d.var, noise);
}

// Σ p ln(p/q) exposed as two separately inspectable addends that recombine
// exactly: energy = −Σ p ln q and entropy = Σ p ln p (the negated Shannon
// entropy), so energy + entropy equals the divergence.
template <typename S>
struct KlAddends {
  S energy;
  S entropy;
  S total() const { return energy + entropy; }
};

template <typename A, typename B>
auto kl_categorical_addends(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  EFE_CHECK(p.size() == q.size(), "kl_categorical: length mismatch");
  using S = typename A::Scalar;
  const S floor = S(kProbFloor);
  S energy = -(p.array() * q.array().max(floor).log()).sum();
  S entropy = (p.array() * p.array().max(floor).log()).sum();
  return KlAddends<S>{energy, entropy};
}

template <typename A, typename B>
auto kl_categorical(const Eigen::MatrixBase<A>& p, const Eigen::MatrixBase<B>& q) {
  using S = typename A::Scalar;
  S total = kl_categorical_addends(p, q).total();
  return total < S(0) ? S(0) : total;
}

template <typename S>
S kl_categorical(const Categorical<S>& p, const Categorical<S>& q) {
  return kl_categorical(p.probs, q.probs);
}

// KL(a ‖ b) for diagonal Gaussians: ½ Σ (ln(σ²_b/σ²_a) + σ²_a/σ²_b +
// (μ_a−μ_b)²/σ²_b − 1).
template <typename S>
S kl_diag_gaussian(const DiagGaussian<S>& a, const DiagGaussian<S>& b) {
  EFE_CHECK(a.mean.size() == b.mean.size() && a.var.size() == a.mean.size() && b.var.size() == b.mean.size(),
            "kl_diag_gaussian: dimension mismatch");
  S total = S(0.5) * ((b.var.array() / a.var.array()).log() + a.var.array() / b.var.array() +
                      (a.mean.array() - b.mean.array()).square() / b.var.array() - S(1))
                         .sum();
  return total < S(0) ? S(0) : total;
}

// p(a|s) = softmax(−gamma · g); max-subtraction keeps the exponent bounded
// for |gamma·g| well past 1e4.
template <typename A, typename S = typename A::Scalar>
Categorical<S> boltzmann(const Eigen::MatrixBase<A>& g, S gamma) {
  EFE_CHECK(gamma > S(0), "boltzmann: gamma must be positive");
  Eigen::ArrayX<S> logits = -gamma * g.array();
  logits -= logits.maxCoeff();
  Eigen::ArrayX<S> e = logits.exp();
  return Categorical<S>{Eigen::VectorX<S>(e / e.sum())};
}

template <typename A, typename B>
auto mse(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  EFE_CHECK(a.rows() == b.rows() && a.cols() == b.cols(), "mse: shape mismatch");
  using S = typename A::Scalar;
  return S((a.array() - b.array()).square().mean());
}

template <typename S>
S mse(const Tensor<S>& a, const Tensor<S>& b) {
  EFE_CHECK(a.same_shape(b), "mse: shape mismatch");
  return (a.array() - b.array()).square().mean();
}

}  // namespace efe
