#pragma once

// CartPole-v1-compatible dynamics: canonical constants (g=9.8, m_cart=1.0,
// m_pole=0.1, half-length 0.5, F=±10, tau=0.02), explicit Euler with
// derivatives evaluated at the pre-step state, ±0.05 uniform initialization,
// bounds |x| <= 2.4 and |theta| <= 12 degrees, 500-step cap, reward 1.0 on
// every step. The fourth component is the pole's angular velocity.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include "efe/tensor.hpp"

namespace efe {

enum class Action : int { PushLeft = 0, PushRight = 1 };
inline constexpr int kNumActions = 2;

template <typename S = double>
struct State4 {
  S x = 0, x_dot = 0, theta = 0, theta_dot = 0;

  Eigen::Vector4<S> vector() const { return {x, x_dot, theta, theta_dot}; }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(x_dot) && std::isfinite(theta) && std::isfinite(theta_dot);
  }
};

template <typename S = double>
struct StepResult {
  State4<S> next_state;
  S reward = S(1);
  bool done = false;
};

namespace cartpole_const {
inline constexpr double kGravity = 9.8;
inline constexpr double kMassCart = 1.0;
inline constexpr double kMassPole = 0.1;
inline constexpr double kTotalMass = kMassCart + kMassPole;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kPoleMassLength = kMassPole * kHalfLength;
inline constexpr double kForceMag = 10.0;
inline constexpr double kTau = 0.02;
inline constexpr double kXLimit = 2.4;
inline const double kThetaLimit = 12.0 * M_PI / 180.0;
inline constexpr int kMaxSteps = 500;
inline constexpr double kResetMargin = 0.05;
}  // namespace cartpole_const

template <typename S>
bool within_bounds(const State4<S>& s) {
  using namespace cartpole_const;
  return std::abs(s.x) <= S(kXLimit) && std::abs(s.theta) <= S(kThetaLimit);
}

// One Euler step of the cart-pole ODE; pure function of (state, action).
template <typename S>
State4<S> dynamics_step(const State4<S>& s, Action a) {
  using namespace cartpole_const;
  const S force = (a == Action::PushRight) ? S(kForceMag) : S(-kForceMag);
  const S cos_t = std::cos(s.theta);
  const S sin_t = std::sin(s.theta);
  const S temp = (force + S(kPoleMassLength) * s.theta_dot * s.theta_dot * sin_t) / S(kTotalMass);
  const S theta_acc = (S(kGravity) * sin_t - cos_t * temp) /
                      (S(kHalfLength) * (S(4.0 / 3.0) - S(kMassPole) * cos_t * cos_t / S(kTotalMass)));
  const S x_acc = temp - S(kPoleMassLength) * theta_acc * cos_t / S(kTotalMass);
  State4<S> n;
  n.x = s.x + S(kTau) * s.x_dot;
  n.x_dot = s.x_dot + S(kTau) * x_acc;
  n.theta = s.theta + S(kTau) * s.theta_dot;
  n.theta_dot = s.theta_dot + S(kTau) * theta_acc;
  return n;
}

// One episode at a time: reset(seed) starts it, step() advances until done.
template <typename S = double>
class CartPole {
 public:
  State4<S> reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-cartpole_const::kResetMargin, cartpole_const::kResetMargin);
    state_.x = S(dist(rng));
    state_.x_dot = S(dist(rng));
    state_.theta = S(dist(rng));
    state_.theta_dot = S(dist(rng));
    steps_ = 0;
    done_ = false;
    return state_;
  }

  StepResult<S> step(Action a) {
    EFE_CHECK(!done_, "step() on a finished episode");
    state_ = dynamics_step(state_, a);
    ++steps_;
    done_ = !within_bounds(state_) || steps_ >= cartpole_const::kMaxSteps;
    return {state_, S(1), done_};
  }

  const State4<S>& state() const { return state_; }
  bool done() const { return done_; }
  int steps() const { return steps_; }

 private:
  State4<S> state_;
  int steps_ = 0;
  bool done_ = true;  // reset() must run before step()
};

}  // namespace efe
