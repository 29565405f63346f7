#include <doctest.h>

#include <random>

#include "efe/numerics.hpp"

using efe::boltzmann;
using efe::Categorical;
using efe::DiagGaussian;
using efe::kl_categorical;
using efe::kl_categorical_addends;
using efe::kl_diag_gaussian;
using efe::mse;
using efe::reparameterize;
using Vec = Eigen::VectorXd;

TEST_SUITE_BEGIN("numerics");

TEST_CASE("reparameterize") {
  Vec mean(3), var(3), noise(3);
  mean << 0.3, -1.2, 2.0;
  var << 0.5, 1.5, 0.25;

  SUBCASE("zero noise returns the mean exactly") {
    noise.setZero();
    CHECK(reparameterize(mean, var, noise) == mean);
  }
  SUBCASE("floored variance keeps output at the mean") {
    var.setConstant(efe::kVarFloor);
    noise << 1.0, -1.0, 2.0;
    Vec out = reparameterize(mean, var, noise);
    for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(mean[i]).epsilon(1e-2));
  }
  SUBCASE("direct arithmetic") {
    Vec m(1), v(1), n(1);
    m << 0.0;
    v << 4.0;
    n << 1.0;
    CHECK(reparameterize(m, v, n)[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("length mismatch rejected") {
    Vec short_noise(2);
    short_noise.setZero();
    CHECK_THROWS_AS(reparameterize(mean, var, short_noise), std::invalid_argument);
  }
}

TEST_CASE("kl_categorical") {
  SUBCASE("identical distributions give zero") {
    Vec p(3);
    p << 0.2, 0.5, 0.3;
    CHECK(kl_categorical(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("hand-evaluated divergence") {
    Vec p(2), q(2);
    p << 0.5, 0.5;
    q << 0.9, 0.1;
    CHECK(kl_categorical(p, q) == doctest::Approx(0.510826).epsilon(1e-6));
  }
  SUBCASE("energy and entropy addends recombine exactly") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      Vec p(4), q(4);
      for (int i = 0; i < 4; ++i) {
        p[i] = u(rng);
        q[i] = u(rng);
      }
      p /= p.sum();
      q /= q.sum();
      auto parts = kl_categorical_addends(p, q);
      CHECK(parts.total() == doctest::Approx(parts.energy + parts.entropy).epsilon(1e-12));
      CHECK(kl_categorical(p, q) >= 0.0);
    }
  }
  SUBCASE("length mismatch rejected") {
    Vec p(2), q(3);
    p << 0.5, 0.5;
    q << 0.4, 0.3, 0.3;
    CHECK_THROWS_AS(kl_categorical(p, q), std::invalid_argument);
  }
}

TEST_CASE("kl_diag_gaussian") {
  auto gauss = [](std::initializer_list<double> m, std::initializer_list<double> v) {
    DiagGaussian<double> d;
    d.mean = Vec(static_cast<Eigen::Index>(m.size()));
    d.var = Vec(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : m) d.mean[i++] = x;
    i = 0;
    for (double x : v) d.var[i++] = x;
    return d;
  };

  SUBCASE("identical Gaussians give zero") {
    auto a = gauss({0.3, -0.7}, {1.2, 0.4});
    CHECK(kl_diag_gaussian(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("unit-variance mean shift") {
    CHECK(kl_diag_gaussian(gauss({1.0}, {1.0}), gauss({0.0}, {1.0})) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("never negative over random pairs") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 2.0);
    std::uniform_real_distribution<double> v(1e-4, 5.0);
    for (int trial = 0; trial < 1000; ++trial) {
      DiagGaussian<double> a, b;
      a.mean = Vec(8);
      b.mean = Vec(8);
      a.var = Vec(8);
      b.var = Vec(8);
      for (int i = 0; i < 8; ++i) {
        a.mean[i] = n(rng);
        b.mean[i] = n(rng);
        a.var[i] = v(rng);
        b.var[i] = v(rng);
      }
      CHECK(kl_diag_gaussian(a, b) >= 0.0);
    }
  }
  SUBCASE("dimension mismatch rejected") {
    CHECK_THROWS_AS(kl_diag_gaussian(gauss({0.0}, {1.0}), gauss({0.0, 0.0}, {1.0, 1.0})), std::invalid_argument);
  }
}

TEST_CASE("boltzmann") {
  SUBCASE("symmetric values split evenly") {
    Vec g(2);
    g << 0.0, 0.0;
    auto c = boltzmann(g, 1.0);
    CHECK(c.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.probs[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("precision-weighted softmax of negated values") {
    Vec g(2);
    g << 1.0, 2.0;
    auto c = boltzmann(g, 12.0);
    CHECK(c.probs[0] == doctest::Approx(0.99999386).epsilon(1e-8));
    CHECK(c.probs[1] == doctest::Approx(0.00000614).epsilon(1e-2));
  }
  SUBCASE("shift invariance") {
    Vec g(3), shifted(3);
    g << 0.4, -1.3, 2.2;
    shifted = g.array() + 57.0;
    auto a = boltzmann(g, 3.0);
    auto b = boltzmann(shifted, 3.0);
    for (int i = 0; i < 3; ++i) CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-12));
  }
  SUBCASE("no overflow at large magnitudes") {
    Vec g(2);
    g << 0.0, 1e4;
    auto c = boltzmann(g, 1.0);
    CHECK(c.probs.allFinite());
    CHECK(c.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(c.probs.minCoeff() >= 0.0);
  }
  SUBCASE("nonpositive gamma rejected") {
    Vec g(2);
    g << 0.0, 1.0;
    CHECK_THROWS_AS(boltzmann(g, 0.0), std::invalid_argument);
  }
}

TEST_CASE("mse") {
  Vec a(2), b(2);
  SUBCASE("identical tensors give zero") {
    a << 1.5, -2.5;
    CHECK(mse(a, a) == 0.0);
  }
  SUBCASE("unit offset") {
    a << 0.0, 0.0;
    b << 1.0, 1.0;
    CHECK(mse(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("hand-evaluated") {
    a << 1.0, 2.0;
    b << 3.0, 2.0;
    CHECK(mse(a, b) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("shape mismatch rejected") {
    Vec c(3);
    c.setZero();
    a.setZero();
    CHECK_THROWS_AS(mse(a, c), std::invalid_argument);
  }
}

TEST_SUITE_END();
