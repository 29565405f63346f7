#include <doctest.h>

#include <cstdio>
#include <random>

#include "efe/render.hpp"

using namespace efe;

namespace {

bool pixel_is(const Tensor<float>& f, Eigen::Index r, Eigen::Index c, const double* color) {
  using namespace render_const;
  for (Eigen::Index ch = 0; ch < 3; ++ch)
    if (f[(ch * kHeight + r) * kWidth + c] != float(color[ch])) return false;
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("render");

TEST_CASE("centered cart sits at column 42") {
  CHECK(view_column(0.0, view_center(0.0)) == 42);
  auto f = render_frame<float>(0.0, 0.0);
  // The cart body occupies the baseline rows around column 42.
  for (Eigen::Index r = render_const::kCartTopRow; r <= render_const::kCartBottomRow; ++r)
    CHECK(pixel_is(f, r, 42 - render_const::kCartHalfWidth, render_const::kCartColor));
}

TEST_CASE("upright pole occupies a single column") {
  auto f = render_frame<float>(0.0, 0.0);
  using namespace render_const;
  for (Eigen::Index r = 0; r < kHeight; ++r)
    for (Eigen::Index c = 0; c < kWidth; ++c)
      if (pixel_is(f, r, c, kPoleColor)) CHECK(c == 42);
  // The pole reaches its full length above the cart.
  CHECK(pixel_is(f, kCartTopRow - kPoleLength, 42, kPoleColor));
}

TEST_CASE("window clamps at the track edge") {
  CHECK(view_center(2.3) == doctest::Approx(2.4 - 0.9));
  Eigen::Index col = view_column(2.3, view_center(2.3));
  CHECK(col > 42);
  CHECK(col == Eigen::Index((2.3 - (1.5 - 0.9)) / 1.8 * 85));
}

TEST_CASE("every reachable state renders a valid frame") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(-2.5, 2.5);
  std::uniform_real_distribution<double> ut(-0.3, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    auto f = render_frame<float>(ux(rng), ut(rng));
    CHECK(f.shape() == Shape{3, 37, 85});
    CHECK(f.array().minCoeff() >= 0.0f);
    CHECK(f.array().maxCoeff() <= 1.0f);
  }
}

TEST_CASE("frames quantize to 8 bits without loss") {
  auto f = render_frame<float>(0.7, 0.08);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    float v = f[i];
    float back = float(std::lround(v * 255.0f)) / 255.0f;
    CHECK(back == doctest::Approx(v).epsilon(1e-7));
  }
}

TEST_CASE("ppm round trip") {
  auto f = render_frame<float>(-0.9, -0.1);
  std::string path = "render_roundtrip_test.ppm";
  write_ppm(path, f);
  auto g = read_ppm<float>(path);
  REQUIRE(g.shape() == f.shape());
  for (Eigen::Index i = 0; i < f.size(); ++i) CHECK(g[i] == doctest::Approx(f[i]).epsilon(1e-6));
  std::remove(path.c_str());
}

TEST_CASE("golden frames match the rasterizer") {
  struct Golden {
    double x, theta;
    const char* path;
  };
  const Golden goldens[] = {
      {0.0, 0.0, "golden/frame_center_upright.ppm"},
      {0.7, 0.12, "golden/frame_right_lean.ppm"},
      {2.3, -0.08, "golden/frame_edge_clamped.ppm"},
  };
  for (const auto& g : goldens) {
    INFO(g.path);
    auto want = read_ppm<float>(std::string(EFE_SOURCE_DIR) + "/" + g.path);
    auto got = render_frame<float>(g.x, g.theta);
    REQUIRE(want.shape() == got.shape());
    Eigen::Index diffs = 0;
    for (Eigen::Index i = 0; i < got.size(); ++i)
      if (want[i] != got[i]) ++diffs;
    CHECK(diffs == 0);
  }
}

TEST_SUITE_END();
