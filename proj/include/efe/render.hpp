#pragma once

// Direct rasterizer for the 3x37x85 observation: a horizontal window of
// fixed world width follows the cart, clamped so it never leaves the track.
// White background, black cart rectangle on a baseline, colored pole segment
// of fixed pixel length. All color constants are multiples of 1/255 so the
// 8-bit frame store round-trips losslessly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "efe/cartpole.hpp"
#include "efe/tensor.hpp"

namespace efe {

namespace render_const {
inline constexpr Eigen::Index kChannels = 3;
inline constexpr Eigen::Index kHeight = 37;
inline constexpr Eigen::Index kWidth = 85;
inline constexpr double kViewWidth = 1.8;  // world units spanned by the 85 columns
inline constexpr double kBackground[3] = {1.0, 1.0, 1.0};
inline constexpr double kCartColor[3] = {0.0, 0.0, 0.0};
inline constexpr double kPoleColor[3] = {202.0 / 255.0, 152.0 / 255.0, 101.0 / 255.0};
inline constexpr Eigen::Index kCartTopRow = 30;
inline constexpr Eigen::Index kCartBottomRow = 34;
inline constexpr Eigen::Index kCartHalfWidth = 5;  // 11 columns total
inline constexpr Eigen::Index kPoleLength = 24;    // pixels from the cart top
}  // namespace render_const

// Window center follows the cart but stays inside the track.
inline double view_center(double x) {
  using namespace cartpole_const;
  using namespace render_const;
  const double reach = kXLimit - kViewWidth / 2.0;
  return std::clamp(x, -reach, reach);
}

// Column of world coordinate u for a window centered at c.
inline Eigen::Index view_column(double u, double c) {
  using namespace render_const;
  const double left = c - kViewWidth / 2.0;
  return static_cast<Eigen::Index>((u - left) / kViewWidth * static_cast<double>(kWidth));
}

template <typename S = float>
Tensor<S> render_frame(double x, double theta) {
  using namespace render_const;
  Tensor<S> frame({kChannels, kHeight, kWidth});
  auto put = [&](Eigen::Index r, Eigen::Index col, const double* color) {
    if (r < 0 || r >= kHeight || col < 0 || col >= kWidth) return;
    for (Eigen::Index ch = 0; ch < kChannels; ++ch) frame[(ch * kHeight + r) * kWidth + col] = S(color[ch]);
  };
  for (Eigen::Index ch = 0; ch < kChannels; ++ch)
    for (Eigen::Index i = 0; i < kHeight * kWidth; ++i) frame[ch * kHeight * kWidth + i] = S(kBackground[ch]);

  const double center = view_center(x);
  const Eigen::Index cart_col = view_column(x, center);
  for (Eigen::Index r = kCartTopRow; r <= kCartBottomRow; ++r)
    for (Eigen::Index col = cart_col - kCartHalfWidth; col <= cart_col + kCartHalfWidth; ++col)
      put(r, col, kCartColor);

  // Pole: sampled line from the cart's top center, leaning by theta.
  const double sin_t = std::sin(theta);
  const double cos_t = std::cos(theta);
  for (Eigen::Index i = 0; i <= kPoleLength; ++i) {
    Eigen::Index r = kCartTopRow - static_cast<Eigen::Index>(std::lround(cos_t * static_cast<double>(i)));
    Eigen::Index col = cart_col + static_cast<Eigen::Index>(std::lround(sin_t * static_cast<double>(i)));
    put(r, col, kPoleColor);
  }
  return frame;
}

template <typename S>
Tensor<S> render_frame(const State4<double>& s) {
  return render_frame<S>(s.x, s.theta);
}

// Binary PPM (P6, 8-bit) dump for visual inspection and golden tests.
template <typename S>
void write_ppm(const std::string& path, const Tensor<S>& frame) {
  using namespace render_const;
  EFE_CHECK(frame.ndim() == 3 && frame.dim(0) == 3, "write_ppm: expected a (3,H,W) frame");
  const Eigen::Index h = frame.dim(1), w = frame.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      for (Eigen::Index ch = 0; ch < 3; ++ch) {
        double v = static_cast<double>(frame[(ch * h + r) * w + c]);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
      }
  if (!out) throw std::runtime_error("failed writing " + path);
}

template <typename S = float>
Tensor<S> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  Eigen::Index w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) throw std::runtime_error("unsupported PPM: " + path);
  in.get();  // single whitespace after the header
  Tensor<S> frame({3, h, w});
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c)
      for (Eigen::Index ch = 0; ch < 3; ++ch) {
        int byte = in.get();
        if (byte < 0) throw std::runtime_error("truncated PPM: " + path);
        frame[(ch * h + r) * w + c] = S(byte) / S(255);
      }
  return frame;
}

}  // namespace efe
