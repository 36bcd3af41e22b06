// Test-only reference computations, written independently of the library's
// graph ops so they can serve as oracles.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Bilinear interpolation by explicit corner weights on a row-major H x W
// grid; clamped corner indices, weights from the unclamped fraction.
inline std::array<double, 4> bilinear_weights(double fx, double fy) {
  return {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
}

inline double bilinear_sample(const std::vector<double>& grid, int width, int height, double x,
                              double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const auto w = bilinear_weights(x - x0, y - y0);
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  const int x0c = clampi(x0, width - 1), x1c = clampi(x0 + 1, width - 1);
  const int y0c = clampi(y0, height - 1), y1c = clampi(y0 + 1, height - 1);
  return w[0] * grid[static_cast<size_t>(y0c) * width + x0c] +
         w[1] * grid[static_cast<size_t>(y0c) * width + x1c] +
         w[2] * grid[static_cast<size_t>(y1c) * width + x0c] +
         w[3] * grid[static_cast<size_t>(y1c) * width + x1c];
}

// Scalar softmax over a small logit vector.
inline std::vector<double> softmax(std::vector<double> logits) {
  double hi = logits[0];
  for (double v : logits) hi = std::max(hi, v);
  double total = 0;
  for (double& v : logits) {
    v = std::exp(v - hi);
    total += v;
  }
  for (double& v : logits) v /= total;
  return logits;
}

// Local normalized cross-correlation loss with zero-padded square windows,
// direct per-pixel loops.
inline double ncc_loss(const std::vector<double>& target, const std::vector<double>& warped,
                       int width, int height, int window, double eps = 1e-5) {
  const int pad = window / 2;
  const double n = static_cast<double>(window) * window;
  double cc_total = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double st = 0, sw = 0, stt = 0, sww = 0, stw = 0;
      for (int dy = -pad; dy <= pad; ++dy)
        for (int dx = -pad; dx <= pad; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;  // zero padding
          const double t = target[static_cast<size_t>(yy) * width + xx];
          const double w = warped[static_cast<size_t>(yy) * width + xx];
          st += t;
          sw += w;
          stt += t * t;
          sww += w * w;
          stw += t * w;
        }
      const double cross = stw - st * sw / n;
      const double var_t = stt - st * st / n;
      const double var_w = sww - sw * sw / n;
      cc_total += cross * cross / (var_t * var_w + eps);
    }
  return 1.0 - cc_total / (static_cast<double>(width) * height);
}

}  // namespace oracle
