#pragma once

#include "dysk/ops.hpp"
#include "dysk/param_store.hpp"

#include <string>
#include <vector>

namespace dysk {

struct WindowTap {
  double dy = 0;
  double dx = 0;
};

enum class WindowShape { Square, Cross, Diagonal, Custom };

// The static sample-point set: relative tap coordinates in pixel units.
class BaseWindow {
 public:
  static BaseWindow square(int k);     // odd k, k*k integer lattice centered on 0
  static BaseWindow cross(int radius); // center plus 4 axis arms, 4r+1 taps
  static BaseWindow diagonal(int radius);
  static BaseWindow custom(std::vector<WindowTap> taps);
  // Plain-text list of "dy dx" pairs, one per line, '#' comments allowed.
  static BaseWindow from_file(const std::string& path);

  int size() const { return static_cast<int>(taps_.size()); }
  const std::vector<WindowTap>& taps() const { return taps_; }
  WindowShape kind() const { return kind_; }

 private:
  BaseWindow(std::vector<WindowTap> taps, WindowShape kind);
  std::vector<WindowTap> taps_;
  WindowShape kind_;
};

// Parses a window spec string: "square3", "square5", "cross1", "diag2",
// "custom:<path>".
BaseWindow parse_window_spec(const std::string& spec);

// Per-position predicted tap offsets, B x U x 2 x H x W, pixel units.
struct OffsetField {
  Tensor values;
  int tap_count() const { return values.shape()[1]; }
};

// Absolute fractional sample coordinates after deformation and clamping.
struct DeformedWindow {
  Tensor coords;  // B x U x 2 x H x W
  int width = 0;
  int height = 0;
  int tap_count() const { return coords.shape()[1]; }
};

// Two-layer offset prediction head: 3x3 conv 2C->C, leaky relu, 3x3 conv
// C->2U. The final layer starts at exactly zero so step 0 reproduces the
// static window.
struct OffsetNet {
  Tensor w1, b1, w2, b2;
  int in_channels = 0;  // per input map, before concatenation
  int tap_count = 0;
};

OffsetNet make_offset_net(int channels, int tap_count, Rng& rng, ParamStore& params,
                          const std::string& prefix);

OffsetField predict_offsets(const Tensor& feat_a, const Tensor& feat_b, const OffsetNet& net);

// coords = position + base tap + offset, clamped into [0, W-1] x [0, H-1].
DeformedWindow deform_window(const BaseWindow& base, const OffsetField& offsets);

// Identity-position coordinates for a given geometry (constant leaf).
Tensor base_window_coords(const BaseWindow& base, int batch, int height, int width);

Tensor bilinear_sample(const Tensor& field, const DeformedWindow& window);

// Samples keys and values at the same deformed coordinates.
std::pair<Tensor, Tensor> sample_deformed_kv(const Tensor& keys, const Tensor& values,
                                             const DeformedWindow& window);

}  // namespace dysk
