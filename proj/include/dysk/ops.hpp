#pragma once

#include "dysk/random.hpp"
#include "dysk/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

// Differentiable op set. Closed and enumerated: each op has one adjoint rule
// and a finite-difference case in the gradcheck suite.
//
// Layout conventions:
//   feature maps    B x C x H x W
//   coordinates     B x U x 2 x H x W   (component 0 = x, 1 = y, pixel units)
//   sampled maps    B x C x U x H x W
//   head views      B x d x h x ... x H x W with channel c = k*h + head
//   attention       B x h x U x H x W

namespace dysk {

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double constant);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);

// Structure.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& a, int start, int count);
Tensor mul_channel(const Tensor& x, const Tensor& channel_weights);

// Convolution, zero padding. Bias optional.
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int pad);

// Bilinear gathering of `field` (B x C x Hf x Wf) at absolute coordinates
// (B x U x 2 x Hc x Wc) -> B x C x U x Hc x Wc. Differentiable in both
// the field values and the coordinates.
Tensor grid_sample(const Tensor& field, const Tensor& coords);

// Clamps coordinate component 0 to [0, width-1] and 1 to [0, height-1];
// gradient is zero where the input fell outside.
Tensor clamp_coords(const Tensor& coords, int width, int height);

// Per-position scaled dot product over taps:
//   (B x d x h x H x W) . (B x d x h x U x H x W) / sqrt(d) -> B x h x U x H x W
Tensor scaled_dot_taps(const Tensor& queries, const Tensor& keys);

// Per-position weighted sum over taps:
//   (B x h x U x H x W) . (B x d x h x U x H x W) -> B x d x h x H x W
Tensor weighted_tap_sum(const Tensor& weights, const Tensor& values);

// Forward difference along height (axis 0) or width (axis 1); output loses
// one row/column.
Tensor spatial_diff(const Tensor& t, int axis);

// --- enumerated dispatch -------------------------------------------------

enum class OpKind {
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  AddScalar,
  Exp,
  Square,
  LeakyRelu,
  Sum,
  Mean,
  Softmax,
  Reshape,
  ConcatChannels,
  SliceChannels,
  MulChannel,
  Conv2d,
  GridSample,
  ClampCoords,
  ScaledDotTaps,
  WeightedTapSum,
  SpatialDiff,
};

struct OpAttrs {
  int axis = 0;
  double scalar = 0.0;
  double slope = 0.01;
  int stride = 1;
  int pad = 0;
  Shape shape;
  int start = 0;
  int count = 0;
  int width = 0;
  int height = 0;
};

Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs);
const char* op_kind_name(OpKind kind);
const std::vector<OpKind>& all_op_kinds();

// Seeded leaf factories.
Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);
Tensor normal_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

}  // namespace dysk
