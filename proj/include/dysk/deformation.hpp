#pragma once

#include "dysk/ops.hpp"

namespace dysk {

// Dense per-pixel displacement, B x 2 x H x W in pixel units, component 0 =
// x and 1 = y. Warped output reads the input at (x + phi_x, y + phi_y).
struct DeformationField {
  Tensor phi;
  int batch() const { return phi.shape()[0]; }
  int height() const { return phi.shape()[2]; }
  int width() const { return phi.shape()[3]; }
};

DeformationField make_field(Tensor phi);

// Pixel-center identity coordinates, B x 1 x 2 x H x W constant leaf.
Tensor identity_coords(int batch, int height, int width);

// Bilinear resampling of `image` at displaced coordinates, clamped at the
// borders. Differentiable in the image and the field.
Tensor warp(const Tensor& image, const DeformationField& field);

// Bilinear resize to a new resolution (align-corners mapping).
Tensor upsample_bilinear(const Tensor& t, int out_height, int out_width);

}  // namespace dysk
