#include "dysk/deformation.hpp"

#include <stdexcept>

namespace dysk {

DeformationField make_field(Tensor phi) {
  if (phi.rank() != 4 || phi.shape()[1] != 2)
    throw std::invalid_argument("deformation field must be B x 2 x H x W, got " +
                                shape_str(phi.shape()));
  return DeformationField{std::move(phi)};
}

Tensor identity_coords(int batch, int height, int width) {
  Shape shape{batch, 1, 2, height, width};
  Array data(shape_size(shape));
  long at = 0;
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) data[at++] = x;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) data[at++] = y;
  }
  return Tensor::from_array(std::move(shape), std::move(data), false);
}

Tensor warp(const Tensor& image, const DeformationField& field) {
  if (image.rank() != 4)
    throw std::invalid_argument("warp: image must be B x C x H x W, got " +
                                shape_str(image.shape()));
  const Shape& is = image.shape();
  const Shape& fs = field.phi.shape();
  if (is[0] != fs[0] || is[2] != fs[2] || is[3] != fs[3])
    throw std::invalid_argument("warp: image " + shape_str(is) + " incompatible with field " +
                                shape_str(fs));
  const int height = is[2], width = is[3];
  Tensor displaced = add(identity_coords(is[0], height, width),
                         reshape(field.phi, {fs[0], 1, 2, height, width}));
  Tensor sampled = grid_sample(image, clamp_coords(displaced, width, height));
  return reshape(sampled, is);
}

Tensor upsample_bilinear(const Tensor& t, int out_height, int out_width) {
  if (t.rank() != 4)
    throw std::invalid_argument("upsample_bilinear: expected B x C x H x W, got " +
                                shape_str(t.shape()));
  if (out_height < 2 || out_width < 2)
    throw std::invalid_argument("upsample_bilinear: target extent too small");
  const Shape& s = t.shape();
  Shape cs{s[0], 1, 2, out_height, out_width};
  Array data(shape_size(cs));
  const double sx = double(s[3] - 1) / double(out_width - 1);
  const double sy = double(s[2] - 1) / double(out_height - 1);
  long at = 0;
  for (int b = 0; b < s[0]; ++b) {
    for (int y = 0; y < out_height; ++y)
      for (int x = 0; x < out_width; ++x) data[at++] = x * sx;
    for (int y = 0; y < out_height; ++y)
      for (int x = 0; x < out_width; ++x) data[at++] = y * sy;
  }
  Tensor coords = Tensor::from_array(std::move(cs), std::move(data), false);
  return reshape(grid_sample(t, coords), {s[0], s[1], out_height, out_width});
}

}  // namespace dysk
