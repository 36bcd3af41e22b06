#pragma once

#include "dysk/tensor.hpp"

#include <string>

namespace dysk {

// Binary PGM (P5), 8- or 16-bit. Intensities map linearly between [0, 1]
// and [0, maxval]; 16-bit samples are big-endian per the format.
void write_pgm(const std::string& path, const Tensor& image, int bits = 16);
Tensor read_pgm(const std::string& path);  // -> 1 x 1 x H x W in [0, 1]

}  // namespace dysk
