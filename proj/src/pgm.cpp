#include "dysk/pgm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dysk {

void write_pgm(const std::string& path, const Tensor& image, int bits) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("write_pgm: bits must be 8 or 16");
  const Shape& s = image.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 1)
    throw std::invalid_argument("write_pgm: expected 1 x 1 x H x W image, got " + shape_str(s));
  const int height = s[2], width = s[3];
  const int maxval = bits == 8 ? 255 : 65535;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
  const double* v = image.value().data();
  for (long i = 0; i < long(height) * width; ++i) {
    const double clamped = std::min(std::max(v[i], 0.0), 1.0);
    const unsigned sample = static_cast<unsigned>(std::lround(clamped * maxval));
    if (bits == 8) {
      out.put(static_cast<char>(sample));
    } else {
      out.put(static_cast<char>(sample >> 8));
      out.put(static_cast<char>(sample & 0xff));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

int next_pgm_token(std::istream& in) {
  // Skips whitespace and '#' comment lines.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value;
  if (!(in >> value)) throw std::runtime_error("PGM: malformed header");
  return value;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error(path + ": not a binary PGM (P5)");
  const int width = next_pgm_token(in);
  const int height = next_pgm_token(in);
  const int maxval = next_pgm_token(in);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535)
    throw std::runtime_error(path + ": bad PGM dimensions");
  in.get();  // single whitespace after maxval

  Array data(long(height) * width);
  if (maxval < 256) {
    for (long i = 0; i < data.size(); ++i) {
      const int c = in.get();
      if (c == EOF) throw std::runtime_error(path + ": truncated PGM payload");
      data[i] = double(c) / maxval;
    }
  } else {
    for (long i = 0; i < data.size(); ++i) {
      const int hi = in.get();
      const int lo = in.get();
      if (hi == EOF || lo == EOF) throw std::runtime_error(path + ": truncated PGM payload");
      data[i] = double((hi << 8) | lo) / maxval;
    }
  }
  return Tensor::from_array({1, 1, height, width}, std::move(data));
}

}  // namespace dysk
