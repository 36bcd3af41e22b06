#include "dysk/sampling.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dysk {

BaseWindow::BaseWindow(std::vector<WindowTap> taps, WindowShape kind)
    : taps_(std::move(taps)), kind_(kind) {
  if (taps_.empty()) throw std::invalid_argument("window must have at least one tap");
  for (size_t i = 0; i < taps_.size(); ++i)
    for (size_t j = i + 1; j < taps_.size(); ++j)
      if (taps_[i].dy == taps_[j].dy && taps_[i].dx == taps_[j].dx)
        throw std::invalid_argument("window taps must be unique, duplicate at index " +
                                    std::to_string(j));
}

BaseWindow BaseWindow::square(int k) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("square window size must be odd, got " + std::to_string(k));
  const int r = (k - 1) / 2;
  std::vector<WindowTap> taps;
  taps.reserve(static_cast<size_t>(k) * k);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) taps.push_back({double(dy), double(dx)});
  return BaseWindow(std::move(taps), WindowShape::Square);
}

BaseWindow BaseWindow::cross(int radius) {
  if (radius < 1) throw std::invalid_argument("cross radius must be >= 1");
  std::vector<WindowTap> taps{{0, 0}};
  for (int r = 1; r <= radius; ++r) {
    taps.push_back({double(-r), 0});
    taps.push_back({double(r), 0});
    taps.push_back({0, double(-r)});
    taps.push_back({0, double(r)});
  }
  return BaseWindow(std::move(taps), WindowShape::Cross);
}

BaseWindow BaseWindow::diagonal(int radius) {
  if (radius < 1) throw std::invalid_argument("diagonal radius must be >= 1");
  std::vector<WindowTap> taps{{0, 0}};
  for (int r = 1; r <= radius; ++r) {
    taps.push_back({double(-r), double(-r)});
    taps.push_back({double(-r), double(r)});
    taps.push_back({double(r), double(-r)});
    taps.push_back({double(r), double(r)});
  }
  return BaseWindow(std::move(taps), WindowShape::Diagonal);
}

BaseWindow BaseWindow::custom(std::vector<WindowTap> taps) {
  return BaseWindow(std::move(taps), WindowShape::Custom);
}

BaseWindow BaseWindow::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open window file: " + path);
  std::vector<WindowTap> taps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double dy, dx;
    if (ss >> dy >> dx) {
      double extra;
      if (ss >> extra)
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected 'dy dx' pair");
      taps.push_back({dy, dx});
    } else {
      std::string rest;
      ss.clear();
      ss >> rest;
      if (!rest.empty())
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected 'dy dx' pair");
    }
  }
  return BaseWindow(std::move(taps), WindowShape::Custom);
}

BaseWindow parse_window_spec(const std::string& spec) {
  if (spec.rfind("square", 0) == 0) return BaseWindow::square(std::stoi(spec.substr(6)));
  if (spec.rfind("cross", 0) == 0) return BaseWindow::cross(std::stoi(spec.substr(5)));
  if (spec.rfind("diag", 0) == 0) return BaseWindow::diagonal(std::stoi(spec.substr(4)));
  if (spec.rfind("custom:", 0) == 0) return BaseWindow::from_file(spec.substr(7));
  throw std::invalid_argument("unknown window spec: " + spec);
}

OffsetNet make_offset_net(int channels, int tap_count, Rng& rng, ParamStore& params,
                          const std::string& prefix) {
  if (channels < 1 || tap_count < 1)
    throw std::invalid_argument("offset net needs positive channels and tap count");
  OffsetNet net;
  net.in_channels = channels;
  net.tap_count = tap_count;
  const double bound1 = 1.0 / std::sqrt(2.0 * channels * 9.0);
  net.w1 = params.add(prefix + ".conv1.weight",
                      uniform_tensor({channels, 2 * channels, 3, 3}, rng, -bound1, bound1, true));
  net.b1 = params.add(prefix + ".conv1.bias", Tensor::zeros({channels}, true));
  net.w2 = params.add(prefix + ".conv2.weight",
                      Tensor::zeros({2 * tap_count, channels, 3, 3}, true));
  net.b2 = params.add(prefix + ".conv2.bias", Tensor::zeros({2 * tap_count}, true));
  return net;
}

OffsetField predict_offsets(const Tensor& feat_a, const Tensor& feat_b, const OffsetNet& net) {
  if (feat_a.shape() != feat_b.shape())
    throw std::invalid_argument("predict_offsets: feature shapes differ, " +
                                shape_str(feat_a.shape()) + " vs " + shape_str(feat_b.shape()));
  if (feat_a.shape()[1] != net.in_channels)
    throw std::invalid_argument("predict_offsets: offset net expects " +
                                std::to_string(net.in_channels) + " channels per input, got " +
                                std::to_string(feat_a.shape()[1]));
  const Shape& s = feat_a.shape();
  Tensor fused = concat_channels(feat_a, feat_b);
  Tensor hidden = leaky_relu(conv2d(fused, net.w1, net.b1, 1, 1), 0.2);
  Tensor raw = conv2d(hidden, net.w2, net.b2, 1, 1);  // B x 2U x H x W, channel = tap*2 + comp
  return OffsetField{reshape(raw, {s[0], net.tap_count, 2, s[2], s[3]})};
}

Tensor base_window_coords(const BaseWindow& base, int batch, int height, int width) {
  const int taps = base.size();
  Shape shape{batch, taps, 2, height, width};
  Array data(shape_size(shape));
  long at = 0;
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < taps; ++j) {
      for (int y = 0; y < height; ++y)  // component 0: x
        for (int x = 0; x < width; ++x) data[at++] = x + base.taps()[j].dx;
      for (int y = 0; y < height; ++y)  // component 1: y
        for (int x = 0; x < width; ++x) data[at++] = y + base.taps()[j].dy;
    }
  return Tensor::from_array(std::move(shape), std::move(data), false);
}

DeformedWindow deform_window(const BaseWindow& base, const OffsetField& offsets) {
  const Shape& s = offsets.values.shape();
  if (s.size() != 5 || s[2] != 2)
    throw std::invalid_argument("deform_window: offsets must be B x U x 2 x H x W, got " +
                                shape_str(s));
  if (s[1] != base.size())
    throw std::invalid_argument("deform_window: offset tap count " + std::to_string(s[1]) +
                                " does not match window size " + std::to_string(base.size()));
  const int height = s[3], width = s[4];
  Tensor grid = base_window_coords(base, s[0], height, width);
  Tensor coords = clamp_coords(add(grid, offsets.values), width, height);
  return DeformedWindow{coords, width, height};
}

Tensor bilinear_sample(const Tensor& field, const DeformedWindow& window) {
  return grid_sample(field, window.coords);
}

std::pair<Tensor, Tensor> sample_deformed_kv(const Tensor& keys, const Tensor& values,
                                             const DeformedWindow& window) {
  if (keys.shape() != values.shape())
    throw std::invalid_argument("sample_deformed_kv: key shape " + shape_str(keys.shape()) +
                                " differs from value shape " + shape_str(values.shape()));
  return {grid_sample(keys, window.coords), grid_sample(values, window.coords)};
}

}  // namespace dysk
