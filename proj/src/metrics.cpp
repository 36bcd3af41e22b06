#include "dysk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace dysk {

LabelMap make_label_map(int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("label map needs positive extents");
  return LabelMap{height, width, std::vector<int>(static_cast<size_t>(height) * width, 0)};
}

std::vector<int> positive_labels(const LabelMap& a, const LabelMap& b) {
  std::set<int> found;
  for (int v : a.labels)
    if (v > 0) found.insert(v);
  for (int v : b.labels)
    if (v > 0) found.insert(v);
  return {found.begin(), found.end()};
}

DiceResult dice_score(const LabelMap& a, const LabelMap& b, const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("dice_score: empty label set");
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("dice_score: mask extents differ");
  DiceResult result;
  double total = 0;
  for (int label : labels) {
    long count_a = 0, count_b = 0, inter = 0;
    for (size_t i = 0; i < a.labels.size(); ++i) {
      const bool in_a = a.labels[i] == label;
      const bool in_b = b.labels[i] == label;
      count_a += in_a;
      count_b += in_b;
      inter += in_a && in_b;
    }
    if (count_a + count_b == 0) continue;  // empty in both: skipped
    const double dsc = 200.0 * double(inter) / double(count_a + count_b);
    result.labels.push_back(label);
    result.per_label.push_back(dsc);
    total += dsc;
  }
  if (result.labels.empty())
    throw std::invalid_argument("dice_score: none of the requested labels present");
  result.mean = total / double(result.labels.size());
  return result;
}

double jacobian_negative_fraction(const DeformationField& field) {
  const Shape& s = field.phi.shape();
  const int batch = s[0], height = s[2], width = s[3];
  if (height < 3 || width < 3)
    throw std::invalid_argument("jacobian_negative_fraction: field " + shape_str(s) +
                                " smaller than 3x3");
  const double* pv = field.phi.value().data();
  const long plane = long(height) * width;
  long negative = 0, interior = 0;
  for (int b = 0; b < batch; ++b) {
    const double* px = pv + 2 * b * plane;        // x displacements
    const double* py = px + plane;                // y displacements
    for (int y = 1; y < height - 1; ++y)
      for (int x = 1; x < width - 1; ++x) {
        const long at = long(y) * width + x;
        const double dxx = 0.5 * (px[at + 1] - px[at - 1]);
        const double dxy = 0.5 * (px[at + width] - px[at - width]);
        const double dyx = 0.5 * (py[at + 1] - py[at - 1]);
        const double dyy = 0.5 * (py[at + width] - py[at - width]);
        const double det = (1.0 + dxx) * (1.0 + dyy) - dxy * dyx;
        negative += det <= 0.0;
        ++interior;
      }
  }
  return 100.0 * double(negative) / double(interior);
}

LabelMap warp_labels_nn(const LabelMap& labels, const DeformationField& field, int batch) {
  const Shape& s = field.phi.shape();
  if (labels.height != s[2] || labels.width != s[3])
    throw std::invalid_argument("warp_labels_nn: label extents do not match field");
  if (batch < 0 || batch >= s[0]) throw std::invalid_argument("warp_labels_nn: bad batch index");
  LabelMap out = make_label_map(labels.height, labels.width);
  const double* pv = field.phi.value().data();
  const long plane = long(s[2]) * s[3];
  const double* px = pv + 2 * long(batch) * plane;
  const double* py = px + plane;
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const long at = long(y) * labels.width + x;
      const int sx = static_cast<int>(std::lround(
          std::clamp(x + px[at], 0.0, double(labels.width - 1))));
      const int sy = static_cast<int>(std::lround(
          std::clamp(y + py[at], 0.0, double(labels.height - 1))));
      out.at(y, x) = labels.at(sy, sx);
    }
  return out;
}

}  // namespace dysk
