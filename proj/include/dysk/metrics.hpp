#pragma once

#include "dysk/deformation.hpp"

#include <vector>

namespace dysk {

// Integer label image.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;

  int at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
  int& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
};

LabelMap make_label_map(int height, int width);

// Sorted positive labels present in either mask.
std::vector<int> positive_labels(const LabelMap& a, const LabelMap& b);

struct DiceResult {
  std::vector<int> labels;          // labels actually scored
  std::vector<double> per_label;    // percent
  double mean = 0.0;                // percent
};

// Per label 200*|A and B| / (|A| + |B|); labels empty in both masks are
// skipped. Throws if the requested set is empty or nothing is present.
DiceResult dice_score(const LabelMap& a, const LabelMap& b, const std::vector<int>& labels);

// Percentage of interior pixels where det(I + grad phi) <= 0, central
// differences. Fields smaller than 3x3 are rejected.
double jacobian_negative_fraction(const DeformationField& field);

// Nearest-neighbor resampling of labels at displaced coordinates.
LabelMap warp_labels_nn(const LabelMap& labels, const DeformationField& field, int batch = 0);

}  // namespace dysk
