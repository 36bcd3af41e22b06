#pragma once

#include "dysk/attention.hpp"
#include "dysk/deformation.hpp"
#include "dysk/metrics.hpp"

#include <memory>
#include <utility>

namespace dysk {

struct ModelConfig {
  int channels = 16;  // feature channels after the encoder, must be even
  int heads = 4;
  int dsb_layers = 2;
  std::string window_spec = "square3";
};

// Bidirectional registration model: a two-stage strided encoder, alternating
// dynamic stream blocks over the two feature streams, and a zero-initialized
// flow head decoded at quarter resolution. Both directions share one
// parameter set, so swapping the inputs swaps the returned fields exactly.
class RegistrationModel {
 public:
  RegistrationModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const BaseWindow& window() const { return window_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // One directional field from the ordered pair (B x 1 x H x W inputs,
  // H and W divisible by 4). Optionally reports per-block attention.
  DeformationField flow(const Tensor& image_a, const Tensor& image_b,
                        std::vector<AttentionWeights>* attention_out = nullptr) const;

 private:
  Tensor encode(const Tensor& image) const;

  ModelConfig cfg_;
  BaseWindow window_;
  ParamStore params_;
  Tensor enc_w1, enc_b1, enc_w2, enc_b2;
  std::vector<DsbBlock> blocks_;
  Tensor flow_w, flow_b;
};

// Forward and reverse fields with the identical parameter set.
std::pair<DeformationField, DeformationField> model_forward(const Tensor& image_a,
                                                            const Tensor& image_b,
                                                            const RegistrationModel& model);

// --- synthetic data --------------------------------------------------------

enum class PairKind { Translate, Rotate, Elastic };

PairKind parse_pair_kind(const std::string& name);
const char* pair_kind_name(PairKind kind);

struct ImagePair {
  Tensor image_a;  // 1 x 1 x H x W, intensities in [0, 1]
  Tensor image_b;
  LabelMap seg_a;
  LabelMap seg_b;
  DeformationField phi_true;  // generating field, 1 x 2 x H x W
};

// Seeded image pair with matched label masks. The second image is the scene
// evaluated at analytically displaced coordinates, so phi_true is exact.
ImagePair synthetic_pair(PairKind kind, int height, int width, std::uint64_t seed,
                         double max_displacement = 3.0);

// Fixed-translation variant (exact constant field), mostly for tests.
ImagePair synthetic_translate_pair(int height, int width, double dx, double dy,
                                   std::uint64_t seed);

}  // namespace dysk
