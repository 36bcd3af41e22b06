#pragma once

#include "dysk/deformation.hpp"

#include <string>

namespace dysk {

enum class SimKind { Mse, Ncc, SoftDice };

SimKind parse_sim_kind(const std::string& name);
const char* sim_kind_name(SimKind kind);

struct LossConfig {
  SimKind sim = SimKind::Ncc;
  double lambda_smooth = 0.25;
  int ncc_window = 9;
};

void validate_loss_config(const LossConfig& cfg);

// mse: mean squared error. ncc: 1 - mean local normalized cross-correlation.
// soft-dice: 1 - (2*sum(pq)+eps)/(sum p + sum q + eps) on [0,1] intensities.
Tensor similarity_loss(const Tensor& target, const Tensor& warped, const LossConfig& cfg);

// Mean squared forward difference of each displacement component along each
// direction; zero iff the field is constant.
Tensor smoothness_loss(const DeformationField& field);

struct BidirectionalLossTerms {
  Tensor total;
  Tensor similarity;  // both directions summed
  Tensor smoothness;  // both directions summed, before lambda
};

BidirectionalLossTerms bidirectional_loss_terms(const Tensor& image_a, const Tensor& image_b,
                                                const DeformationField& phi_a2b,
                                                const DeformationField& phi_b2a,
                                                const LossConfig& cfg);

Tensor bidirectional_loss(const Tensor& image_a, const Tensor& image_b,
                          const DeformationField& phi_a2b, const DeformationField& phi_b2a,
                          const LossConfig& cfg);

}  // namespace dysk
