#include "dysk/losses.hpp"

#include <stdexcept>

namespace dysk {

namespace {
constexpr double kEps = 1e-5;
}

SimKind parse_sim_kind(const std::string& name) {
  if (name == "mse") return SimKind::Mse;
  if (name == "ncc") return SimKind::Ncc;
  if (name == "soft-dice") return SimKind::SoftDice;
  throw std::invalid_argument("unknown similarity kind: " + name);
}

const char* sim_kind_name(SimKind kind) {
  switch (kind) {
    case SimKind::Mse: return "mse";
    case SimKind::Ncc: return "ncc";
    case SimKind::SoftDice: return "soft-dice";
  }
  return "?";
}

void validate_loss_config(const LossConfig& cfg) {
  if (cfg.lambda_smooth < 0.0)
    throw std::invalid_argument("lambda_smooth must be >= 0, got " +
                                std::to_string(cfg.lambda_smooth));
  if (cfg.ncc_window < 3 || cfg.ncc_window % 2 == 0)
    throw std::invalid_argument("ncc_window must be odd and >= 3, got " +
                                std::to_string(cfg.ncc_window));
}

namespace {

Tensor ncc_loss(const Tensor& target, const Tensor& warped, int window) {
  if (target.shape()[1] != 1)
    throw std::invalid_argument("ncc similarity expects single-channel images, got " +
                                shape_str(target.shape()));
  const double n = double(window) * window;
  const int pad = window / 2;
  Tensor ones = Tensor::full({1, 1, window, window}, 1.0);

  auto window_sum = [&](const Tensor& t) { return conv2d(t, ones, std::nullopt, 1, pad); };
  Tensor sum_t = window_sum(target);
  Tensor sum_w = window_sum(warped);
  Tensor sum_tt = window_sum(mul(target, target));
  Tensor sum_ww = window_sum(mul(warped, warped));
  Tensor sum_tw = window_sum(mul(target, warped));

  Tensor cross = sub(sum_tw, scale(mul(sum_t, sum_w), 1.0 / n));
  Tensor var_t = sub(sum_tt, scale(square(sum_t), 1.0 / n));
  Tensor var_w = sub(sum_ww, scale(square(sum_w), 1.0 / n));
  Tensor cc = div(square(cross), add_scalar(mul(var_t, var_w), kEps));
  return add_scalar(scale(mean(cc), -1.0), 1.0);
}

Tensor soft_dice_loss(const Tensor& target, const Tensor& warped) {
  Tensor numer = add_scalar(scale(sum(mul(target, warped)), 2.0), kEps);
  Tensor denom = add_scalar(add(sum(target), sum(warped)), kEps);
  return add_scalar(scale(div(numer, denom), -1.0), 1.0);
}

}  // namespace

Tensor similarity_loss(const Tensor& target, const Tensor& warped, const LossConfig& cfg) {
  validate_loss_config(cfg);
  if (target.shape() != warped.shape())
    throw std::invalid_argument("similarity_loss: shapes differ, " + shape_str(target.shape()) +
                                " vs " + shape_str(warped.shape()));
  switch (cfg.sim) {
    case SimKind::Mse: return mean(square(sub(target, warped)));
    case SimKind::Ncc: return ncc_loss(target, warped, cfg.ncc_window);
    case SimKind::SoftDice: return soft_dice_loss(target, warped);
  }
  throw std::invalid_argument("similarity_loss: unknown kind");
}

Tensor smoothness_loss(const DeformationField& field) {
  Tensor total;
  for (int comp = 0; comp < 2; ++comp) {
    Tensor component = slice_channels(field.phi, comp, 1);
    for (int axis = 0; axis < 2; ++axis) {
      Tensor term = mean(square(spatial_diff(component, axis)));
      total = total.defined() ? add(total, term) : term;
    }
  }
  return total;
}

BidirectionalLossTerms bidirectional_loss_terms(const Tensor& image_a, const Tensor& image_b,
                                                const DeformationField& phi_a2b,
                                                const DeformationField& phi_b2a,
                                                const LossConfig& cfg) {
  validate_loss_config(cfg);
  Tensor sim_ab = similarity_loss(image_b, warp(image_a, phi_a2b), cfg);
  Tensor smo_ab = smoothness_loss(phi_a2b);
  Tensor dir_ab = add(sim_ab, scale(smo_ab, cfg.lambda_smooth));

  Tensor sim_ba = similarity_loss(image_a, warp(image_b, phi_b2a), cfg);
  Tensor smo_ba = smoothness_loss(phi_b2a);
  Tensor dir_ba = add(sim_ba, scale(smo_ba, cfg.lambda_smooth));

  return {add(dir_ab, dir_ba), add(sim_ab, sim_ba), add(smo_ab, smo_ba)};
}

Tensor bidirectional_loss(const Tensor& image_a, const Tensor& image_b,
                          const DeformationField& phi_a2b, const DeformationField& phi_b2a,
                          const LossConfig& cfg) {
  return bidirectional_loss_terms(image_a, image_b, phi_a2b, phi_b2a, cfg).total;
}

}  // namespace dysk
