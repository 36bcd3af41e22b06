#include "dysk/optimizer.hpp"

#include <cmath>
#include <iostream>

namespace dysk {

void adamw_step(ParamStore& params, const AdamWConfig& cfg) {
  params.bump_step();
  const double t = static_cast<double>(params.step_count());
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& name : params.names()) {
    Tensor& p = params.get(name);
    if (!p.has_grad()) {
      std::cerr << "adamw_step: no gradient for " << name << ", skipping\n";
      continue;
    }
    const Array g = p.grad();
    auto& m = params.moments(name);
    m.first = cfg.beta1 * m.first + (1.0 - cfg.beta1) * g;
    m.second = cfg.beta2 * m.second + (1.0 - cfg.beta2) * g.square();
    Array m_hat = m.first / bias1;
    Array v_hat = m.second / bias2;
    p.value_mut() *= (1.0 - cfg.lr * cfg.weight_decay);
    p.value_mut() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
  }
}

}  // namespace dysk
