#pragma once

#include "dysk/param_store.hpp"

namespace dysk {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-weight-decay adaptive-moment update over every parameter
// with a populated gradient. Parameters whose gradient was never written
// since the last zero_grad are skipped with a warning on stderr.
void adamw_step(ParamStore& params, const AdamWConfig& cfg);

}  // namespace dysk
