#pragma once

#include "dysk/ops.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dysk {

// Central-difference gradient estimate of a deterministic scalar map,
// (f(x + h e_i) - f(x - h e_i)) / 2h per element. The oracle for every
// gradient acceptance test; independent of the graph's adjoint rules.
Array finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                       double step);

// One differentiable-op instance: leaf inputs (requires_grad marks which get
// checked) and a builder producing a scalar loss from them.
struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> build;
};

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;  // |analytic - fd| / (atol + rtol*|fd|), max over elements
  bool pass = true;
};

struct GradCheckTolerance {
  double step = 1e-4;
  double rtol = 1e-4;
  double atol = 1e-6;
};

GradCheckResult check_gradients(const GradCase& gcase, const GradCheckTolerance& tol = {});
std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCase>& cases,
                                           const GradCheckTolerance& tol = {});

// Seeded random instances covering every enumerated op kind.
std::vector<GradCase> standard_gradcheck_cases(std::uint64_t seed, int per_op);

}  // namespace dysk
