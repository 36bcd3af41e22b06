#include "dysk/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace dysk {

Array finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                       double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Array grad(x.size());
  for (long i = 0; i < x.size(); ++i) {
    Array plus = x.value();
    Array minus = x.value();
    plus[i] += step;
    minus[i] -= step;
    const double fp = f(Tensor::from_array(x.shape(), std::move(plus)));
    const double fm = f(Tensor::from_array(x.shape(), std::move(minus)));
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

GradCheckResult check_gradients(const GradCase& gcase, const GradCheckTolerance& tol) {
  GradCheckResult result{gcase.name, 0.0, true};

  // Analytic pass.
  Tensor loss = gcase.build(gcase.inputs);
  if (loss.size() != 1) throw std::invalid_argument(gcase.name + ": case loss is not scalar");
  loss.backward();

  for (size_t i = 0; i < gcase.inputs.size(); ++i) {
    const Tensor& input = gcase.inputs[i];
    if (!input.requires_grad()) continue;
    const Array analytic = input.grad();

    auto eval = [&](const Tensor& replacement) {
      std::vector<Tensor> inputs;
      inputs.reserve(gcase.inputs.size());
      for (size_t k = 0; k < gcase.inputs.size(); ++k)
        inputs.push_back(k == i ? replacement
                                : Tensor::from_array(gcase.inputs[k].shape(),
                                                     gcase.inputs[k].value()));
      return gcase.build(inputs).item();
    };
    const Array fd = finite_diff_grad(eval, input.detach(), tol.step);

    for (long k = 0; k < analytic.size(); ++k) {
      const double denom = tol.atol + tol.rtol * std::abs(fd[k]);
      const double err = std::abs(analytic[k] - fd[k]) / denom;
      result.max_rel_err = std::max(result.max_rel_err, err);
      if (err > 1.0) result.pass = false;
    }
  }
  return result;
}

std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCase>& cases,
                                           const GradCheckTolerance& tol) {
  std::vector<GradCheckResult> results;
  results.reserve(cases.size());
  for (const auto& gcase : cases) results.push_back(check_gradients(gcase, tol));
  return results;
}

namespace {

// Values bounded away from zero, for kinked or divided-by inputs.
Tensor away_from_zero(Shape shape, Rng& rng, double margin, bool requires_grad) {
  long n = shape_size(shape);
  Array data(n);
  for (long i = 0; i < n; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    data[i] = sign * rng.uniform(margin, 1.0);
  }
  return Tensor::from_array(std::move(shape), std::move(data), requires_grad);
}

// In-bounds fractional coordinates with fractional part in [0.2, 0.8] so the
// bilinear derivative is smooth at the probe.
Tensor interior_coords(int batch, int taps, int height, int width, Rng& rng,
                       bool requires_grad) {
  Shape shape{batch, taps, 2, height, width};
  Array data(shape_size(shape));
  long at = 0;
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < taps; ++j)
      for (int comp = 0; comp < 2; ++comp)
        for (long i = 0; i < long(height) * width; ++i) {
          const int extent = comp == 0 ? width : height;
          const double cell = static_cast<double>(rng.uniform_int(extent - 1));
          data[at++] = cell + rng.uniform(0.2, 0.8);
        }
  return Tensor::from_array(std::move(shape), std::move(data), requires_grad);
}

// Scalarizes an op output against a fixed random probe so every output
// element influences the loss (plain sum hides softmax-style null spaces).
std::function<Tensor(const std::vector<Tensor>&)> probe_loss(
    std::function<Tensor(const std::vector<Tensor>&)> op, const Shape& out_shape, Rng& rng) {
  Tensor probe = uniform_tensor(out_shape, rng, -1.0, 1.0, false);
  return [op = std::move(op), probe](const std::vector<Tensor>& inputs) {
    return sum(mul(op(inputs), probe));
  };
}

GradCase make_case(OpKind kind, int index, Rng& rng) {
  GradCase gcase;
  gcase.name = std::string(op_kind_name(kind)) + "[" + std::to_string(index) + "]";

  const int h = 2 + static_cast<int>(rng.uniform_int(3));
  const int w = 2 + static_cast<int>(rng.uniform_int(3));
  Shape small{1, 2, h, w};

  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true),
                      uniform_tensor(small, rng, -1, 1, true)};
      auto op = [kind](const std::vector<Tensor>& in) {
        return forward_op(kind, {in[0], in[1]}, {});
      };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::Div: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true),
                      away_from_zero(small, rng, 0.5, true)};
      auto op = [](const std::vector<Tensor>& in) { return div(in[0], in[1]); };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::Scale:
    case OpKind::AddScalar: {
      const double c = rng.uniform(-2, 2);
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true)};
      OpAttrs attrs;
      attrs.scalar = c;
      auto op = [kind, attrs](const std::vector<Tensor>& in) {
        return forward_op(kind, {in[0]}, attrs);
      };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::Exp:
    case OpKind::Square: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true)};
      auto op = [kind](const std::vector<Tensor>& in) { return forward_op(kind, {in[0]}, {}); };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::LeakyRelu: {
      gcase.inputs = {away_from_zero(small, rng, 0.2, true)};
      auto op = [](const std::vector<Tensor>& in) { return leaky_relu(in[0], 0.2); };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::Sum: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true)};
      gcase.build = [](const std::vector<Tensor>& in) { return sum(in[0]); };
      break;
    }
    case OpKind::Mean: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true)};
      gcase.build = [](const std::vector<Tensor>& in) { return mean(in[0]); };
      break;
    }
    case OpKind::Softmax: {
      const int axis = static_cast<int>(rng.uniform_int(4));
      gcase.inputs = {uniform_tensor(small, rng, -2, 2, true)};
      auto op = [axis](const std::vector<Tensor>& in) { return softmax(in[0], axis); };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::Reshape: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true)};
      Shape target{2, h * w};
      auto op = [target](const std::vector<Tensor>& in) { return reshape(in[0], target); };
      gcase.build = probe_loss(op, target, rng);
      break;
    }
    case OpKind::ConcatChannels: {
      Shape other{1, 3, h, w};
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true),
                      uniform_tensor(other, rng, -1, 1, true)};
      auto op = [](const std::vector<Tensor>& in) { return concat_channels(in[0], in[1]); };
      gcase.build = probe_loss(op, {1, 5, h, w}, rng);
      break;
    }
    case OpKind::SliceChannels: {
      Shape wide{1, 4, h, w};
      const int start = static_cast<int>(rng.uniform_int(3));
      gcase.inputs = {uniform_tensor(wide, rng, -1, 1, true)};
      auto op = [start](const std::vector<Tensor>& in) {
        return slice_channels(in[0], start, 2);
      };
      gcase.build = probe_loss(op, {1, 2, h, w}, rng);
      break;
    }
    case OpKind::MulChannel: {
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true),
                      uniform_tensor({1, 2}, rng, -1, 1, true)};
      auto op = [](const std::vector<Tensor>& in) { return mul_channel(in[0], in[1]); };
      gcase.build = probe_loss(op, small, rng);
      break;
    }
    case OpKind::Conv2d: {
      const int stride = 1 + static_cast<int>(rng.uniform_int(2));
      const int pad = static_cast<int>(rng.uniform_int(2));
      Shape xs{1, 2, 4 + static_cast<int>(rng.uniform_int(2)), 4};
      Shape ws{2, 2, 3, 3};
      gcase.inputs = {uniform_tensor(xs, rng, -1, 1, true),
                      uniform_tensor(ws, rng, -1, 1, true),
                      uniform_tensor({2}, rng, -1, 1, true)};
      const int oh = (xs[2] + 2 * pad - 3) / stride + 1;
      const int ow = (xs[3] + 2 * pad - 3) / stride + 1;
      auto op = [stride, pad](const std::vector<Tensor>& in) {
        return conv2d(in[0], in[1], in[2], stride, pad);
      };
      gcase.build = probe_loss(op, {1, 2, oh, ow}, rng);
      break;
    }
    case OpKind::GridSample: {
      Shape fs{1, 2, 4, 4};
      gcase.inputs = {uniform_tensor(fs, rng, -1, 1, true),
                      interior_coords(1, 3, h, w, rng, true)};
      auto op = [](const std::vector<Tensor>& in) { return grid_sample(in[0], in[1]); };
      gcase.build = probe_loss(op, {1, 2, 3, h, w}, rng);
      break;
    }
    case OpKind::ClampCoords: {
      // Mix of interior and far-out-of-range coordinates; none near the
      // clamp boundary where the derivative jumps.
      Shape cs{1, 2, 2, h, w};
      Array data(shape_size(cs));
      for (long i = 0; i < data.size(); ++i) {
        if (rng.uniform() < 0.3)
          data[i] = rng.uniform() < 0.5 ? rng.uniform(-3.0, -0.5) : rng.uniform(6.5, 9.0);
        else
          data[i] = rng.uniform(0.3, 2.5);
      }
      gcase.inputs = {Tensor::from_array(cs, std::move(data), true)};
      auto op = [](const std::vector<Tensor>& in) { return clamp_coords(in[0], 5, 5); };
      gcase.build = probe_loss(op, cs, rng);
      break;
    }
    case OpKind::ScaledDotTaps: {
      Shape qs{1, 2, 2, h, w};
      Shape ks{1, 2, 2, 3, h, w};
      gcase.inputs = {uniform_tensor(qs, rng, -1, 1, true),
                      uniform_tensor(ks, rng, -1, 1, true)};
      auto op = [](const std::vector<Tensor>& in) { return scaled_dot_taps(in[0], in[1]); };
      gcase.build = probe_loss(op, {1, 2, 3, h, w}, rng);
      break;
    }
    case OpKind::WeightedTapSum: {
      Shape rs{1, 2, 3, h, w};
      Shape vs{1, 2, 2, 3, h, w};
      gcase.inputs = {uniform_tensor(rs, rng, -1, 1, true),
                      uniform_tensor(vs, rng, -1, 1, true)};
      auto op = [](const std::vector<Tensor>& in) { return weighted_tap_sum(in[0], in[1]); };
      gcase.build = probe_loss(op, {1, 2, 2, h, w}, rng);
      break;
    }
    case OpKind::SpatialDiff: {
      const int axis = static_cast<int>(rng.uniform_int(2));
      gcase.inputs = {uniform_tensor(small, rng, -1, 1, true)};
      Shape out = small;
      out[axis == 0 ? 2 : 3] -= 1;
      auto op = [axis](const std::vector<Tensor>& in) { return spatial_diff(in[0], axis); };
      gcase.build = probe_loss(op, out, rng);
      break;
    }
  }
  return gcase;
}

}  // namespace

std::vector<GradCase> standard_gradcheck_cases(std::uint64_t seed, int per_op) {
  std::vector<GradCase> cases;
  for (OpKind kind : all_op_kinds()) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(kind)));
    for (int i = 0; i < per_op; ++i) cases.push_back(make_case(kind, i, rng));
  }
  return cases;
}

}  // namespace dysk
