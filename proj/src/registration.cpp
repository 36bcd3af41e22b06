#include "dysk/registration.hpp"

#include <cmath>
#include <stdexcept>

namespace dysk {

RegistrationModel::RegistrationModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), window_(parse_window_spec(cfg.window_spec)) {
  if (cfg.channels < 2 || cfg.channels % 2 != 0)
    throw std::invalid_argument("model channels must be even and >= 2, got " +
                                std::to_string(cfg.channels));
  if (cfg.channels % cfg.heads != 0)
    throw std::invalid_argument("model channels " + std::to_string(cfg.channels) +
                                " not divisible by heads " + std::to_string(cfg.heads));
  if (cfg.dsb_layers < 1) throw std::invalid_argument("model needs at least one DSB layer");

  Rng rng(derive_seed(seed, seed_stream::init));
  const int c = cfg.channels;
  const int half = c / 2;
  const double bound1 = 1.0 / std::sqrt(9.0);
  const double bound2 = 1.0 / std::sqrt(double(half) * 9.0);

  enc_w1 = params_.add("enc.conv1.weight", uniform_tensor({half, 1, 3, 3}, rng, -bound1, bound1, true));
  enc_b1 = params_.add("enc.conv1.bias", Tensor::zeros({half}, true));
  enc_w2 = params_.add("enc.conv2.weight", uniform_tensor({c, half, 3, 3}, rng, -bound2, bound2, true));
  enc_b2 = params_.add("enc.conv2.bias", Tensor::zeros({c}, true));

  for (int t = 0; t < cfg.dsb_layers; ++t)
    blocks_.push_back(make_dsb_block(c, cfg.heads, window_, rng, params_,
                                     "dsb" + std::to_string(t + 1)));

  // Zero-initialized flow head: training starts from the identity transform.
  flow_w = params_.add("flow.weight", Tensor::zeros({2, 2 * c, 3, 3}, true));
  flow_b = params_.add("flow.bias", Tensor::zeros({2}, true));
}

Tensor RegistrationModel::encode(const Tensor& image) const {
  Tensor h1 = leaky_relu(conv2d(image, enc_w1, enc_b1, 2, 1), 0.2);
  return leaky_relu(conv2d(h1, enc_w2, enc_b2, 2, 1), 0.2);
}

DeformationField RegistrationModel::flow(const Tensor& image_a, const Tensor& image_b,
                                         std::vector<AttentionWeights>* attention_out) const {
  if (image_a.shape() != image_b.shape())
    throw std::invalid_argument("model: image shapes differ, " + shape_str(image_a.shape()) +
                                " vs " + shape_str(image_b.shape()));
  const Shape& s = image_a.shape();
  if (s.size() != 4 || s[1] != 1)
    throw std::invalid_argument("model: images must be B x 1 x H x W, got " + shape_str(s));
  if (s[2] < 16 || s[3] < 16 || s[2] % 4 != 0 || s[3] % 4 != 0)
    throw std::invalid_argument("model: image extents must be >= 16 and divisible by 4, got " +
                                shape_str(s));

  Tensor fa = encode(image_a);
  Tensor fb = encode(image_b);
  for (size_t t = 0; t < blocks_.size(); ++t) {
    // Residual stream updates keep encoder content channel-aligned for the
    // flow head.
    AttentionWeights rho;
    if (t % 2 == 0)
      fa = add(fa, dsb_forward(fa, fb, blocks_[t], attention_out ? &rho : nullptr));
    else
      fb = add(fb, dsb_forward(fb, fa, blocks_[t], attention_out ? &rho : nullptr));
    if (attention_out) attention_out->push_back(rho);
  }

  Tensor fused = concat_channels(fa, fb);
  Tensor coarse = conv2d(fused, flow_w, flow_b, 1, 1);  // B x 2 x H/4 x W/4
  Tensor up = upsample_bilinear(coarse, s[2], s[3]);
  const double factor = double(s[2]) / double(coarse.shape()[2]);
  return make_field(scale(up, factor));
}

std::pair<DeformationField, DeformationField> model_forward(const Tensor& image_a,
                                                            const Tensor& image_b,
                                                            const RegistrationModel& model) {
  return {model.flow(image_a, image_b), model.flow(image_b, image_a)};
}

// --- synthetic data --------------------------------------------------------

PairKind parse_pair_kind(const std::string& name) {
  if (name == "translate") return PairKind::Translate;
  if (name == "rotate") return PairKind::Rotate;
  if (name == "elastic") return PairKind::Elastic;
  throw std::invalid_argument("unknown pair kind: " + name);
}

const char* pair_kind_name(PairKind kind) {
  switch (kind) {
    case PairKind::Translate: return "translate";
    case PairKind::Rotate: return "rotate";
    case PairKind::Elastic: return "elastic";
  }
  return "?";
}

namespace {

// Band-limited random texture evaluable at arbitrary coordinates.
struct SmoothNoise {
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;

  static SmoothNoise make(Rng& rng, int count, double min_wavelength, double max_wavelength) {
    SmoothNoise noise;
    for (int i = 0; i < count; ++i) {
      const double wavelength = rng.uniform(min_wavelength, max_wavelength);
      const double angle = rng.uniform(0.0, 6.283185307179586);
      const double k = 6.283185307179586 / wavelength;
      noise.waves.push_back({k * std::cos(angle), k * std::sin(angle),
                             rng.uniform(0.0, 6.283185307179586), rng.uniform(0.5, 1.0)});
    }
    double total = 0;
    for (const auto& w : noise.waves) total += w.amp;
    for (auto& w : noise.waves) w.amp /= total;
    return noise;
  }

  double operator()(double x, double y) const {
    double v = 0;
    for (const auto& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return v;
  }
};

// Analytic scene: textured background, a bright elliptical structure
// (label 1) with a darker core disk (label 2). Evaluable at fractional
// coordinates so the displaced image needs no resampling.
struct Scene {
  double cx1, cy1, rx1, ry1;  // ellipse
  double cx2, cy2, r2;        // core disk
  SmoothNoise texture;

  int label(double x, double y) const {
    const double ddx = x - cx2, ddy = y - cy2;
    if (ddx * ddx + ddy * ddy < r2 * r2) return 2;
    const double ex = (x - cx1) / rx1, ey = (y - cy1) / ry1;
    if (ex * ex + ey * ey < 1.0) return 1;
    return 0;
  }

  double intensity(double x, double y) const {
    const double tex = 0.09 * texture(x, y);
    double v;
    switch (label(x, y)) {
      case 2: {
        const double ddx = x - cx2, ddy = y - cy2;
        v = 0.97 - 0.40 * (ddx * ddx + ddy * ddy) / (r2 * r2);
        break;
      }
      case 1: {
        const double ex = (x - cx1) / rx1, ey = (y - cy1) / ry1;
        v = 0.72 - 0.32 * (ex * ex + ey * ey);
        break;
      }
      default:
        v = 0.13;
    }
    return std::min(std::max(v + tex, 0.0), 1.0);
  }

  static Scene make(Rng& rng, int height, int width) {
    Scene scene;
    scene.cx1 = 0.5 * width + rng.uniform(-1.5, 1.5);
    scene.cy1 = 0.5 * height + rng.uniform(-1.5, 1.5);
    scene.rx1 = rng.uniform(0.19, 0.23) * width;
    scene.ry1 = rng.uniform(0.19, 0.23) * height;
    const double core_angle = rng.uniform(0.4, 1.0);
    const double core_dist = rng.uniform(0.22, 0.3);
    scene.cx2 = scene.cx1 + core_dist * scene.rx1 * std::cos(core_angle);
    scene.cy2 = scene.cy1 + core_dist * scene.ry1 * std::sin(core_angle);
    scene.r2 = rng.uniform(0.33, 0.45) * std::min(scene.rx1, scene.ry1);
    scene.texture = SmoothNoise::make(rng, 8, 5.0, 12.0);
    return scene;
  }
};

// phi_true evaluated analytically: x_b(p) = scene(p + phi(p)).
using FieldFn = std::function<std::pair<double, double>(double, double)>;

ImagePair render_pair(const Scene& scene, const FieldFn& field, int height, int width) {
  Shape image_shape{1, 1, height, width};
  Array values_a(shape_size(image_shape)), values_b(shape_size(image_shape));
  Array phi(2L * height * width);
  LabelMap seg_a = make_label_map(height, width);
  LabelMap seg_b = make_label_map(height, width);

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const long at = long(y) * width + x;
      const auto [ux, uy] = field(double(x), double(y));
      values_a[at] = scene.intensity(x, y);
      values_b[at] = scene.intensity(x + ux, y + uy);
      seg_a.at(y, x) = scene.label(x, y);
      seg_b.at(y, x) = scene.label(x + ux, y + uy);
      phi[at] = ux;
      phi[long(height) * width + at] = uy;
    }

  ImagePair pair;
  pair.image_a = Tensor::from_array(image_shape, std::move(values_a));
  pair.image_b = Tensor::from_array(image_shape, std::move(values_b));
  pair.seg_a = std::move(seg_a);
  pair.seg_b = std::move(seg_b);
  pair.phi_true = make_field(Tensor::from_array({1, 2, height, width}, std::move(phi)));
  return pair;
}

FieldFn translate_field(double dx, double dy) {
  return [dx, dy](double, double) { return std::pair<double, double>(dx, dy); };
}

FieldFn rotate_field(double angle, double cx, double cy) {
  const double c = std::cos(angle), s = std::sin(angle);
  return [c, s, cx, cy](double x, double y) {
    const double rx = x - cx, ry = y - cy;
    return std::pair<double, double>(c * rx - s * ry - rx, s * rx + c * ry - ry);
  };
}

FieldFn elastic_field(Rng& rng, int height, int width, double max_displacement) {
  // Long-wavelength sinusoids keep |grad phi| well below folding.
  const double min_wavelength = 1.5 * std::max(height, width);
  SmoothNoise fx = SmoothNoise::make(rng, 3, min_wavelength, 2.0 * min_wavelength);
  SmoothNoise fy = SmoothNoise::make(rng, 3, min_wavelength, 2.0 * min_wavelength);
  const double target = rng.uniform(0.9, 1.0) * max_displacement;

  double peak = 1e-12;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      peak = std::max(peak, std::max(std::abs(fx(x, y)), std::abs(fy(x, y))));
  const double gain = target / peak;
  return [fx, fy, gain](double x, double y) {
    return std::pair<double, double>(gain * fx(x, y), gain * fy(x, y));
  };
}

}  // namespace

ImagePair synthetic_pair(PairKind kind, int height, int width, std::uint64_t seed,
                         double max_displacement) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("synthetic_pair: size must be at least 16x16");
  if (max_displacement <= 0.0)
    throw std::invalid_argument("synthetic_pair: max displacement must be positive");
  Rng rng(derive_seed(seed, 17));
  Scene scene = Scene::make(rng, height, width);
  FieldFn field;
  switch (kind) {
    case PairKind::Translate: {
      const double angle = rng.uniform(0.0, 6.283185307179586);
      const double mag = rng.uniform(0.5, 1.0) * max_displacement;
      field = translate_field(mag * std::cos(angle), mag * std::sin(angle));
      break;
    }
    case PairKind::Rotate: {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      field = rotate_field(sign * rng.uniform(0.05, 0.14), 0.5 * width, 0.5 * height);
      break;
    }
    case PairKind::Elastic:
      field = elastic_field(rng, height, width, max_displacement);
      break;
  }
  return render_pair(scene, field, height, width);
}

ImagePair synthetic_translate_pair(int height, int width, double dx, double dy,
                                   std::uint64_t seed) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("synthetic_translate_pair: size must be at least 16x16");
  Rng rng(derive_seed(seed, 17));
  Scene scene = Scene::make(rng, height, width);
  return render_pair(scene, translate_field(dx, dy), height, width);
}

}  // namespace dysk
