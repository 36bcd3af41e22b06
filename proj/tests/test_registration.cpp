#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dysk/checkpoint.hpp"
#include "dysk/gradcheck.hpp"
#include "dysk/losses.hpp"
#include "dysk/pgm.hpp"
#include "dysk/registration.hpp"

#include <filesystem>

using namespace dysk;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.dsb_layers = 2;
  cfg.window_spec = "square3";
  return cfg;
}

}  // namespace

TEST_CASE("identical inputs with a zero flow head give zero fields") {
  RegistrationModel model(small_config(), 5);
  Rng rng(7);
  Tensor x = uniform_tensor({1, 1, 16, 16}, rng, 0, 1);
  auto [a2b, b2a] = model_forward(x, x, model);
  CHECK(a2b.phi.value().abs().maxCoeff() == 0.0);
  CHECK(b2a.phi.value().abs().maxCoeff() == 0.0);
}

TEST_CASE("swapping inputs swaps the returned fields bitwise") {
  RegistrationModel model(small_config(), 5);
  // move the flow head off zero so the fields are nontrivial
  Rng rng(11);
  for (long i = 0; i < model.params().get("flow.weight").size(); ++i)
    model.params().get("flow.weight").value_mut()[i] = 0.05 * rng.normal();

  Tensor xa = uniform_tensor({1, 1, 16, 16}, rng, 0, 1);
  Tensor xb = uniform_tensor({1, 1, 16, 16}, rng, 0, 1);
  auto [p, q] = model_forward(xa, xb, model);
  auto [r, s] = model_forward(xb, xa, model);
  CHECK(p.phi.value().abs().maxCoeff() > 0.0);
  for (long i = 0; i < p.phi.size(); ++i) {
    CHECK(p.phi.value()[i] == s.phi.value()[i]);
    CHECK(q.phi.value()[i] == r.phi.value()[i]);
  }
}

TEST_CASE("model rejects malformed inputs") {
  RegistrationModel model(small_config(), 5);
  Tensor ok = Tensor::zeros({1, 1, 16, 16});
  CHECK_THROWS_AS(model.flow(ok, Tensor::zeros({1, 1, 16, 20})), std::invalid_argument);
  CHECK_THROWS_AS(model.flow(Tensor::zeros({1, 2, 16, 16}), Tensor::zeros({1, 2, 16, 16})),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.flow(Tensor::zeros({1, 1, 12, 12}), Tensor::zeros({1, 1, 12, 12})),
                  std::invalid_argument);
  ModelConfig odd = small_config();
  odd.channels = 7;
  CHECK_THROWS_AS(RegistrationModel(odd, 1), std::invalid_argument);
}

TEST_CASE("encoder-weight gradient matches finite differences on a 16x16 pair") {
  RegistrationModel model(small_config(), 13);
  Rng rng(17);
  // nonzero heads so gradients flow through every branch
  for (const auto& name : model.params().names()) {
    Tensor& p = model.params().get(name);
    if (name.find("flow.") == 0 || name.find("offset.conv2") != std::string::npos)
      for (long i = 0; i < p.size(); ++i) p.value_mut()[i] += 0.05 * rng.normal();
  }
  ImagePair pair = synthetic_pair(PairKind::Elastic, 16, 16, 19, 2.0);
  LossConfig cfg;
  cfg.ncc_window = 5;

  auto loss_value = [&]() {
    auto [a2b, b2a] = model_forward(pair.image_a, pair.image_b, model);
    return bidirectional_loss(pair.image_a, pair.image_b, a2b, b2a, cfg);
  };
  Tensor loss = loss_value();
  loss.backward();

  Tensor& w = model.params().get("enc.conv1.weight");
  const Array analytic = w.grad();
  auto eval = [&](const Tensor& replacement) {
    const Array saved = w.value();
    w.value_mut() = replacement.value();
    const double v = loss_value().item();
    w.value_mut() = saved;
    return v;
  };
  const Array fd = finite_diff_grad(eval, w.detach(), 1e-4);
  for (long i = 0; i < analytic.size(); ++i) {
    INFO("enc.conv1.weight[", i, "]");
    CHECK(std::abs(analytic[i] - fd[i]) <= 1e-6 + 1e-3 * std::abs(fd[i]));
  }
}

TEST_CASE("no parameter group is a dead branch") {
  RegistrationModel model(small_config(), 23);
  Rng rng(29);
  for (const auto& name : model.params().names()) {
    Tensor& p = model.params().get(name);
    if (name.find("flow.") == 0 || name.find("offset.conv2") != std::string::npos)
      for (long i = 0; i < p.size(); ++i) p.value_mut()[i] += 0.05 * rng.normal();
  }
  ImagePair pair = synthetic_pair(PairKind::Elastic, 16, 16, 31, 2.0);
  auto [a2b, b2a] = model_forward(pair.image_a, pair.image_b, model);
  bidirectional_loss(pair.image_a, pair.image_b, a2b, b2a, LossConfig{SimKind::Ncc, 0.25, 5})
      .backward();
  for (const auto& name : model.params().names()) {
    INFO(name);
    CHECK(model.params().get(name).grad().abs().maxCoeff() > 0.0);
  }
}

TEST_CASE("zero field warps any image to itself exactly") {
  Rng rng(37);
  Tensor image = uniform_tensor({1, 3, 8, 8}, rng, 0, 1);
  Tensor warped = warp(image, make_field(Tensor::zeros({1, 2, 8, 8})));
  for (long i = 0; i < image.size(); ++i) CHECK(warped.value()[i] == image.value()[i]);
}

TEST_CASE("constant unit field reads from the displaced source pixel") {
  Array data = Array::Zero(64);
  data[3 * 8 + 5] = 1.0;  // hot pixel at (y=3, x=5)
  Tensor image = Tensor::from_array({1, 1, 8, 8}, data);
  Array phi = Array::Zero(2 * 64);
  phi.segment(0, 64).setConstant(1.0);  // x displacement +1
  Tensor warped = warp(image, make_field(Tensor::from_array({1, 2, 8, 8}, phi)));
  // output(y, x) = input(x + 1, y): the hot pixel appears at x = 4
  CHECK(warped.at({0, 0, 3, 4}) == 1.0);
  CHECK(warped.at({0, 0, 3, 5}) == 0.0);
}

TEST_CASE("warping a mask with the zero field keeps dice at 100") {
  ImagePair pair = synthetic_pair(PairKind::Elastic, 32, 32, 41, 3.0);
  LabelMap same = warp_labels_nn(pair.seg_a, make_field(Tensor::zeros({1, 2, 32, 32})));
  DiceResult dice = dice_score(same, pair.seg_a, {1, 2});
  CHECK(dice.mean == 100.0);
}

TEST_CASE("warp composition approximates field addition for small constant fields") {
  // smooth image via a wide separable ramp + sinusoid
  Array data(32 * 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      data[y * 32 + x] = 0.5 + 0.3 * std::sin(0.2 * x) * std::cos(0.15 * y);
  Tensor image = Tensor::from_array({1, 1, 32, 32}, data);

  auto const_field = [](double dx, double dy) {
    Array phi(2 * 32 * 32);
    phi.segment(0, 32 * 32).setConstant(dx);
    phi.segment(32 * 32, 32 * 32).setConstant(dy);
    return make_field(Tensor::from_array({1, 2, 32, 32}, phi));
  };
  Tensor a = warp(warp(image, const_field(0.4, 0.1)), const_field(0.2, 0.3));
  Tensor b = warp(image, const_field(0.6, 0.4));
  for (int y = 4; y < 28; ++y)
    for (int x = 4; x < 28; ++x)
      CHECK(a.at({0, 0, y, x}) == doctest::Approx(b.at({0, 0, y, x})).epsilon(1e-3));
}

TEST_CASE("synthetic pairs are deterministic in the seed") {
  ImagePair a = synthetic_pair(PairKind::Elastic, 32, 32, 43, 3.0);
  ImagePair b = synthetic_pair(PairKind::Elastic, 32, 32, 43, 3.0);
  for (long i = 0; i < a.image_a.size(); ++i) {
    CHECK(a.image_a.value()[i] == b.image_a.value()[i]);
    CHECK(a.image_b.value()[i] == b.image_b.value()[i]);
  }
  CHECK(a.seg_a.labels == b.seg_a.labels);
  ImagePair c = synthetic_pair(PairKind::Elastic, 32, 32, 44, 3.0);
  CHECK((a.image_a.value() - c.image_a.value()).abs().maxCoeff() > 0.0);
}

TEST_CASE("translate pairs carry the exact constant field") {
  ImagePair pair = synthetic_translate_pair(32, 32, 2.0, 0.0, 47);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(pair.phi_true.phi.at({0, 0, y, x}) == 2.0);
      CHECK(pair.phi_true.phi.at({0, 1, y, x}) == 0.0);
    }
  // warping image_a by the true field reproduces image_b away from borders
  Tensor warped = warp(pair.image_a, pair.phi_true);
  double max_err = 0;
  for (int y = 2; y < 30; ++y)
    for (int x = 2; x < 30; ++x)
      max_err = std::max(max_err,
                         std::abs(warped.at({0, 0, y, x}) - pair.image_b.at({0, 0, y, x})));
  CHECK(max_err < 1e-9);  // integer translation: resampling is exact
}

TEST_CASE("rotation pairs return the analytic field") {
  ImagePair pair = synthetic_pair(PairKind::Rotate, 32, 32, 53, 3.0);
  // the field must vanish at the rotation center and grow with radius
  const double center = pair.phi_true.phi.at({0, 0, 16, 16});
  CHECK(std::abs(center) < 0.2);
  CHECK(pair.phi_true.phi.value().abs().maxCoeff() > 0.5);
  CHECK(jacobian_negative_fraction(pair.phi_true) == 0.0);
}

TEST_CASE("elastic generating fields stay within bounds and never fold") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u}) {
    ImagePair pair = synthetic_pair(PairKind::Elastic, 32, 32, seed, 3.0);
    CHECK(pair.phi_true.phi.value().abs().maxCoeff() <= 3.0 + 1e-9);
    CHECK(pair.phi_true.phi.value().abs().maxCoeff() > 0.5);
    CHECK(jacobian_negative_fraction(pair.phi_true) == 0.0);
    // both labels present in both masks
    CHECK(positive_labels(pair.seg_a, pair.seg_b) == std::vector<int>{1, 2});
  }
}

TEST_CASE("synthetic pair validation") {
  CHECK_THROWS_AS(synthetic_pair(PairKind::Elastic, 8, 8, 1, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(synthetic_pair(PairKind::Elastic, 32, 32, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(parse_pair_kind("affine"), std::invalid_argument);
  CHECK(parse_pair_kind("translate") == PairKind::Translate);
}

TEST_CASE("deformation fields round-trip through the container bit-exactly") {
  const std::string path = (fs::temp_directory_path() / "dysk_phi_test.field").string();
  ImagePair pair = synthetic_pair(PairKind::Elastic, 32, 32, 59, 3.0);
  write_container(path, {{"phi", pair.phi_true.phi.shape(), pair.phi_true.phi.value()}});
  auto arrays = read_container(path);
  REQUIRE(arrays.size() == 1);
  CHECK(arrays[0].name == "phi");
  CHECK(arrays[0].shape == Shape{1, 2, 32, 32});
  for (long i = 0; i < arrays[0].data.size(); ++i)
    CHECK(arrays[0].data[i] == pair.phi_true.phi.value()[i]);
  fs::remove(path);
}

TEST_CASE("pgm round-trips quantized intensities") {
  const std::string path = (fs::temp_directory_path() / "dysk_img_test.pgm").string();
  Rng rng(61);
  Tensor image = uniform_tensor({1, 1, 12, 10}, rng, 0, 1);
  write_pgm(path, image, 16);
  Tensor back = read_pgm(path);
  CHECK(back.shape() == Shape{1, 1, 12, 10});
  for (long i = 0; i < image.size(); ++i)
    CHECK(std::abs(back.value()[i] - image.value()[i]) <= 0.5 / 65535.0);
  // a second write of the already-quantized image is byte-stable
  write_pgm(path, back, 16);
  Tensor twice = read_pgm(path);
  for (long i = 0; i < twice.size(); ++i) CHECK(twice.value()[i] == back.value()[i]);

  write_pgm(path, image, 8);
  Tensor coarse = read_pgm(path);
  for (long i = 0; i < image.size(); ++i)
    CHECK(std::abs(coarse.value()[i] - image.value()[i]) <= 0.5 / 255.0);
  fs::remove(path);
}

TEST_CASE("pgm parser handles header comments and rejects other formats") {
  const std::string path = (fs::temp_directory_path() / "dysk_hdr_test.pgm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# created by hand\n2 2\n255\n";
    out.put(char(0));
    out.put(char(85));
    out.put(char(170));
    out.put(char(255));
  }
  Tensor t = read_pgm(path);
  CHECK(t.at({0, 0, 0, 0}) == 0.0);
  CHECK(t.at({0, 0, 1, 1}) == 1.0);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P2\n2 2\n255\n0 0 0 0\n";
  }
  CHECK_THROWS_AS(read_pgm(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("model construction is deterministic in the seed") {
  RegistrationModel a(small_config(), 71);
  RegistrationModel b(small_config(), 71);
  for (const auto& name : a.params().names()) {
    const Array& va = a.params().get(name).value();
    const Array& vb = b.params().get(name).value();
    for (long i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
  }
}
