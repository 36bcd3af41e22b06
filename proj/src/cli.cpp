#include "dysk/cli.hpp"

#include "dysk/checkpoint.hpp"
#include "dysk/complexity.hpp"
#include "dysk/gradcheck.hpp"
#include "dysk/losses.hpp"
#include "dysk/metrics.hpp"
#include "dysk/optimizer.hpp"
#include "dysk/pgm.hpp"
#include "dysk/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

namespace dysk {

namespace fs = std::filesystem;

namespace {

const char* kUsage =
    "usage: dyskernel <train|register|eval|gradcheck|analyze-complexity|bench>\n"
    "                 [--config PATH] [--key value ...]\n";

std::string in_out_dir(const RunConfig& cfg, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(cfg.out_dir) / p).string();
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw RunError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

std::ofstream open_output(const RunConfig& cfg, const std::string& name) {
  ensure_out_dir(cfg);
  const std::string path = in_out_dir(cfg, name);
  std::ofstream out(path);
  if (!out) throw RunError("cannot write " + path);
  return out;
}

ModelConfig model_config(const RunConfig& cfg) {
  return ModelConfig{cfg.channels, cfg.heads, cfg.dsb_layers, cfg.window};
}

LossConfig loss_config(const RunConfig& cfg) {
  return LossConfig{parse_sim_kind(cfg.sim), cfg.lambda_smooth, cfg.ncc_window};
}

AdamWConfig optimizer_config(const RunConfig& cfg) {
  return AdamWConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
}

void load_model_checkpoint(const RunConfig& cfg, RegistrationModel& model) {
  const std::string path = in_out_dir(cfg, cfg.checkpoint);
  try {
    load_checkpoint(path, model.params());
  } catch (const std::runtime_error& err) {
    throw ValidationError(err.what());
  }
}

std::vector<std::pair<int, int>> parse_pixel_list(const std::string& text) {
  std::vector<std::pair<int, int>> pixels;
  for (const auto& part : split(text, ';')) {
    if (part.empty()) continue;
    const auto coords = parse_int_list(part);
    if (coords.size() != 2)
      throw ValidationError("attn_pixels: expected 'y,x' pairs separated by ';', got '" + part +
                            "'");
    pixels.emplace_back(coords[0], coords[1]);
  }
  return pixels;
}

struct Summary {
  double mean = 0;
  double stdev = 0;
};

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  double var = 0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stdev = std::sqrt(var / values.size());
  return s;
}

std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void cmd_train(const RunConfig& cfg) {
  RegistrationModel model(model_config(cfg), cfg.seed);
  const LossConfig loss_cfg = loss_config(cfg);
  const AdamWConfig opt_cfg = optimizer_config(cfg);
  const PairKind kind = parse_pair_kind(cfg.pair_kind);
  const std::uint64_t data_seed = derive_seed(cfg.seed, seed_stream::data);

  std::ofstream log = open_output(cfg, "training_log.csv");
  log << "step,loss,sim,smooth\n";

  for (int step = 0; step < cfg.steps; ++step) {
    // One "epoch" revisits the same train_pool pairs in order.
    ImagePair pair = synthetic_pair(kind, cfg.size, cfg.size,
                                    derive_seed(data_seed, step % cfg.train_pool), cfg.max_disp);
    auto [phi_a2b, phi_b2a] = model_forward(pair.image_a, pair.image_b, model);
    BidirectionalLossTerms terms =
        bidirectional_loss_terms(pair.image_a, pair.image_b, phi_a2b, phi_b2a, loss_cfg);
    const double loss_value = terms.total.item();
    if (!std::isfinite(loss_value))
      throw RunError("non-finite loss at step " + std::to_string(step));

    terms.total.backward();
    AdamWConfig step_cfg = opt_cfg;
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
      step_cfg.lr = opt_cfg.lr * double(step + 1) / double(cfg.warmup_steps);
    }
    adamw_step(model.params(), step_cfg);
    model.params().zero_grad();

    log << step << ',' << csv_double(loss_value) << ',' << csv_double(terms.similarity.item())
        << ',' << csv_double(terms.smoothness.item()) << "\n";
    if (step % 20 == 0 || step == cfg.steps - 1)
      std::cout << "step " << step << " loss " << csv_double(loss_value) << "\n";
  }
  if (!log) throw RunError("failed writing training log");

  save_checkpoint(in_out_dir(cfg, cfg.checkpoint), model.params());
  std::cout << "checkpoint written to " << in_out_dir(cfg, cfg.checkpoint) << "\n";
}

void cmd_register(const RunConfig& cfg) {
  if (cfg.moving.empty() || cfg.fixed.empty())
    throw ValidationError("register needs --moving and --fixed PGM paths");
  RegistrationModel model(model_config(cfg), cfg.seed);
  load_model_checkpoint(cfg, model);

  Tensor image_a = read_pgm(cfg.moving);
  Tensor image_b = read_pgm(cfg.fixed);
  if (image_a.shape() != image_b.shape())
    throw ValidationError("register: image shapes differ, " + shape_str(image_a.shape()) +
                          " vs " + shape_str(image_b.shape()));

  std::vector<AttentionWeights> attention;
  DeformationField phi_a2b = model.flow(image_a, image_b, &attention);
  DeformationField phi_b2a = model.flow(image_b, image_a);

  ensure_out_dir(cfg);
  write_container(in_out_dir(cfg, "phi_a2b.field"),
                  {{"phi", phi_a2b.phi.shape(), phi_a2b.phi.value()}});
  write_container(in_out_dir(cfg, "phi_b2a.field"),
                  {{"phi", phi_b2a.phi.shape(), phi_b2a.phi.value()}});
  write_pgm(in_out_dir(cfg, "x_a2b.pgm"), warp(image_a, phi_a2b).detach(), 16);
  write_pgm(in_out_dir(cfg, "x_b2a.pgm"), warp(image_b, phi_b2a).detach(), 16);

  if (!cfg.attn_csv.empty()) {
    const auto pixels = parse_pixel_list(cfg.attn_pixels);
    if (pixels.empty())
      throw ValidationError("attn_csv requested but attn_pixels is empty");
    std::ofstream out(in_out_dir(cfg, cfg.attn_csv));
    if (!out) throw RunError("cannot write " + in_out_dir(cfg, cfg.attn_csv));
    export_attention_csv(attention.at(cfg.attn_block - 1), pixels, out);
  }
  std::cout << "fields and warped images written to " << cfg.out_dir << "\n";
}

void cmd_eval(const RunConfig& cfg) {
  RegistrationModel model(model_config(cfg), cfg.seed);
  load_model_checkpoint(cfg, model);
  const LossConfig loss_cfg = loss_config(cfg);
  const PairKind kind = parse_pair_kind(cfg.pair_kind);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, seed_stream::eval);

  std::ofstream csv = open_output(cfg, "metrics.csv");
  csv << "pair_id,dsc_mean,dsc_1,dsc_2,jac_neg_pct,loss\n";

  std::vector<double> dsc_values, jac_values, initial_values;
  for (int id = 0; id < cfg.eval_pairs; ++id) {
    ImagePair pair =
        synthetic_pair(kind, cfg.size, cfg.size, derive_seed(eval_seed, id), cfg.max_disp);
    auto [phi_a2b, phi_b2a] = model_forward(pair.image_a, pair.image_b, model);

    DiceResult dice;
    DiceResult initial;
    try {
      LabelMap warped = warp_labels_nn(pair.seg_a, phi_a2b);
      dice = dice_score(warped, pair.seg_b, {1, 2});
      initial = dice_score(pair.seg_a, pair.seg_b, {1, 2});
    } catch (const std::invalid_argument& err) {
      std::cerr << "pair " << id << " skipped: " << err.what() << "\n";
      continue;
    }
    const double jac = jacobian_negative_fraction(phi_a2b);
    const double loss =
        bidirectional_loss(pair.image_a, pair.image_b, phi_a2b, phi_b2a, loss_cfg).item();

    auto label_dsc = [&](int label) {
      for (size_t i = 0; i < dice.labels.size(); ++i)
        if (dice.labels[i] == label) return dice.per_label[i];
      return 0.0;
    };
    csv << id << ',' << csv_double(dice.mean) << ',' << csv_double(label_dsc(1)) << ','
        << csv_double(label_dsc(2)) << ',' << csv_double(jac) << ',' << csv_double(loss) << "\n";
    dsc_values.push_back(dice.mean);
    jac_values.push_back(jac);
    initial_values.push_back(initial.mean);
  }
  if (dsc_values.empty()) throw RunError("eval: every pair was skipped");

  const Summary dsc = summarize(dsc_values);
  const Summary jac = summarize(jac_values);
  const Summary initial = summarize(initial_values);
  std::printf("DSC[%%] %.1f±%.1f  |J|<0[%%] %.2f±%.2f  (initial DSC %.1f±%.1f, %zu pairs)\n",
              dsc.mean, dsc.stdev, jac.mean, jac.stdev, initial.mean, initial.stdev,
              dsc_values.size());
}

void cmd_gradcheck(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.seed_set ? cfg.seed : 20250808;
  const auto results = run_gradcheck(standard_gradcheck_cases(seed, 10));

  // Aggregate instances per op.
  std::map<std::string, std::pair<double, bool>> per_op;
  for (const auto& r : results) {
    const std::string op = r.name.substr(0, r.name.find('['));
    auto& slot = per_op.emplace(op, std::make_pair(0.0, true)).first->second;
    slot.first = std::max(slot.first, r.max_rel_err);
    slot.second = slot.second && r.pass;
  }

  bool all_pass = true;
  for (const auto& [op, slot] : per_op) {
    std::printf("op=%-18s max_rel_err=%.3e %s\n", op.c_str(), slot.first,
                slot.second ? "PASS" : "FAIL");
    all_pass = all_pass && slot.second;
  }

  // End-to-end bidirectional loss gradient on a small pair, spot-checked
  // against finite differences for representative parameter tensors.
  {
    ModelConfig mc{8, 2, 2, "square3"};
    RegistrationModel model(mc, seed);
    Rng rng(derive_seed(seed, 555));
    // Break the zero-initialized heads so gradients are informative.
    for (const auto& name : model.params().names()) {
      Tensor& p = model.params().get(name);
      if (name.find("flow.") == 0 || name.find("offset.conv2") != std::string::npos)
        for (long i = 0; i < p.size(); ++i) p.value_mut()[i] += 0.05 * rng.normal();
    }
    ImagePair pair = synthetic_pair(PairKind::Elastic, 16, 16, derive_seed(seed, 556), 2.0);
    LossConfig loss_cfg;
    loss_cfg.ncc_window = 5;

    auto loss_value = [&]() {
      auto [pab, pba] = model_forward(pair.image_a, pair.image_b, model);
      return bidirectional_loss(pair.image_a, pair.image_b, pab, pba, loss_cfg);
    };
    Tensor loss = loss_value();
    loss.backward();

    double max_err = 0;
    for (const std::string name :
         {"enc.conv1.weight", "dsb1.offset.conv2.bias", "dsb1.channel", "flow.bias"}) {
      Tensor& p = model.params().get(name);
      const Array analytic = p.grad();
      auto eval = [&](const Tensor& replacement) {
        const Array saved = p.value();
        p.value_mut() = replacement.value();
        const double v = loss_value().item();
        p.value_mut() = saved;
        return v;
      };
      const Array fd = finite_diff_grad(eval, p.detach(), 1e-5);
      for (long i = 0; i < analytic.size(); ++i) {
        const double err = std::abs(analytic[i] - fd[i]) / (1e-6 + 1e-3 * std::abs(fd[i]));
        max_err = std::max(max_err, err);
      }
    }
    model.params().zero_grad();
    const bool pass = max_err <= 1.0;
    std::printf("op=%-18s max_rel_err=%.3e %s\n", "end_to_end_bireg", max_err,
                pass ? "PASS" : "FAIL");
    all_pass = all_pass && pass;
  }

  if (!all_pass) throw RunError("gradient check failed");
}

void cmd_analyze_complexity(const RunConfig& cfg) {
  std::ofstream csv = open_output(cfg, "complexity.csv");
  std::ostringstream rows;
  rows << "N,log10_H,log10_C,R\n";
  int emitted = 0;
  for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
    ComplexityScenario s{n, 1, cfg.alpha, cfg.labels};
    if (cfg.alpha * n - 1.0 < 1.0) continue;  // below model validity
    rows << n << ',' << csv_double(log_registration_complexity(s)) << ','
         << csv_double(log_segmentation_complexity(s)) << ',' << csv_double(complexity_ratio(s))
         << "\n";
    ++emitted;
  }
  if (emitted == 0)
    throw ValidationError("analyze-complexity: no valid N in [" + std::to_string(cfg.n_min) +
                          ", " + std::to_string(cfg.n_max) + "]");
  csv << rows.str();
  std::cout << rows.str();
  std::cerr << "crossover N* (alpha*N-1 > L): " << complexity_crossover(cfg.alpha, cfg.labels)
            << "\n";
}

void cmd_bench(const RunConfig& cfg) {
  const std::vector<int> sizes = parse_int_list(cfg.kernel_sizes);
  if (sizes.empty()) throw ValidationError("bench: empty kernel_sizes list");
  const int feat = cfg.size / 4;

  std::ofstream csv = open_output(cfg, "bench.csv");
  std::ostringstream rows;
  rows << "k,|U|,flops,params,wall_ms\n";
  for (int k : sizes) {
    BaseWindow window = BaseWindow::square(k);
    const OpCost cost = count_flops_params(cfg.channels, cfg.heads, window.size(), feat, feat);

    ParamStore params;
    Rng rng(derive_seed(cfg.seed, 99));
    DsbBlock block = make_dsb_block(cfg.channels, cfg.heads, window, rng, params, "bench");
    Tensor fa = uniform_tensor({1, cfg.channels, feat, feat}, rng, 0, 1);
    Tensor fb = uniform_tensor({1, cfg.channels, feat, feat}, rng, 0, 1);

    std::vector<double> times;
    for (int run = 0; run < 5; ++run) {
      const auto start = std::chrono::steady_clock::now();
      Tensor out = dsb_forward(fa, fb, block);
      const auto stop = std::chrono::steady_clock::now();
      (void)out;
      times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    rows << k << ',' << window.size() << ',' << cost.flops << ',' << cost.params << ','
         << csv_double(median) << "\n";
  }
  csv << rows.str();
  std::cout << rows.str();
}

RunConfig build_config(const std::string& task, const std::vector<std::string>& args) {
  // Flags come as --key value or --key=value pairs.
  std::vector<std::pair<std::string, std::string>> flags;
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& token = args[i];
    if (token.rfind("--", 0) != 0)
      throw ValidationError("expected --key, got '" + token + "'");
    std::string key = token.substr(2);
    std::string value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw ValidationError("flag --" + key + " needs a value");
      value = args[++i];
    }
    flags.emplace_back(std::move(key), std::move(value));
  }

  RunConfig cfg;
  cfg.task = task;
  for (const auto& [key, value] : flags)
    if (key == "config") apply_config_file(cfg, value);
  if (const char* env_seed = std::getenv("DYSK_SEED"))
    apply_config_value(cfg, "seed", env_seed);
  for (const auto& [key, value] : flags)
    if (key != "config") apply_config_value(cfg, key, value);

  validate_config(cfg);
  return cfg;
}

int run_cli(const std::vector<std::string>& args) {
  try {
    if (args.empty()) {
      std::cerr << kUsage;
      return 1;
    }
    const std::string task = args[0];
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    const RunConfig cfg = build_config(task, rest);

    if (task == "train") cmd_train(cfg);
    else if (task == "register") cmd_register(cfg);
    else if (task == "eval") cmd_eval(cfg);
    else if (task == "gradcheck") cmd_gradcheck(cfg);
    else if (task == "analyze-complexity") cmd_analyze_complexity(cfg);
    else if (task == "bench") cmd_bench(cfg);
    else {
      std::cerr << "unknown subcommand: " << task << "\n" << kUsage;
      return 1;
    }
    return 0;
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "failure: " << err.what() << "\n";
    return 2;
  }
}

}  // namespace dysk
