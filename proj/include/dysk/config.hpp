#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dysk {

// Bad input (flags, config values, shapes) -> exit 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failure while running (non-finite loss, I/O) -> exit 2.
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat run configuration. Every key is readable from a key=value config
// file and overridable by a same-named --key flag; DYSK_SEED sits between
// the two for the seed.
struct RunConfig {
  std::string task;

  int size = 32;
  int channels = 16;
  int heads = 4;
  int dsb_layers = 2;
  std::string window = "square3";

  std::string sim = "ncc";
  double lambda_smooth = 0.25;
  int ncc_window = 9;

  double lr = 4e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  int steps = 200;
  int warmup_steps = 40;  // linear lr ramp over the first steps

  bool seed_set = false;
  std::uint64_t seed = 0;

  std::string pair_kind = "elastic";
  double max_disp = 3.0;
  int eval_pairs = 50;
  int train_pool = 12;  // steps cycle this many distinct pairs (epoch-like)

  std::string checkpoint = "checkpoint.dysk";
  std::string out_dir = ".";
  std::string data_dir;
  std::string moving;
  std::string fixed;

  std::string kernel_sizes = "3,5,7";
  std::string attn_csv;
  std::string attn_pixels;
  int attn_block = 1;

  double alpha = 1.0;
  int labels = 2;
  int n_min = 4;
  int n_max = 256;

  bool operator==(const RunConfig&) const = default;
};

// Applies one key=value assignment; unknown keys or unparsable values throw.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// '#'-commented key=value file.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Every key, one per line, parseable back into an identical config.
std::string emit_config(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text, RunConfig base = {});

void validate_config(const RunConfig& cfg);

std::vector<std::string> split(const std::string& text, char sep);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace dysk
