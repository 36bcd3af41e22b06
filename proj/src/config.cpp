#include "dysk/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dysk {

namespace {

int to_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": not an integer: '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": not a number: '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key " + key + ": not an unsigned integer: '" + value + "'");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "size") cfg.size = to_int(key, value);
  else if (key == "channels") cfg.channels = to_int(key, value);
  else if (key == "heads") cfg.heads = to_int(key, value);
  else if (key == "dsb_layers") cfg.dsb_layers = to_int(key, value);
  else if (key == "window") cfg.window = value;
  else if (key == "sim") cfg.sim = value;
  else if (key == "lambda_smooth") cfg.lambda_smooth = to_double(key, value);
  else if (key == "ncc_window") cfg.ncc_window = to_int(key, value);
  else if (key == "lr") cfg.lr = to_double(key, value);
  else if (key == "beta1") cfg.beta1 = to_double(key, value);
  else if (key == "beta2") cfg.beta2 = to_double(key, value);
  else if (key == "weight_decay") cfg.weight_decay = to_double(key, value);
  else if (key == "steps") cfg.steps = to_int(key, value);
  else if (key == "warmup_steps") cfg.warmup_steps = to_int(key, value);
  else if (key == "seed") {
    cfg.seed = to_u64(key, value);
    cfg.seed_set = true;
  } else if (key == "pair_kind") cfg.pair_kind = value;
  else if (key == "max_disp") cfg.max_disp = to_double(key, value);
  else if (key == "eval_pairs") cfg.eval_pairs = to_int(key, value);
  else if (key == "train_pool") cfg.train_pool = to_int(key, value);
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "data_dir") cfg.data_dir = value;
  else if (key == "moving") cfg.moving = value;
  else if (key == "fixed") cfg.fixed = value;
  else if (key == "kernel_sizes") cfg.kernel_sizes = value;
  else if (key == "attn_csv") cfg.attn_csv = value;
  else if (key == "attn_pixels") cfg.attn_pixels = value;
  else if (key == "attn_block") cfg.attn_block = to_int(key, value);
  else if (key == "alpha") cfg.alpha = to_double(key, value);
  else if (key == "labels") cfg.labels = to_int(key, value);
  else if (key == "n_min") cfg.n_min = to_int(key, value);
  else if (key == "n_max") cfg.n_max = to_int(key, value);
  else throw ValidationError("unknown config key: " + key);
}

namespace {

void apply_config_lines(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

}  // namespace

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  apply_config_lines(cfg, in, path);
}

std::string emit_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "size=" << cfg.size << "\n";
  out << "channels=" << cfg.channels << "\n";
  out << "heads=" << cfg.heads << "\n";
  out << "dsb_layers=" << cfg.dsb_layers << "\n";
  out << "window=" << cfg.window << "\n";
  out << "sim=" << cfg.sim << "\n";
  out << "lambda_smooth=" << format_double(cfg.lambda_smooth) << "\n";
  out << "ncc_window=" << cfg.ncc_window << "\n";
  out << "lr=" << format_double(cfg.lr) << "\n";
  out << "beta1=" << format_double(cfg.beta1) << "\n";
  out << "beta2=" << format_double(cfg.beta2) << "\n";
  out << "weight_decay=" << format_double(cfg.weight_decay) << "\n";
  out << "steps=" << cfg.steps << "\n";
  out << "warmup_steps=" << cfg.warmup_steps << "\n";
  if (cfg.seed_set) out << "seed=" << cfg.seed << "\n";
  out << "pair_kind=" << cfg.pair_kind << "\n";
  out << "max_disp=" << format_double(cfg.max_disp) << "\n";
  out << "eval_pairs=" << cfg.eval_pairs << "\n";
  out << "train_pool=" << cfg.train_pool << "\n";
  out << "checkpoint=" << cfg.checkpoint << "\n";
  out << "out_dir=" << cfg.out_dir << "\n";
  out << "data_dir=" << cfg.data_dir << "\n";
  out << "moving=" << cfg.moving << "\n";
  out << "fixed=" << cfg.fixed << "\n";
  out << "kernel_sizes=" << cfg.kernel_sizes << "\n";
  out << "attn_csv=" << cfg.attn_csv << "\n";
  out << "attn_pixels=" << cfg.attn_pixels << "\n";
  out << "attn_block=" << cfg.attn_block << "\n";
  out << "alpha=" << format_double(cfg.alpha) << "\n";
  out << "labels=" << cfg.labels << "\n";
  out << "n_min=" << cfg.n_min << "\n";
  out << "n_max=" << cfg.n_max << "\n";
  return out.str();
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  apply_config_lines(base, in, "<inline>");
  return base;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ValidationError("invalid config: " + msg); };
  if (cfg.size < 16 || cfg.size % 4 != 0) fail("size must be >= 16 and divisible by 4");
  if (cfg.channels < 2 || cfg.channels % 2 != 0) fail("channels must be even and >= 2");
  if (cfg.heads < 1 || cfg.channels % cfg.heads != 0) fail("channels must divide into heads");
  if (cfg.dsb_layers < 1) fail("dsb_layers must be >= 1");
  if (cfg.lambda_smooth < 0) fail("lambda_smooth must be >= 0");
  if (cfg.ncc_window < 3 || cfg.ncc_window % 2 == 0) fail("ncc_window must be odd and >= 3");
  if (cfg.lr <= 0) fail("lr must be positive");
  if (cfg.beta1 <= 0 || cfg.beta1 >= 1 || cfg.beta2 <= 0 || cfg.beta2 >= 1)
    fail("betas must lie in (0, 1)");
  if (cfg.weight_decay < 0) fail("weight_decay must be >= 0");
  if (cfg.steps < 0) fail("steps must be >= 0");
  if (cfg.warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (cfg.max_disp <= 0) fail("max_disp must be positive");
  if (cfg.eval_pairs < 1) fail("eval_pairs must be >= 1");
  if (cfg.train_pool < 1) fail("train_pool must be >= 1");
  if (cfg.attn_block < 1 || cfg.attn_block > cfg.dsb_layers) fail("attn_block out of range");
  if (cfg.alpha <= 0) fail("alpha must be positive");
  if (cfg.labels < 2) fail("labels must be >= 2");
  if (cfg.n_min < 1 || cfg.n_max < cfg.n_min) fail("need 1 <= n_min <= n_max");
  if ((cfg.task == "train" || cfg.task == "eval") && !cfg.seed_set)
    fail("seed is mandatory for " + cfg.task);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  return parts;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  for (const auto& part : split(text, ',')) {
    const std::string trimmed = trim(part);
    if (trimmed.empty()) continue;
    values.push_back(to_int("list", trimmed));
  }
  return values;
}

}  // namespace dysk
