#pragma once

// Flat `key = value` experiment configuration. '#' starts a comment. Later
// assignments win, so command-line overrides are applied after the file.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dsample/data.hpp"
#include "dsample/losses.hpp"
#include "dsample/models.hpp"
#include "dsample/projection.hpp"

namespace dsample {

struct ExperimentConfig {
  TaskKind task = TaskKind::classifier;
  std::uint64_t seed = 1;        // sampler / training seed
  std::uint64_t task_seed = 7;   // task network init and data order
  std::uint64_t eval_seed = 99;  // random strategy, independent of training
  std::string out = "out";

  DatasetConfig data{8, 200, 40, 256, 0.05, 0.5, 1.5, 1};
  Primitive shape = Primitive::cone;  // registration / reconstruction class
  std::size_t pool_size = 600;
  double angle_range = 45.0;

  std::vector<std::size_t> task_conv{32, 64, 128};
  std::vector<std::size_t> task_fc{64};
  std::size_t task_epochs = 10;
  std::size_t task_batch = 32;
  double task_lr = 0.001;

  std::vector<std::size_t> sampler_conv{16, 32, 64};
  std::vector<std::size_t> sampler_fc{128};
  std::size_t k = 7;
  SamplerLossWeights weights{30.0, 1.0, 1.0, 0.0, 1.0};
  double t_init = 1.0;
  TemperatureProfile profile{ProfileKind::learned, 1.0, 0.01, std::nullopt, 0.02};
  double eta_ce = 0.0;
  double eta_entropy = 0.0;
  std::size_t sampler_epochs = 20;
  std::size_t sampler_batch = 32;
  double sampler_lr = 0.01;
  double lr_final_fraction = 0.02;  // cosine decay to this fraction of sampler_lr
  bool progressive = false;
  std::vector<std::size_t> control_sizes;  // empty: powers of two up to n
  bool simplified_only = false;            // task loss on Q, no projection

  std::vector<std::size_t> ratios{2, 4, 8, 16};
  std::vector<std::string> strategies{"random", "fps", "samplenet", "samplenet-softly-projected",
                                      "samplenet-simplified"};
  std::vector<std::string> ablate_profiles;
  std::vector<std::size_t> ablate_k;
  std::vector<double> ablate_eta_ce;
  std::vector<double> ablate_eta_entropy;

  std::string preset = "desk";  // profile: desk | reference
  std::size_t threads = 0;      // evaluation threads, 0 = hardware

  std::size_t n() const { return data.n; }
};

/// Task-specific defaults from the reference hyperparameter table, at desk
/// scale for sizes and epochs.
inline ExperimentConfig default_config(TaskKind task) {
  ExperimentConfig c;
  c.task = task;
  const auto h = reference_hyperparameters(task);
  c.k = h.k;
  c.weights = h.weights;
  c.profile.floor = h.t_floor;
  c.sampler_batch = h.batch_size;
  switch (task) {
    case TaskKind::classifier:
      c.sampler_epochs = 30;
      break;
    case TaskKind::registration:
      c.task_conv = {32, 64, 128};
      c.task_fc = {128, 64};
      c.task_epochs = 40;
      c.sampler_lr = 0.01;
      c.sampler_epochs = 40;
      c.weights.alpha = 1.0;
      c.ratios = {8, 16, 32};
      break;
    case TaskKind::autoencoder:
      c.task_conv = {32, 64, 64};
      c.task_fc = {128, 128};
      c.task_epochs = 60;
      c.task_batch = 50;
      c.sampler_lr = 0.0005;
      c.ratios = {4, 8, 16, 32};
      c.strategies = {"random", "fps", "samplenet"};
      break;
  }
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used == v.size() && v[0] != '-') return x;
  } catch (const std::exception&) {
  }
  throw Error("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error("config: '" + key + "' expects a number, got '" + v + "'");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("config: '" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_u64(key, s));
  return out;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, std::string>)
      s += v[i];
    else if constexpr (std::is_floating_point_v<T>)
      s += num(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace detail

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

inline ConfigEntries parse_config_text(const std::string& text, const std::string& origin = "config") {
  ConfigEntries out;
  std::istringstream is(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(origin + ":" + std::to_string(no) + ": expected 'key = value'");
    auto key = detail::trim(line.substr(0, eq));
    auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw Error(origin + ":" + std::to_string(no) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline ConfigEntries read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

inline void apply_entry(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "task") c.task = parse_task_kind(v);
  else if (key == "seed") c.seed = to_u64(key, v);
  else if (key == "task_seed") c.task_seed = to_u64(key, v);
  else if (key == "eval_seed") c.eval_seed = to_u64(key, v);
  else if (key == "out") c.out = v;
  else if (key == "classes") c.data.classes = to_u64(key, v);
  else if (key == "train_per_class") c.data.train_per_class = to_u64(key, v);
  else if (key == "test_per_class") c.data.test_per_class = to_u64(key, v);
  else if (key == "points") c.data.n = to_u64(key, v);
  else if (key == "jitter") c.data.jitter = to_double(key, v);
  else if (key == "scale_min") c.data.scale_min = to_double(key, v);
  else if (key == "scale_max") c.data.scale_max = to_double(key, v);
  else if (key == "data_seed") c.data.seed = to_u64(key, v);
  else if (key == "shape") c.shape = parse_primitive(v);
  else if (key == "pool_size") c.pool_size = to_u64(key, v);
  else if (key == "angle_range") c.angle_range = to_double(key, v);
  else if (key == "task_conv") c.task_conv = to_sizes(key, v);
  else if (key == "task_fc") c.task_fc = to_sizes(key, v);
  else if (key == "task_epochs") c.task_epochs = to_u64(key, v);
  else if (key == "task_batch") c.task_batch = to_u64(key, v);
  else if (key == "task_lr") c.task_lr = to_double(key, v);
  else if (key == "sampler_conv") c.sampler_conv = to_sizes(key, v);
  else if (key == "sampler_fc") c.sampler_fc = to_sizes(key, v);
  else if (key == "k") c.k = to_u64(key, v);
  else if (key == "alpha") c.weights.alpha = to_double(key, v);
  else if (key == "beta") c.weights.beta = to_double(key, v);
  else if (key == "gamma") c.weights.gamma = to_double(key, v);
  else if (key == "delta") c.weights.delta = to_double(key, v);
  else if (key == "lambda") c.weights.lambda = to_double(key, v);
  else if (key == "t_init") c.t_init = to_double(key, v);
  else if (key == "t_floor") c.profile.floor = to_double(key, v);
  else if (key == "profile") c.profile.kind = parse_profile_kind(v);
  else if (key == "decay_epochs") c.profile.decay_epochs = to_double(key, v);
  else if (key == "exp_rate") c.profile.exp_rate = to_double(key, v);
  else if (key == "eta_ce") c.eta_ce = to_double(key, v);
  else if (key == "eta_entropy") c.eta_entropy = to_double(key, v);
  else if (key == "sampler_epochs") c.sampler_epochs = to_u64(key, v);
  else if (key == "sampler_batch") c.sampler_batch = to_u64(key, v);
  else if (key == "sampler_lr") c.sampler_lr = to_double(key, v);
  else if (key == "lr_final_fraction") c.lr_final_fraction = to_double(key, v);
  else if (key == "progressive") c.progressive = to_bool(key, v);
  else if (key == "control_sizes") c.control_sizes = to_sizes(key, v);
  else if (key == "simplified_only") c.simplified_only = to_bool(key, v);
  else if (key == "ratios") c.ratios = to_sizes(key, v);
  else if (key == "strategies") c.strategies = split_list(v);
  else if (key == "ablate_profiles") c.ablate_profiles = split_list(v);
  else if (key == "ablate_k") c.ablate_k = to_sizes(key, v);
  else if (key == "ablate_eta_ce") c.ablate_eta_ce = to_doubles(key, v);
  else if (key == "ablate_eta_entropy") c.ablate_eta_entropy = to_doubles(key, v);
  else if (key == "preset") c.preset = v;
  else if (key == "threads") c.threads = to_u64(key, v);
  else throw Error("config: unknown key '" + key + "'");
}

inline const std::vector<std::string>& known_strategies() {
  static const std::vector<std::string> s{"random", "fps", "samplenet", "samplenet-softly-projected",
                                          "samplenet-simplified"};
  return s;
}

inline void validate(const ExperimentConfig& c) {
  const auto n = c.n();
  if (n < 8) throw Error("config: points must be >= 8");
  if (c.ratios.empty()) throw Error("config: no ratios");
  for (auto r : c.ratios)
    if (r == 0 || n % r != 0)
      throw Error("config: ratio " + std::to_string(r) + " does not divide points=" + std::to_string(n));
  if (c.k < 1 || c.k > n) throw Error("config: k must be in [1, points]");
  for (auto k : c.ablate_k)
    if (k < 1 || k > n) throw Error("config: ablate_k values must be in [1, points]");
  if (!(c.t_init > 0.0) || !(c.profile.floor > 0.0)) throw Error("config: temperatures must be positive");
  if (!(c.sampler_lr > 0.0) || !(c.task_lr > 0.0)) throw Error("config: learning rates must be positive");
  if (c.sampler_batch == 0 || c.task_batch == 0) throw Error("config: batch sizes must be positive");
  const auto& w = c.weights;
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0 || w.delta < 0 || w.lambda < 0 || c.eta_ce < 0 || c.eta_entropy < 0)
    throw Error("config: loss weights must be non-negative");
  if (c.angle_range < 0.0 || c.angle_range > 180.0) throw Error("config: angle_range must be in [0, 180]");
  for (const auto& s : c.strategies) {
    bool ok = false;
    for (const auto& k : known_strategies()) ok = ok || k == s;
    if (!ok) throw Error("config: unknown strategy '" + s + "'");
  }
  for (const auto& p : c.ablate_profiles) parse_profile_kind(p);
  if (c.progressive && !c.control_sizes.empty()) validate_control_sizes(c.control_sizes, n);
  if (c.task == TaskKind::classifier && c.data.classes < 2) throw Error("config: need at least 2 classes");
}

/// Builds a config: task defaults first, then the entries in order.
inline ExperimentConfig resolve_config(const ConfigEntries& entries) {
  TaskKind task = TaskKind::classifier;
  for (const auto& [k, v] : entries)
    if (k == "task") task = parse_task_kind(v);
  auto c = default_config(task);
  for (const auto& [k, v] : entries) apply_entry(c, k, v);
  validate(c);
  return c;
}

/// Resolved configuration as `key = value` text; reading it back gives the
/// same configuration.
inline std::string to_text(const ExperimentConfig& c) {
  using detail::join;
  using detail::num;
  std::ostringstream os;
  auto kv = [&os](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  kv("task", to_string(c.task));
  kv("seed", std::to_string(c.seed));
  kv("task_seed", std::to_string(c.task_seed));
  kv("eval_seed", std::to_string(c.eval_seed));
  kv("classes", std::to_string(c.data.classes));
  kv("train_per_class", std::to_string(c.data.train_per_class));
  kv("test_per_class", std::to_string(c.data.test_per_class));
  kv("points", std::to_string(c.data.n));
  kv("jitter", num(c.data.jitter));
  kv("scale_min", num(c.data.scale_min));
  kv("scale_max", num(c.data.scale_max));
  kv("data_seed", std::to_string(c.data.seed));
  kv("shape", to_string(c.shape));
  kv("pool_size", std::to_string(c.pool_size));
  kv("angle_range", num(c.angle_range));
  kv("task_conv", join(c.task_conv));
  kv("task_fc", join(c.task_fc));
  kv("task_epochs", std::to_string(c.task_epochs));
  kv("task_batch", std::to_string(c.task_batch));
  kv("task_lr", num(c.task_lr));
  kv("sampler_conv", join(c.sampler_conv));
  kv("sampler_fc", join(c.sampler_fc));
  kv("k", std::to_string(c.k));
  kv("alpha", num(c.weights.alpha));
  kv("beta", num(c.weights.beta));
  kv("gamma", num(c.weights.gamma));
  kv("delta", num(c.weights.delta));
  kv("lambda", num(c.weights.lambda));
  kv("t_init", num(c.t_init));
  kv("t_floor", num(c.profile.floor));
  kv("profile", to_string(c.profile.kind));
  if (c.profile.decay_epochs) kv("decay_epochs", num(*c.profile.decay_epochs));
  kv("exp_rate", num(c.profile.exp_rate));
  kv("eta_ce", num(c.eta_ce));
  kv("eta_entropy", num(c.eta_entropy));
  kv("sampler_epochs", std::to_string(c.sampler_epochs));
  kv("sampler_batch", std::to_string(c.sampler_batch));
  kv("sampler_lr", num(c.sampler_lr));
  kv("lr_final_fraction", num(c.lr_final_fraction));
  kv("progressive", c.progressive ? "true" : "false");
  if (!c.control_sizes.empty()) kv("control_sizes", join(c.control_sizes));
  kv("simplified_only", c.simplified_only ? "true" : "false");
  kv("ratios", join(c.ratios));
  kv("strategies", join(c.strategies));
  if (!c.ablate_profiles.empty()) kv("ablate_profiles", join(c.ablate_profiles));
  if (!c.ablate_k.empty()) kv("ablate_k", join(c.ablate_k));
  if (!c.ablate_eta_ce.empty()) kv("ablate_eta_ce", join(c.ablate_eta_ce));
  if (!c.ablate_eta_entropy.empty()) kv("ablate_eta_entropy", join(c.ablate_eta_entropy));
  kv("preset", c.preset);
  return os.str();
}

/// FNV-1a over the resolved text; output location and thread count do not
/// change results and are left out.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dsample
