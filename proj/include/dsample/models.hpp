#pragma once

// Sampler and desk-scale task networks. All of them follow the same
// pattern: a per-point MLP, symmetric max pooling over points, then fully
// connected layers, so outputs are invariant to the order of input points.

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dsample/checkpoint.hpp"
#include "dsample/complexity.hpp"
#include "dsample/geometry.hpp"
#include "dsample/nn.hpp"
#include "dsample/projection.hpp"
#include "dsample/rotation.hpp"

namespace dsample {

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw Error("expected a comma-separated list of sizes, got '" + s + "'");
    }
  }
  return out;
}

inline void require_cloud_tensor(const ad::Tensor& X, const char* who) {
  if (X.rank() != 2 || X.dim(1) != 3 || X.dim(0) == 0) throw_shape(who, X.shape());
}

inline ad::Tensor pooled_features(const nn::Stack& conv, const ad::Tensor& X) {
  return ad::max_over_axis(conv(X), 0);
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct SamplerConfig {
  std::size_t n = 256;  // input points
  std::size_t m = 32;   // output points; n for a progressive sampler
  std::vector<std::size_t> conv{16, 32, 64};
  std::vector<std::size_t> fc{128};
  std::size_t k = 7;
  double t_init = 1.0;
  double t_floor = 0.01;
  std::uint64_t seed = 1;
};

/// Simplifies n input points to m free-space points Q; paired with soft
/// projection during training and hard sampling at inference.
class SamplerModel {
 public:
  explicit SamplerModel(SamplerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.m < 1 || cfg_.m > cfg_.n) throw Error("SamplerModel: need 1 <= m <= n");
    if (cfg_.k < 1 || cfg_.k > cfg_.n) throw Error("SamplerModel: need 1 <= k <= n");
    std::mt19937_64 rng(cfg_.seed);
    conv_ = nn::Stack(3, cfg_.conv, false, rng);
    fc_ = nn::Stack(cfg_.conv.back(), cfg_.fc, false, rng);
    head_ = nn::Linear(cfg_.fc.empty() ? cfg_.conv.back() : cfg_.fc.back(), 3 * cfg_.m, rng);
    temperature_ = ad::Tensor::scalar(cfg_.t_init, true);
  }

  const SamplerConfig& config() const { return cfg_; }

  /// Q = simplified points [m, 3] for an input cloud [n, 3].
  ad::Tensor forward(const ad::Tensor& P) const {
    detail::require_cloud_tensor(P, "sampler");
    if (P.dim(0) != cfg_.n)
      throw Error("sampler: expected " + std::to_string(cfg_.n) + " input points, got " + std::to_string(P.dim(0)));
    const auto g = detail::pooled_features(conv_, P);
    return ad::reshape(head_(fc_(g)), {cfg_.m, 3});
  }

  /// Raw temperature parameter (scalar).
  const ad::Tensor& temperature() const { return temperature_; }
  ad::Tensor effective_temperature() const { return dsample::effective_temperature(temperature_, cfg_.t_floor); }

  void set_temperature(double t) {
    temperature_.mutable_values()[0] = t;
  }

  /// Clips t at the floor after an optimizer update.
  void clip_temperature() {
    auto v = temperature_.mutable_values();
    if (v[0] < cfg_.t_floor) v[0] = cfg_.t_floor;
  }

  nn::NamedTensors named_parameters(bool with_temperature = true) const {
    nn::NamedTensors out;
    conv_.collect("conv", out);
    fc_.collect("fc", out);
    out.emplace_back("head.weight", head_.weight);
    out.emplace_back("head.bias", head_.bias);
    if (with_temperature) out.emplace_back("temperature", temperature_);
    return out;
  }

  Architecture architecture() const { return sampler_architecture(cfg_.conv, cfg_.fc, cfg_.m); }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.meta["kind"] = "sampler";
    ck.meta["n"] = std::to_string(cfg_.n);
    ck.meta["m"] = std::to_string(cfg_.m);
    ck.meta["conv"] = detail::join_sizes(cfg_.conv);
    ck.meta["fc"] = detail::join_sizes(cfg_.fc);
    ck.meta["k"] = std::to_string(cfg_.k);
    std::ostringstream fl;
    fl.precision(17);
    fl << cfg_.t_floor;
    ck.meta["t_floor"] = fl.str();
    nn::store_parameters(named_parameters(), ck);
    return ck;
  }

  static SamplerModel from_checkpoint(const Checkpoint& ck) {
    if (ck.get("kind") != "sampler") throw IoError("checkpoint: not a sampler checkpoint");
    SamplerConfig c;
    c.n = std::stoul(ck.get("n"));
    c.m = std::stoul(ck.get("m"));
    c.conv = detail::parse_sizes(ck.get("conv"));
    c.fc = detail::parse_sizes(ck.get("fc"));
    c.k = std::stoul(ck.get("k"));
    c.t_floor = std::stod(ck.get("t_floor"));
    SamplerModel model(c);
    nn::load_parameters(model.named_parameters(), ck);
    return model;
  }

 private:
  SamplerConfig cfg_;
  nn::Stack conv_;
  nn::Stack fc_;
  nn::Linear head_;
  ad::Tensor temperature_;
};

inline ad::Tensor samplenet_forward(const SamplerModel& model, const ad::Tensor& P) { return model.forward(P); }

// ---------------------------------------------------------------------------

enum class TaskKind { classifier, autoencoder, registration };

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "classifier" || s == "classification") return TaskKind::classifier;
  if (s == "autoencoder" || s == "reconstruction") return TaskKind::autoencoder;
  if (s == "registration") return TaskKind::registration;
  throw Error("unknown task '" + s + "'");
}

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::classifier: return "classification";
    case TaskKind::autoencoder: return "reconstruction";
    case TaskKind::registration: return "registration";
  }
  return "?";
}

struct TaskConfig {
  TaskKind kind = TaskKind::classifier;
  std::vector<std::size_t> conv{32, 64, 128};
  std::vector<std::size_t> fc{64};
  std::size_t classes = 8;    // classifier
  std::size_t n_out = 256;    // autoencoder output points
  std::uint64_t seed = 7;
};

inline TaskConfig default_task_config(TaskKind kind) {
  TaskConfig c;
  c.kind = kind;
  if (kind == TaskKind::autoencoder) {
    c.conv = {32, 64, 64};  // latent 64
    c.fc = {128, 128};
  } else if (kind == TaskKind::registration) {
    c.conv = {32, 64, 128};
    c.fc = {128, 64};
  }
  return c;
}

/// Downstream network trained on complete clouds, then frozen while a
/// sampler learns in front of it.
class TaskModel {
 public:
  explicit TaskModel(TaskConfig cfg) : cfg_(std::move(cfg)) {
    std::mt19937_64 rng(cfg_.seed);
    conv_ = nn::Stack(3, cfg_.conv, false, rng);
    const std::size_t feat = cfg_.conv.back() * (cfg_.kind == TaskKind::registration ? 2 : 1);
    fc_ = nn::Stack(feat, cfg_.fc, false, rng);
    const std::size_t hidden = cfg_.fc.empty() ? feat : cfg_.fc.back();
    head_ = nn::Linear(hidden, output_width(), rng);
    if (cfg_.kind == TaskKind::registration) head_.bias.mutable_values()[0] = 1.0;  // start at identity
  }

  TaskKind kind() const { return cfg_.kind; }
  const TaskConfig& config() const { return cfg_; }

  /// Class logits [classes]. Any point count works; pooling absorbs it.
  ad::Tensor classify(const ad::Tensor& X) const {
    expect(TaskKind::classifier);
    detail::require_cloud_tensor(X, "classifier");
    return head_(fc_(detail::pooled_features(conv_, X)));
  }

  /// Reconstruction [n_out, 3] from a cloud of any size.
  ad::Tensor reconstruct(const ad::Tensor& X) const {
    expect(TaskKind::autoencoder);
    detail::require_cloud_tensor(X, "autoencoder");
    return ad::reshape(head_(fc_(detail::pooled_features(conv_, X))), {cfg_.n_out, 3});
  }

  /// Unit quaternion [4] rotating the template T onto the source S.
  ad::Tensor register_pair(const ad::Tensor& S, const ad::Tensor& T) const {
    expect(TaskKind::registration);
    detail::require_cloud_tensor(S, "registration");
    detail::require_cloud_tensor(T, "registration");
    if (S.dim(0) != T.dim(0)) throw_shape("registration", S.shape(), T.shape());
    const auto f = ad::concat({detail::pooled_features(conv_, S), detail::pooled_features(conv_, T)}, 0);
    return ad::normalize(head_(fc_(f)));
  }

  nn::NamedTensors named_parameters() const {
    nn::NamedTensors out;
    conv_.collect("conv", out);
    fc_.collect("fc", out);
    out.emplace_back("head.weight", head_.weight);
    out.emplace_back("head.bias", head_.bias);
    return out;
  }

  /// Frozen models record no weight gradients; gradients still reach inputs.
  void freeze() {
    nn::set_trainable(named_parameters(), false);
    frozen_ = true;
  }
  void unfreeze() {
    nn::set_trainable(named_parameters(), true);
    frozen_ = false;
  }
  bool frozen() const { return frozen_; }

  Architecture architecture() const {
    Architecture a;
    std::size_t in = 3;
    for (auto w : cfg_.conv) {
      a.per_point(in, w);
      in = w;
    }
    if (cfg_.kind == TaskKind::registration) in *= 2;
    for (auto w : cfg_.fc) {
      a.dense(in, w);
      in = w;
    }
    a.dense(in, output_width(), false);
    return a;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.meta["kind"] = "task";
    ck.meta["task"] = to_string(cfg_.kind);
    ck.meta["conv"] = detail::join_sizes(cfg_.conv);
    ck.meta["fc"] = detail::join_sizes(cfg_.fc);
    ck.meta["classes"] = std::to_string(cfg_.classes);
    ck.meta["n_out"] = std::to_string(cfg_.n_out);
    nn::store_parameters(named_parameters(), ck);
    return ck;
  }

  static TaskModel from_checkpoint(const Checkpoint& ck) {
    if (ck.get("kind") != "task") throw IoError("checkpoint: not a task checkpoint");
    TaskConfig c;
    c.kind = parse_task_kind(ck.get("task"));
    c.conv = detail::parse_sizes(ck.get("conv"));
    c.fc = detail::parse_sizes(ck.get("fc"));
    c.classes = std::stoul(ck.get("classes"));
    c.n_out = std::stoul(ck.get("n_out"));
    TaskModel model(c);
    nn::load_parameters(model.named_parameters(), ck);
    return model;
  }

 private:
  std::size_t output_width() const {
    switch (cfg_.kind) {
      case TaskKind::classifier: return cfg_.classes;
      case TaskKind::autoencoder: return 3 * cfg_.n_out;
      case TaskKind::registration: return 4;
    }
    return 0;
  }

  void expect(TaskKind k) const {
    if (cfg_.kind != k) throw Error("task model is a " + to_string(cfg_.kind) + " network, not " + to_string(k));
  }

  TaskConfig cfg_;
  nn::Stack conv_;
  nn::Stack fc_;
  nn::Linear head_;
  bool frozen_ = false;
};

inline ad::Tensor classifier_forward(const TaskModel& m, const ad::Tensor& X) { return m.classify(X); }
inline ad::Tensor autoencoder_forward(const TaskModel& m, const ad::Tensor& X) { return m.reconstruct(X); }
inline Rotation registration_forward(const TaskModel& m, const ad::Tensor& S, const ad::Tensor& T) {
  ad::NoGradGuard guard;
  const auto q = m.register_pair(S, T);
  return Rotation::from_quaternion({q[0], q[1], q[2], q[3]});
}

}  // namespace dsample
