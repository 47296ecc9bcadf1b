#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dsample/autodiff.hpp"
#include "dsample/checkpoint.hpp"

namespace dsample::nn {

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline ad::Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = dist(rng);
  return ad::Tensor::from_data({fan_in, fan_out}, std::move(w), true);
}

/// y = x W + b. Works on a single vector [in] or on per-point rows [n, in];
/// the latter is a 1x1 convolution shared across points.
struct Linear {
  ad::Tensor weight;  // [in, out]
  ad::Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(glorot_uniform(in, out, rng)), bias(ad::Tensor::zeros({out}, true)) {}

  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }

  ad::Tensor operator()(const ad::Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }
};

/// Per-feature scale and shift without running statistics; the stand-in
/// for batch normalization.
struct ChannelAffine {
  ad::Tensor scale;
  ad::Tensor shift;

  ChannelAffine() = default;
  explicit ChannelAffine(std::size_t c) : scale(ad::Tensor::full({c}, 1.0, true)), shift(ad::Tensor::zeros({c}, true)) {}

  ad::Tensor operator()(const ad::Tensor& x) const {
    if (x.rank() == 2) return ad::affine_channels(x, scale, shift);
    return ad::add(ad::mul(x, scale), shift);
  }
};

/// Linear, then optional affine normalization, then optional ReLU.
struct Block {
  Linear linear;
  ChannelAffine norm;
  bool normalize = true;
  bool activate = true;

  Block() = default;
  Block(std::size_t in, std::size_t out, bool normalize_, bool activate_, std::mt19937_64& rng)
      : linear(in, out, rng), normalize(normalize_), activate(activate_) {
    if (normalize) norm = ChannelAffine(out);
  }

  ad::Tensor operator()(const ad::Tensor& x) const {
    auto y = linear(x);
    if (normalize) y = norm(y);
    if (activate) y = ad::relu(y);
    return y;
  }

  void collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".weight", linear.weight);
    out.emplace_back(prefix + ".bias", linear.bias);
    if (normalize) {
      out.emplace_back(prefix + ".scale", norm.scale);
      out.emplace_back(prefix + ".shift", norm.shift);
    }
  }
};

/// Stack of blocks with the given output widths. Every block normalizes and
/// activates except, optionally, the last.
class Stack {
 public:
  Stack() = default;
  Stack(std::size_t in, const std::vector<std::size_t>& widths, bool plain_last, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const bool last = i + 1 == widths.size();
      blocks_.emplace_back(in, widths[i], !(last && plain_last), !(last && plain_last), rng);
      in = widths[i];
    }
  }

  ad::Tensor operator()(ad::Tensor x) const {
    for (const auto& b : blocks_) x = b(x);
    return x;
  }

  void collect(const std::string& prefix, NamedTensors& out) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + "." + std::to_string(i), out);
  }

  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  std::vector<Block> blocks_;
};

inline std::vector<ad::Tensor> tensors_of(const NamedTensors& named) {
  std::vector<ad::Tensor> out;
  out.reserve(named.size());
  for (const auto& [_, t] : named) out.push_back(t);
  return out;
}

inline void set_trainable(const NamedTensors& named, bool on) {
  for (auto [_, t] : named) {
    t.set_requires_grad(on);
    t.zero_grad();
  }
}

inline void store_parameters(const NamedTensors& named, Checkpoint& ck) {
  for (const auto& [n, t] : named) ck.tensors.emplace_back(n, t.detach());
}

/// Copies checkpoint values into already-shaped parameters.
inline void load_parameters(const NamedTensors& named, const Checkpoint& ck) {
  for (auto [n, t] : named) {
    const auto& src = ck.tensor(n);
    if (src.shape() != t.shape())
      throw IoError("checkpoint: tensor '" + n + "' has shape " + shape_str(src.shape()) + ", expected " +
                    shape_str(t.shape()));
    std::copy(src.values().begin(), src.values().end(), t.mutable_values().begin());
  }
}

inline std::size_t parameter_count(const NamedTensors& named) {
  std::size_t n = 0;
  for (const auto& [_, t] : named) n += t.numel();
  return n;
}

}  // namespace dsample::nn
