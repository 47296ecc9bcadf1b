#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dsample/autodiff.hpp"

namespace dsample::ad {

/// First and second moment estimates for a parameter list.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Every parameter must carry a gradient;
/// the state is sized lazily on the first call.
inline void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& opt) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw Error("adam_step: parameter " + std::to_string(i) + " has no gradient");
    if (state.m[i].size() != params[i].numel()) throw Error("adam_step: state shape mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto x = params[i].mutable_values();
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      x[j] -= opt.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt.eps);
    }
  }
}

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {}

  void step() { adam_step(params_, state_, opt_); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void set_lr(double lr) { opt_.lr = lr; }
  double lr() const { return opt_.lr; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opt_;
  AdamState state_;
};

}  // namespace dsample::ad
