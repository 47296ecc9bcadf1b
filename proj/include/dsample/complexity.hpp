#pragma once

// Multiply-accumulate and parameter accounting for PointNet-style networks.
// Per-point layers cost points * in * out MACs; dense layers in * out;
// point transforms (a learned k x k matrix applied to every point)
// points * k * k with no parameters of their own. The default MAC scope counts
// the per-point MLPs only, the part that scales with the number of points.

#include <cstddef>
#include <string>
#include <vector>

namespace dsample {

struct LayerSpec {
  enum class Kind { per_point, dense, point_transform };
  Kind kind = Kind::dense;
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;
  bool norm = false;  // two learnable values per output channel
};

struct Architecture {
  std::vector<LayerSpec> layers;
  std::size_t extra_params = 0;

  void per_point(std::size_t in, std::size_t out, bool norm = true) {
    layers.push_back({LayerSpec::Kind::per_point, in, out, true, norm});
  }
  void dense(std::size_t in, std::size_t out, bool norm = true) {
    layers.push_back({LayerSpec::Kind::dense, in, out, true, norm});
  }
  void point_transform(std::size_t k) { layers.push_back({LayerSpec::Kind::point_transform, k, k, false, false}); }
};

enum class MacScope { per_point_mlp, all_layers };

inline std::size_t mac_count(const Architecture& a, std::size_t points, MacScope scope = MacScope::per_point_mlp) {
  std::size_t total = 0;
  for (const auto& l : a.layers) {
    const std::size_t per = l.in * l.out;
    if (l.kind == LayerSpec::Kind::per_point) total += points * per;
    else if (scope == MacScope::all_layers) total += l.kind == LayerSpec::Kind::dense ? per : points * per;
  }
  return total;
}

inline std::size_t param_count(const Architecture& a) {
  std::size_t total = a.extra_params;
  for (const auto& l : a.layers) {
    if (l.kind == LayerSpec::Kind::point_transform) continue;
    total += l.in * l.out + (l.bias ? l.out : 0) + (l.norm ? 2 * l.out : 0);
  }
  return total;
}

/// Full PointNet classifier with input and feature transform nets.
inline Architecture pointnet_reference(std::size_t classes = 40) {
  Architecture a;
  auto tnet = [&a](std::size_t k) {
    a.per_point(k, 64);
    a.per_point(64, 128);
    a.per_point(128, 1024);
    a.dense(1024, 512);
    a.dense(512, 256);
    a.dense(256, k * k, false);
    a.point_transform(k);
  };
  tnet(3);
  a.per_point(3, 64);
  a.per_point(64, 64);
  tnet(64);
  a.per_point(64, 64);
  a.per_point(64, 128);
  a.per_point(128, 1024);
  a.dense(1024, 512);
  a.dense(512, 256);
  a.dense(256, classes, false);
  return a;
}

/// Sampler: per-point MLP, max pooling, FC head emitting m x 3 values, plus
/// the temperature scalar.
inline Architecture sampler_architecture(const std::vector<std::size_t>& conv, const std::vector<std::size_t>& fc,
                                         std::size_t m) {
  Architecture a;
  std::size_t in = 3;
  for (auto w : conv) {
    a.per_point(in, w);
    in = w;
  }
  for (auto w : fc) {
    a.dense(in, w);
    in = w;
  }
  a.dense(in, 3 * m, false);
  a.extra_params = 1;
  return a;
}

/// Sampler sized as in the reference classification setup.
inline Architecture sampler_reference(std::size_t m) {
  return sampler_architecture({64, 64, 64, 128, 128}, {256, 256, 256}, m);
}

struct ComplexityReport {
  std::size_t n = 0, m = 0;
  std::size_t sampler_macs = 0;      // sampler on n points
  std::size_t task_macs_sampled = 0; // task on m points
  std::size_t task_macs_full = 0;    // task on n points
  std::size_t sampler_params = 0;
  std::size_t task_params = 0;
  double cr_percent = 0.0;  // computation reduction
  double mi_percent = 0.0;  // memory increase (100 = no increase)
};

inline ComplexityReport mac_memory_report(const Architecture& sampler, const Architecture& task, std::size_t n,
                                          std::size_t m, MacScope scope = MacScope::per_point_mlp) {
  ComplexityReport r;
  r.n = n;
  r.m = m;
  r.sampler_macs = mac_count(sampler, n, scope);
  r.task_macs_sampled = mac_count(task, m, scope);
  r.task_macs_full = mac_count(task, n, scope);
  r.sampler_params = param_count(sampler);
  r.task_params = param_count(task);
  r.cr_percent = 100.0 * (1.0 - static_cast<double>(r.sampler_macs + r.task_macs_sampled) /
                                    static_cast<double>(r.task_macs_full));
  r.mi_percent = 100.0 * static_cast<double>(r.sampler_params + r.task_params) / static_cast<double>(r.task_params);
  return r;
}

}  // namespace dsample
