#pragma once

// Soft projection of free-space query points onto a point cloud, and the
// inference-time hard sampling that replaces it.
//
// Each query q is replaced by r = sum_i w_i p_i over its k nearest input
// points, with w = softmax(-d_i^2 / t^2). Neighbor selection is recomputed on
// detached coordinates every call; gradients flow through the distances and
// the weighted average into q and t.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsample/autodiff.hpp"
#include "dsample/geometry.hpp"

namespace dsample {

/// Neighborhood bookkeeping for one soft projection of m queries.
struct ProjectionState {
  std::size_t k = 0;
  std::vector<std::size_t> neighbor_indices;  // [m * k], ascending (distance, index) per query
  std::vector<double> distances;              // [m * k], Euclidean
  ad::Tensor weights;                         // [m, k]
  ad::Tensor temperature;

  std::size_t queries() const { return k == 0 ? 0 : neighbor_indices.size() / k; }
  std::size_t nearest(std::size_t q) const { return neighbor_indices[q * k]; }
};

struct SoftProjection {
  ad::Tensor points;  // R, [m, 3]
  ProjectionState state;
};

struct HardSample {
  PointCloud points;
  std::vector<std::size_t> indices;
};

/// Softmax weights of -d^2 / t^2 for `distances` laid out as rows of k.
inline std::vector<double> projection_weights(std::span<const double> distances, std::size_t k, double t) {
  if (!(t > 0.0)) throw Error("projection_weights: temperature must be positive, got " + std::to_string(t));
  if (k == 0 || distances.size() % k != 0) throw Error("projection_weights: distances are not rows of k");
  std::vector<double> sq(distances.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = distances[i] * distances[i];
  ad::NoGradGuard guard;
  const std::size_t rows = sq.size() / k;
  auto w = ad::softmax_neg_sq_dist(ad::Tensor::from_data({rows, k}, std::move(sq)), ad::Tensor::scalar(t));
  return {w.values().begin(), w.values().end()};
}

namespace detail {

/// r_q = sum_i W[q, i] * V[q * k + i] for W [m, k] and V [m * k, 3].
inline ad::Tensor weighted_neighbor_sum(const ad::Tensor& W, const ad::Tensor& V) {
  if (W.rank() != 2 || V.rank() != 2 || V.dim(1) != 3 || V.dim(0) != W.numel())
    throw_shape("weighted_neighbor_sum", W.shape(), V.shape());
  const std::size_t m = W.dim(0), k = W.dim(1);
  const auto w = W.values();
  const auto v = V.values();
  std::vector<double> out(m * 3, 0.0);
  for (std::size_t q = 0; q < m; ++q)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < 3; ++c) out[3 * q + c] += w[q * k + i] * v[3 * (q * k + i) + c];
  return ad::detail::make_op("weighted_neighbor_sum", {m, 3}, std::move(out), {W, V}, [m, k](ad::detail::Node& self) {
    const auto& w = ad::detail::in_value(self, 0);
    const auto& v = ad::detail::in_value(self, 1);
    double* gw = ad::detail::sink(self, 0);
    double* gv = ad::detail::sink(self, 1);
    for (std::size_t q = 0; q < m; ++q)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
          const double g = self.grad[3 * q + c];
          if (gw) gw[q * k + i] += g * v[3 * (q * k + i) + c];
          if (gv) gv[3 * (q * k + i) + c] += g * w[q * k + i];
        }
  });
}

}  // namespace detail

/// Temperature actually used in the weights: the parameter clipped at
/// `floor` from below. No gradient reaches t while it sits under the floor.
inline ad::Tensor effective_temperature(const ad::Tensor& t, double floor) { return ad::clamp_min(t, floor); }

inline SoftProjection soft_project(const PointCloud& P, const KdTree& index, const ad::Tensor& Q, std::size_t k,
                                   const ad::Tensor& t) {
  require_nonempty(P, "soft_project");
  if (Q.rank() != 2 || Q.dim(1) != 3 || Q.dim(0) == 0) throw_shape("soft_project", Q.shape());
  if (k < 1 || k > P.size())
    throw Error("soft_project: k=" + std::to_string(k) + " outside [1, " + std::to_string(P.size()) + "]");
  if (t.numel() != 1 || !(t.values()[0] > 0.0)) throw Error("soft_project: temperature must be a positive scalar");

  const std::size_t m = Q.dim(0);
  const auto qv = Q.values();
  ProjectionState st;
  st.k = k;
  st.neighbor_indices.reserve(m * k);
  st.distances.reserve(m * k);
  std::vector<double> nbr_xyz;
  nbr_xyz.reserve(m * k * 3);
  std::vector<std::size_t> repeat;
  repeat.reserve(m * k);
  for (std::size_t q = 0; q < m; ++q) {
    const Point3 qp{qv[3 * q], qv[3 * q + 1], qv[3 * q + 2]};
    for (const auto& nb : index.knn(qp, k)) {
      st.neighbor_indices.push_back(nb.index);
      st.distances.push_back(nb.distance);
      nbr_xyz.insert(nbr_xyz.end(), P[nb.index].begin(), P[nb.index].end());
      repeat.push_back(q);
    }
  }
  const auto neighbors = ad::Tensor::from_data({m * k, 3}, std::move(nbr_xyz));
  const auto offsets = ad::sub(ad::gather(Q, std::move(repeat)), neighbors);
  const auto sq = ad::reshape(ad::sum_axis(ad::square(offsets), 1), {m, k});
  st.weights = ad::softmax_neg_sq_dist(sq, t);
  st.temperature = t;
  auto R = detail::weighted_neighbor_sum(st.weights, neighbors);
  return {std::move(R), std::move(st)};
}

inline SoftProjection soft_project(const PointCloud& P, const ad::Tensor& Q, std::size_t k, const ad::Tensor& t) {
  const KdTree index(P);
  return soft_project(P, index, Q, k, t);
}

/// Penalty that drives the temperature toward zero: t^2.
inline ad::Tensor projection_loss(const ad::Tensor& t) { return ad::square(t); }

/// Inference-time sampling: each query takes its highest-weight neighbor
/// (ties to the lowest input index), duplicates are dropped keeping first
/// occurrence, and FPS seeded with the unique set fills up to m points.
inline HardSample hard_sample(const PointCloud& P, const ProjectionState& state, std::size_t m) {
  require_nonempty(P, "hard_sample");
  if (m < 1 || m > P.size())
    throw Error("hard_sample: m=" + std::to_string(m) + " outside [1, " + std::to_string(P.size()) + "]");
  const std::size_t k = state.k;
  const std::size_t queries = state.queries();
  if (k == 0 || state.weights.numel() != queries * k) throw Error("hard_sample: inconsistent projection state");
  const auto w = state.weights.values();
  std::vector<char> taken(P.size(), 0);
  std::vector<std::size_t> unique;
  for (std::size_t q = 0; q < queries; ++q) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i) {
      const double wi = w[q * k + i], wb = w[q * k + best];
      if (wi > wb || (wi == wb && state.neighbor_indices[q * k + i] < state.neighbor_indices[q * k + best])) best = i;
    }
    const std::size_t idx = state.neighbor_indices[q * k + best];
    if (idx >= P.size()) throw Error("hard_sample: neighbor index out of range");
    if (!taken[idx]) {
      taken[idx] = 1;
      unique.push_back(idx);
    }
  }
  HardSample out;
  out.indices = fps_complete(P, std::move(unique), m);
  out.points = P.subset(out.indices);
  return out;
}

// ---------------------------------------------------------------------------
// Temperature profiles

enum class ProfileKind { learned, constant, linear_rectified, exponential };

inline ProfileKind parse_profile_kind(const std::string& s) {
  if (s == "learned") return ProfileKind::learned;
  if (s == "constant") return ProfileKind::constant;
  if (s == "linear_rectified") return ProfileKind::linear_rectified;
  if (s == "exponential") return ProfileKind::exponential;
  throw Error("unknown temperature profile '" + s + "'");
}

inline std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::learned: return "learned";
    case ProfileKind::constant: return "constant";
    case ProfileKind::linear_rectified: return "linear_rectified";
    case ProfileKind::exponential: return "exponential";
  }
  return "?";
}

struct TemperatureProfile {
  ProfileKind kind = ProfileKind::learned;
  double initial_sq = 1.0;              // t0^2
  double floor = 0.01;                  // on t, so t^2 never drops below floor^2
  std::optional<double> decay_epochs;   // linear_rectified; defaults to 60% of training
  double exp_rate = 0.02;               // exponential, per epoch
};

/// Scheduled t^2 for `epoch`, or nullopt for the learned profile, where t is
/// a trainable parameter clipped at the floor.
inline std::optional<double> temperature_schedule(const TemperatureProfile& p, std::size_t epoch,
                                                  std::size_t total_epochs) {
  if (epoch >= total_epochs) throw Error("temperature_schedule: epoch out of range");
  const double floor_sq = p.floor * p.floor;
  const double e = static_cast<double>(epoch);
  switch (p.kind) {
    case ProfileKind::learned: return std::nullopt;
    case ProfileKind::constant: return 1.0;
    case ProfileKind::linear_rectified: {
      const double decay = p.decay_epochs.value_or(0.6 * static_cast<double>(total_epochs));
      return std::max(p.initial_sq * (1.0 - e / decay), floor_sq);
    }
    case ProfileKind::exponential: return std::max(p.initial_sq * std::exp(-p.exp_rate * e), floor_sq);
  }
  throw Error("temperature_schedule: invalid profile kind");
}

/// Exponential rate whose schedule reaches `target_sq` at the last epoch.
inline double exp_rate_for_terminal(double initial_sq, double target_sq, std::size_t total_epochs) {
  if (!(initial_sq > 0.0) || !(target_sq > 0.0)) throw Error("exp_rate_for_terminal: t^2 values must be positive");
  if (total_epochs < 2) throw Error("exp_rate_for_terminal: need at least two epochs");
  return std::log(initial_sq / target_sq) / static_cast<double>(total_epochs - 1);
}

// ---------------------------------------------------------------------------
// Ablation losses on the projection weights

inline constexpr double kWeightLogClamp = 1e-12;

/// Mean over queries of -log(w of the nearest neighbor); the argument is
/// clamped at 1e-12.
inline ad::Tensor weight_cross_entropy_loss(const ProjectionState& state) {
  const std::size_t m = state.queries();
  if (m == 0) throw Error("weight_cross_entropy_loss: empty state");
  std::vector<std::size_t> first(m);
  for (std::size_t q = 0; q < m; ++q) first[q] = q * state.k;
  const auto w1 = ad::take(state.weights, std::move(first));
  return ad::neg(ad::mean(ad::log(ad::clamp_min(w1, kWeightLogClamp))));
}

/// Mean over queries of -sum_i w_i log w_i, with 0 log 0 = 0.
inline ad::Tensor weight_entropy_loss(const ProjectionState& state) {
  const std::size_t m = state.queries();
  if (m == 0) throw Error("weight_entropy_loss: empty state");
  const auto& W = state.weights;
  const auto plogp = ad::mul(W, ad::log(ad::clamp_min(W, kWeightLogClamp)));
  return ad::scale(ad::sum(plogp), -1.0 / static_cast<double>(m));
}

}  // namespace dsample
