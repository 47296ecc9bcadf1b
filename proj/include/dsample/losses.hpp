#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsample/autodiff.hpp"
#include "dsample/geometry.hpp"
#include "dsample/models.hpp"
#include "dsample/projection.hpp"
#include "dsample/rotation.hpp"

namespace dsample {

struct SamplerLossWeights {
  double alpha = 30.0;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 0.0;
  double lambda = 1.0;
};

struct TaskHyperparameters {
  std::size_t k;
  SamplerLossWeights weights;
  std::size_t batch_size;
  double learning_rate;
  std::size_t epochs;
  double t_floor;
};

/// Reference hyperparameters per task.
inline TaskHyperparameters reference_hyperparameters(TaskKind kind) {
  switch (kind) {
    case TaskKind::classifier: return {7, {30.0, 1.0, 1.0, 0.0, 1.0}, 32, 0.01, 500, 0.01};
    case TaskKind::registration: return {8, {0.01, 1.0, 1.0, 0.0, 0.01}, 32, 0.001, 400, 0.1};
    case TaskKind::autoencoder: return {16, {0.01, 1.0, 0.0, 1.0 / 64.0, 0.0001}, 50, 0.0005, 400, 0.01};
  }
  throw Error("reference_hyperparameters: invalid task");
}

/// L_a(Q,P) + beta L_m(Q,P) + (gamma + delta |Q|) L_a(P,Q).
inline ad::Tensor simplification_loss(const ad::Tensor& Q, const ad::Tensor& P, double beta, double gamma,
                                      double delta) {
  const double coverage = gamma + delta * static_cast<double>(Q.dim(0));
  auto loss = ad::add(nn_loss_avg(Q, P), ad::scale(nn_loss_max(Q, P), beta));
  return ad::add(loss, ad::scale(nn_loss_avg(P, Q), coverage));
}

inline ad::Tensor simplification_loss(const ad::Tensor& Q, const ad::Tensor& P, const SamplerLossWeights& w) {
  return simplification_loss(Q, P, w.beta, w.gamma, w.delta);
}

/// L_task(R) + alpha L_simplify(Q, P) + lambda t^2.
inline ad::Tensor sampler_total_loss(const ad::Tensor& task_loss, const ad::Tensor& Q, const ad::Tensor& P,
                                     const SamplerLossWeights& w, const ad::Tensor& t) {
  auto loss = ad::add(task_loss, ad::scale(simplification_loss(Q, P, w), w.alpha));
  return ad::add(loss, ad::scale(projection_loss(t), w.lambda));
}

/// Task loss of a (soft-projected or sampled) point set given as a tensor.
using TaskObjective = std::function<ad::Tensor(const ad::Tensor&)>;

/// Control sizes 2^l from 2 up to n, plus n itself if it is not a power of two.
inline std::vector<std::size_t> default_control_sizes(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t c = 2; c <= n; c *= 2) out.push_back(c);
  if (out.empty() || out.back() != n) out.push_back(n);
  return out;
}

inline void validate_control_sizes(const std::vector<std::size_t>& cs, std::size_t n) {
  if (cs.empty()) throw Error("control sizes: empty");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (cs[i] < 1 || cs[i] > n)
      throw Error("control size " + std::to_string(cs[i]) + " outside [1, " + std::to_string(n) + "]");
    if (i > 0 && cs[i] <= cs[i - 1]) throw Error("control sizes must be strictly increasing");
  }
}

/// sum over c of [L_task(R_c) + alpha L_simplify(Q_c, P)] + lambda t^2, where
/// Q_c is the first c points of one forward pass.
inline ad::Tensor progressive_total_loss(const SamplerModel& model, const PointCloud& P, const KdTree& index,
                                         const TaskObjective& task, const std::vector<std::size_t>& control_sizes,
                                         const SamplerLossWeights& w) {
  const auto Pt = P.to_tensor();
  const auto Q = model.forward(Pt);
  validate_control_sizes(control_sizes, Q.dim(0));
  const auto t = model.effective_temperature();
  ad::Tensor total = ad::scale(projection_loss(t), w.lambda);
  for (auto c : control_sizes) {
    const auto Qc = ad::slice_rows(Q, 0, c);
    const auto R = soft_project(P, index, Qc, model.config().k, t).points;
    total = ad::add(total, ad::add(task(R), ad::scale(simplification_loss(Qc, Pt, w), w.alpha)));
  }
  return total;
}

/// ||R_pred^T R_gt - I||_F^2.
inline ad::Tensor rotation_matrix_loss(const ad::Tensor& R_pred, const Rotation& gt) {
  if (R_pred.rank() != 2 || R_pred.dim(0) != 3 || R_pred.dim(1) != 3) throw_shape("rotation_matrix_loss", R_pred.shape());
  const auto diff = ad::sub(ad::matmul(ad::transpose(R_pred), gt.matrix_tensor()), identity3());
  return ad::sum(ad::square(diff));
}

/// chamfer(S_registered, T) + ||R_pred^T R_gt - I||_F^2.
inline ad::Tensor registration_loss(const ad::Tensor& S_registered, const ad::Tensor& T, const ad::Tensor& R_pred,
                                    const Rotation& gt) {
  return ad::add(chamfer(S_registered, T), rotation_matrix_loss(R_pred, gt));
}

/// Registration loss from a predicted quaternion [4]: the source is brought
/// back onto the template with R_pred^{-1}, i.e. rows S R_pred.
inline ad::Tensor registration_loss_from_quaternion(const ad::Tensor& q_pred, const ad::Tensor& S,
                                                    const ad::Tensor& T, const Rotation& gt) {
  const auto R = quat_to_matrix(q_pred);
  return registration_loss(ad::matmul(S, R), T, R, gt);
}

}  // namespace dsample
