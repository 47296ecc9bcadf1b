#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dsample/complexity.hpp"
#include "dsample/losses.hpp"
#include "dsample/models.hpp"
#include "dsample/optim.hpp"
#include "dsample/rotation.hpp"
#include "oracles.hpp"

using namespace dsample;
using ad::Tensor;

namespace {

PointCloud permuted(const PointCloud& P, std::uint64_t seed) {
  std::vector<std::size_t> idx(P.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return P.subset(idx);
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], tol);
}

SamplerConfig tiny_sampler(std::size_t n, std::size_t m) {
  SamplerConfig c;
  c.n = n;
  c.m = m;
  c.conv = {4, 8};
  c.fc = {8};
  c.k = 3;
  return c;
}

}  // namespace

// -- sampler ------------------------------------------------------------------

TEST(Sampler, ShapeAndFinite) {
  SamplerModel s(SamplerConfig{});
  std::mt19937_64 rng(1);
  const auto Q = s.forward(oracle::random_cloud(256, rng).to_tensor());
  ASSERT_EQ(Q.shape(), (Shape{32, 3}));
  for (double v : Q.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Sampler, PermutationInvariant) {
  SamplerModel s(SamplerConfig{});
  std::mt19937_64 rng(2);
  const auto P = oracle::random_cloud(256, rng);
  expect_close(s.forward(P.to_tensor()), s.forward(permuted(P, 3).to_tensor()), 1e-9);
}

TEST(Sampler, SizeMismatchThrows) {
  SamplerModel s(SamplerConfig{});
  std::mt19937_64 rng(3);
  EXPECT_THROW(s.forward(oracle::random_cloud(100, rng).to_tensor()), Error);
  SamplerConfig bad;
  bad.m = 300;
  EXPECT_THROW(SamplerModel{bad}, Error);
}

TEST(Sampler, LastLayerEmitsMTimesThree) {
  SamplerModel s(tiny_sampler(16, 5));
  const auto params = s.named_parameters();
  const auto it = std::find_if(params.begin(), params.end(), [](const auto& p) { return p.first == "head.weight"; });
  ASSERT_NE(it, params.end());
  EXPECT_EQ(it->second.dim(1), 15u);
}

TEST(Sampler, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    auto cfg = tiny_sampler(12, 4);
    cfg.seed = 10 + trial;
    SamplerModel s(cfg);
    const auto P = oracle::random_cloud(12, rng).to_tensor();
    const auto M = oracle::random_tensor({4, 3}, rng, -1, 1, false);
    auto params = nn::tensors_of(s.named_parameters(false));
    oracle::perturb(params, rng);
    const auto check = oracle::gradcheck([&] { return ad::sum(ad::mul(s.forward(P), M)); }, params);
    EXPECT_LT(check.max_rel_error, 1e-5);
  }
}

TEST(Sampler, CheckpointRoundTrip) {
  auto cfg = tiny_sampler(20, 6);
  cfg.t_floor = 0.1;
  SamplerModel s(cfg);
  s.set_temperature(0.37);
  std::stringstream ss;
  write_checkpoint(ss, s.to_checkpoint());
  const auto back = SamplerModel::from_checkpoint(read_checkpoint(ss));
  EXPECT_EQ(back.config().m, 6u);
  EXPECT_EQ(back.config().t_floor, 0.1);
  EXPECT_EQ(back.temperature().item(), 0.37);
  std::mt19937_64 rng(5);
  const auto P = oracle::random_cloud(20, rng).to_tensor();
  expect_close(back.forward(P), s.forward(P), 0.0);
}

TEST(Sampler, TemperatureClip) {
  SamplerModel s(tiny_sampler(10, 2));
  s.set_temperature(-3.0);
  s.clip_temperature();
  EXPECT_EQ(s.temperature().item(), s.config().t_floor);
}

// -- task networks ------------------------------------------------------------

TEST(Classifier, PermutationInvariantAndAnySize) {
  TaskModel c(default_task_config(TaskKind::classifier));
  std::mt19937_64 rng(6);
  const auto P = oracle::random_cloud(64, rng);
  const auto a = c.classify(P.to_tensor());
  EXPECT_EQ(a.shape(), (Shape{8}));
  expect_close(a, c.classify(permuted(P, 1).to_tensor()), 1e-9);
  EXPECT_EQ(c.classify(oracle::random_cloud(5, rng).to_tensor()).shape(), (Shape{8}));
}

TEST(Classifier, DegenerateCloudGivesFiniteLogits) {
  TaskModel c(default_task_config(TaskKind::classifier));
  const PointCloud P(std::vector<Point3>(16, Point3{0.3, 0.3, 0.3}));
  for (double v : c.classify(P.to_tensor()).values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Classifier, WrongKindThrows) {
  TaskModel c(default_task_config(TaskKind::classifier));
  EXPECT_THROW(c.reconstruct(Tensor::zeros({4, 3})), Error);
}

TEST(Autoencoder, OutputShapeFixed) {
  auto cfg = default_task_config(TaskKind::autoencoder);
  cfg.n_out = 40;
  TaskModel ae(cfg);
  std::mt19937_64 rng(7);
  EXPECT_EQ(ae.reconstruct(oracle::random_cloud(40, rng).to_tensor()).shape(), (Shape{40, 3}));
  EXPECT_EQ(ae.reconstruct(oracle::random_cloud(10, rng).to_tensor()).shape(), (Shape{40, 3}));
  EXPECT_THROW(ae.reconstruct(Tensor::zeros({10, 2})), Error);
}

TEST(Autoencoder, TrainingReducesChamferTenfold) {
  // tiny overfit run: one cloud, a few hundred Adam steps
  auto cfg = default_task_config(TaskKind::autoencoder);
  cfg.n_out = 32;
  TaskModel ae(cfg);
  std::mt19937_64 rng(8);
  const auto P = oracle::random_cloud(32, rng).to_tensor();
  const double before = chamfer(ae.reconstruct(P), P).item();
  ad::Adam opt(nn::tensors_of(ae.named_parameters()), {0.005});
  for (int i = 0; i < 300; ++i) {
    opt.zero_grad();
    chamfer(ae.reconstruct(P), P).backward();
    opt.step();
  }
  EXPECT_LT(chamfer(ae.reconstruct(P), P).item(), 0.1 * before);
}

TEST(Registration, UnitQuaternionOutput) {
  TaskModel r(default_task_config(TaskKind::registration));
  std::mt19937_64 rng(9);
  const auto S = oracle::random_cloud(32, rng), T = oracle::random_cloud(32, rng);
  const auto q = r.register_pair(S.to_tensor(), T.to_tensor());
  EXPECT_NEAR(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3], 1.0, 1e-12);
  const auto rot = registration_forward(r, S.to_tensor(), T.to_tensor());
  const auto& qq = rot.quaternion();
  EXPECT_NEAR(dot(qq, qq), 1.0, 1e-9);
  expect_close(q, r.register_pair(permuted(S, 2).to_tensor(), permuted(T, 3).to_tensor()), 1e-9);
  EXPECT_THROW(r.register_pair(S.to_tensor(), oracle::random_cloud(5, rng).to_tensor()), Error);
}

TEST(TaskModel, FrozenParametersUntouchedButInputGradientsFlow) {
  TaskModel c(default_task_config(TaskKind::classifier));
  c.freeze();
  const auto before = c.to_checkpoint();
  std::mt19937_64 rng(10);
  auto X = oracle::random_tensor({16, 3}, rng);
  ad::cross_entropy(c.classify(X), 3).backward();
  ASSERT_TRUE(X.has_grad());
  double norm = 0.0;
  for (double g : X.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  for (const auto& [name, t] : c.named_parameters()) EXPECT_FALSE(t.has_grad()) << name;
  const auto after = c.to_checkpoint();
  for (std::size_t i = 0; i < before.tensors.size(); ++i) {
    const auto a = before.tensors[i].second.values(), b = after.tensors[i].second.values();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST(TaskModel, CheckpointRoundTrip) {
  TaskModel r(default_task_config(TaskKind::registration));
  std::stringstream ss;
  write_checkpoint(ss, r.to_checkpoint());
  const auto back = TaskModel::from_checkpoint(read_checkpoint(ss));
  EXPECT_EQ(back.kind(), TaskKind::registration);
  std::mt19937_64 rng(11);
  const auto S = oracle::random_cloud(20, rng).to_tensor(), T = oracle::random_cloud(20, rng).to_tensor();
  expect_close(back.register_pair(S, T), r.register_pair(S, T), 0.0);
}

TEST(Layers, GradientsMatchFiniteDifferences) {
  // every layer type through a classifier and a registration head
  for (int trial = 0; trial < 4; ++trial) {
    auto cfg = default_task_config(TaskKind::classifier);
    cfg.conv = {5, 6};
    cfg.fc = {4};
    cfg.classes = 3;
    cfg.seed = trial;
    TaskModel c(cfg);
    std::mt19937_64 rng(20 + trial);
    auto X = oracle::random_tensor({7, 3}, rng);
    auto params = nn::tensors_of(c.named_parameters());
    oracle::perturb(params, rng);
    params.push_back(X);
    EXPECT_LT(oracle::gradcheck([&] { return ad::cross_entropy(c.classify(X), trial % 3); }, params).max_rel_error,
              1e-5);
  }
}

// -- rotation -----------------------------------------------------------------

TEST(Rotation, MatrixIsOrthonormal) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 50; ++i) {
    const auto R = Rotation::from_euler_zyx(u(rng), u(rng), u(rng)).matrix();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += R[a][k] * R[b][k];
        EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-12);
      }
    const double det = R[0][0] * (R[1][1] * R[2][2] - R[1][2] * R[2][1]) -
                       R[0][1] * (R[1][0] * R[2][2] - R[1][2] * R[2][0]) +
                       R[0][2] * (R[1][0] * R[2][1] - R[1][1] * R[2][0]);
    EXPECT_NEAR(det, 1.0, 1e-6);
  }
}

TEST(Rotation, EulerZyxComposition) {
  // R = Rz(yaw) Ry(pitch) Rx(roll), composed from elementary matrices
  const double yaw = 0.3, pitch = -0.7, roll = 1.1;
  const auto R = Rotation::from_euler_zyx(yaw, pitch, roll).matrix();
  const Mat3 Rz{{{std::cos(yaw), -std::sin(yaw), 0}, {std::sin(yaw), std::cos(yaw), 0}, {0, 0, 1}}};
  const Mat3 Ry{{{std::cos(pitch), 0, std::sin(pitch)}, {0, 1, 0}, {-std::sin(pitch), 0, std::cos(pitch)}}};
  const Mat3 Rx{{{1, 0, 0}, {0, std::cos(roll), -std::sin(roll)}, {0, std::sin(roll), std::cos(roll)}}};
  auto mul = [](const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
  };
  const auto want = mul(mul(Rz, Ry), Rx);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(R[i][j], want[i][j], 1e-12);
}

TEST(Rotation, ZeroQuaternionThrows) { EXPECT_THROW(Rotation::from_quaternion({0, 0, 0, 0}), Error); }

TEST(RotationError, Examples) {
  const auto q = Rotation::from_euler_zyx(0.2, 0.1, -0.4);
  EXPECT_NEAR(rotation_error(q, q), 0.0, 1e-6);
  const auto& a = q.quaternion();
  EXPECT_NEAR(rotation_error(Rotation::from_quaternion({-a.w, -a.x, -a.y, -a.z}), q), 0.0, 1e-6);
  // <q1, q2> = cos 45 deg: identity against a 90 degree turn
  const auto turn = Rotation::from_euler_zyx(std::numbers::pi / 2, 0, 0);
  EXPECT_NEAR(dot(Rotation::identity().quaternion(), turn.quaternion()), std::cos(std::numbers::pi / 4), 1e-12);
  EXPECT_NEAR(rotation_error(Rotation::identity(), turn), 180.0, 1e-9);
}

TEST(RotationLoss, Examples) {
  const auto I = Rotation::identity();
  const auto z180 = Rotation::from_quaternion({0, 0, 0, 1});
  EXPECT_NEAR(rotation_matrix_loss(I.matrix_tensor(), z180).item(), 8.0, 1e-12);
  EXPECT_NEAR(rotation_matrix_loss(z180.matrix_tensor(), z180).item(), 0.0, 1e-12);
  std::mt19937_64 rng(13);
  const auto T = oracle::random_cloud(12, rng).to_tensor();
  EXPECT_NEAR(registration_loss(T, T, z180.matrix_tensor(), z180).item(), 0.0, 1e-12);
}

TEST(RotationLoss, QuaternionGradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(1300 + trial);
    auto q = oracle::random_tensor({4}, rng);
    const auto gt = Rotation::from_quaternion({0.3, -0.2, 0.8, 0.1});
    const auto S = oracle::random_tensor({10, 3}, rng, -1, 1, false);
    const auto T = oracle::random_tensor({10, 3}, rng, -1, 1, false);
    auto check = oracle::gradcheck(
        [&] { return registration_loss_from_quaternion(ad::normalize(q), S, T, gt); }, {q});
    EXPECT_LT(check.max_rel_error, 1e-5);
    auto only_matrix = oracle::gradcheck([&] { return rotation_matrix_loss(quat_to_matrix(q), gt); }, {q});
    EXPECT_LT(only_matrix.max_rel_error, 1e-5);
  }
}

// -- composite losses -------------------------------------------------------

TEST(Simplification, Examples) {
  std::mt19937_64 rng(14);
  const auto P = oracle::random_cloud(20, rng).to_tensor();
  EXPECT_EQ(simplification_loss(P, P, 2.0, 3.0, 0.5).item(), 0.0);
  const auto Q = PointCloud({{0, 0, 0}}).to_tensor();
  const auto P2 = PointCloud({{0, 0, 0}, {2, 0, 0}}).to_tensor();
  EXPECT_DOUBLE_EQ(simplification_loss(Q, P2, 1.0, 1.0, 0.0).item(), 2.0);
}

TEST(Simplification, DeltaIsLinearInSampleSize) {
  // Q of size m placed on a fixed P subset changes only through |Q| when
  // L_a(Q,P) = L_m(Q,P) = 0 and L_a(P,Q) is held fixed by duplicates.
  const auto P = PointCloud({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}).to_tensor();
  std::vector<double> values;
  for (std::size_t m = 1; m <= 4; ++m) {
    std::vector<Point3> q(m, Point3{0, 0, 0});
    values.push_back(simplification_loss(PointCloud(q).to_tensor(), P, 1.0, 1.0, 0.25).item());
  }
  const double base = (0 + 1 + 9) / 3.0;
  for (std::size_t m = 1; m <= 4; ++m) EXPECT_NEAR(values[m - 1], (1.0 + 0.25 * m) * base, 1e-12);
}

TEST(TotalLoss, Examples) {
  std::mt19937_64 rng(15);
  const auto P = oracle::random_cloud(10, rng).to_tensor();
  const auto Q = oracle::random_cloud(4, rng).to_tensor();
  const auto task = Tensor::scalar(0.8);
  SamplerLossWeights zero{0, 1, 1, 0, 0};
  EXPECT_EQ(sampler_total_loss(task, Q, P, zero, Tensor::scalar(0.5)).item(), 0.8);
  SamplerLossWeights w{30, 1, 1, 0, 1};
  EXPECT_EQ(sampler_total_loss(Tensor::scalar(0.0), P, P, w, Tensor::scalar(1.0)).item(), 1.0);
  // classification defaults against a hand computation from the plain losses
  const auto Pc = PointCloud::from_tensor(P), Qc = PointCloud::from_tensor(Q);
  const double simp = oracle::nn_avg(Qc, Pc) + oracle::nn_max(Qc, Pc) + oracle::nn_avg(Pc, Qc);
  const auto h = reference_hyperparameters(TaskKind::classifier);
  EXPECT_EQ(h.weights.alpha, 30.0);
  EXPECT_EQ(h.weights.lambda, 1.0);
  EXPECT_NEAR(sampler_total_loss(task, Q, P, h.weights, Tensor::scalar(0.3)).item(), 0.8 + 30.0 * simp + 0.09, 1e-12);
}

TEST(Progressive, SingleControlSizeEqualsPlainLoss) {
  auto cfg = tiny_sampler(16, 16);
  SamplerModel s(cfg);
  std::mt19937_64 rng(16);
  const auto P = oracle::random_cloud(16, rng);
  const KdTree tree(P);
  const auto Pt = P.to_tensor();
  const TaskObjective task = [](const Tensor& R) { return ad::mean(ad::square(R)); };
  const SamplerLossWeights w{0.5, 1, 1, 0.1, 0.2};
  const double prog = progressive_total_loss(s, P, tree, task, {16}, w).item();
  const auto Q = s.forward(Pt);
  const auto t = s.effective_temperature();
  const double plain = sampler_total_loss(task(soft_project(P, Q, cfg.k, t).points), Q, Pt, w, t).item();
  EXPECT_NEAR(prog, plain, 1e-12);
}

TEST(Progressive, SumOfIndependentTerms) {
  auto cfg = tiny_sampler(16, 16);
  SamplerModel s(cfg);
  std::mt19937_64 rng(17);
  const auto P = oracle::random_cloud(16, rng);
  const KdTree tree(P);
  const auto Pt = P.to_tensor();
  const TaskObjective task = [](const Tensor& R) { return ad::sum(ad::relu(R)); };
  const SamplerLossWeights w{0.5, 1, 1, 0.1, 0.2};
  const std::vector<std::size_t> cs{2, 4, 8, 16};
  const double prog = progressive_total_loss(s, P, tree, task, cs, w).item();
  const auto Q = s.forward(Pt);
  const double t = s.effective_temperature().item();
  double expected = w.lambda * t * t;
  for (auto c : cs) {
    // recompute each term from plain values
    std::vector<Point3> qc;
    for (std::size_t i = 0; i < c; ++i) qc.push_back({Q.at(i, 0), Q.at(i, 1), Q.at(i, 2)});
    const PointCloud Qc(qc);
    const auto ref = PointCloud::from_tensor(soft_project(P, Qc.to_tensor(), cfg.k, Tensor::scalar(t)).points);
    double task_value = 0;
    for (const auto& p : ref)
      for (double v : p) task_value += std::max(v, 0.0);
    const double simp = oracle::nn_avg(Qc, P) + w.beta * oracle::nn_max(Qc, P) +
                        (w.gamma + w.delta * static_cast<double>(c)) * oracle::nn_avg(P, Qc);
    expected += task_value + w.alpha * simp;
  }
  EXPECT_NEAR(prog, expected, 1e-10);
}

TEST(Progressive, NestedPrefixes) {
  SamplerModel s(tiny_sampler(16, 16));
  std::mt19937_64 rng(18);
  const auto Q = s.forward(oracle::random_cloud(16, rng).to_tensor());
  const auto a = ad::slice_rows(Q, 0, 4), b = ad::slice_rows(Q, 0, 8);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Progressive, ControlSizeErrors) {
  SamplerModel s(tiny_sampler(16, 16));
  std::mt19937_64 rng(19);
  const auto P = oracle::random_cloud(16, rng);
  const KdTree tree(P);
  const TaskObjective task = [](const Tensor& R) { return ad::sum(R); };
  EXPECT_THROW(progressive_total_loss(s, P, tree, task, {4, 32}, {}), Error);
  EXPECT_THROW(progressive_total_loss(s, P, tree, task, {8, 4}, {}), Error);
  EXPECT_EQ(default_control_sizes(256), (std::vector<std::size_t>{2, 4, 8, 16, 32, 64, 128, 256}));
}

// -- complexity ---------------------------------------------------------------

TEST(Complexity, ReferencePresetAtM32) {
  const auto r = mac_memory_report(sampler_reference(32), pointnet_reference(40), 1024, 32);
  EXPECT_NEAR(r.sampler_params / 1e6, 0.22, 0.01);
  EXPECT_NEAR(r.sampler_macs / 1e6, 34.0, 1.0);
  EXPECT_NEAR(r.task_macs_sampled / 1e6, 14.0, 0.5);
  EXPECT_NEAR(r.task_macs_full / 1e6, 440.0, 5.0);
  EXPECT_NEAR(r.task_params / 1e6, 3.5, 0.05);
  EXPECT_NEAR((r.sampler_macs + r.task_macs_sampled) / 1e6, 48.0, 1.0);
  EXPECT_NEAR((r.sampler_params + r.task_params) / 1e6, 3.72, 0.05);
  EXPECT_NEAR(r.cr_percent, 89.0, 2.0);
  EXPECT_NEAR(r.mi_percent, 106.0, 2.0);
}

TEST(Complexity, HandCountedTinyNetwork) {
  Architecture a;
  a.per_point(3, 4);
  a.point_transform(4);
  a.dense(4, 2);
  // per-point MLP only: 10 * 12; all layers add 10 * 16 + 8
  EXPECT_EQ(mac_count(a, 10), 120u);
  EXPECT_EQ(mac_count(a, 10, MacScope::all_layers), 120u + 160u + 8u);
  // 3*4 + 4 bias + 8 norm, then 4*2 + 2 bias + 4 norm
  EXPECT_EQ(param_count(a), 24u + 14u);
}

TEST(Complexity, IdentitySamplingCostsNothing) {
  Architecture none;
  const auto r = mac_memory_report(none, pointnet_reference(40), 1024, 1024);
  EXPECT_EQ(r.cr_percent, 0.0);
  EXPECT_EQ(r.mi_percent, 100.0);
}

TEST(Complexity, ReductionGrowsAsSampleShrinks) {
  double prev = -1e9;
  for (std::size_t m : {512, 256, 128, 64, 32, 16, 8}) {
    const auto r = mac_memory_report(sampler_reference(m), pointnet_reference(40), 1024, m);
    EXPECT_GT(r.cr_percent, prev);
    prev = r.cr_percent;
  }
}

TEST(Complexity, ModelArchitectureMatchesParameters) {
  SamplerModel s(SamplerConfig{});
  // sampler parameter count equals the accounting, temperature included
  EXPECT_EQ(param_count(s.architecture()), nn::parameter_count(s.named_parameters()));
  TaskModel c(default_task_config(TaskKind::classifier));
  EXPECT_EQ(param_count(c.architecture()), nn::parameter_count(c.named_parameters()));
}
