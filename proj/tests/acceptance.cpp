// Acceptance checks A1-A10. Usage: acceptance [A1 A2 ...]; no arguments runs
// all of them. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "dsample/experiment.hpp"
#include "oracles.hpp"

using namespace dsample;
using ad::Tensor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// A1

Outcome a1_gradients() {
  const auto t0 = Clock::now();
  constexpr int kInstances = 20;
  std::map<std::string, double> worst;
  std::map<std::string, int> count;
  auto record = [&](const std::string& name, const oracle::GradCheck& g) {
    worst[name] = std::max(worst[name], g.max_rel_error);
    ++count[name];
  };

  for (int i = 0; i < kInstances; ++i) {
    std::mt19937_64 rng(10'000 + i);
    const std::size_t nx = 5 + i % 7, ny = 6 + (3 * i) % 11;
    auto X = oracle::random_tensor({nx, 3}, rng);
    auto Y = oracle::random_tensor({ny, 3}, rng);
    record("nn_loss_avg", oracle::gradcheck([&] { return nn_loss_avg(X, Y); }, {X, Y}));
    record("nn_loss_max", oracle::gradcheck([&] { return nn_loss_max(X, Y); }, {X, Y}));
    record("chamfer", oracle::gradcheck([&] { return chamfer(X, Y); }, {X, Y}));
    record("sampling_consistency", oracle::gradcheck([&] { return sampling_consistency(X, Y); }, {X, Y}));
    record("simplification_loss",
           oracle::gradcheck([&] { return simplification_loss(X, Y, 1.0, 1.0, 1.0 / 64.0); }, {X, Y}));

    const auto P = oracle::random_cloud(24, rng);
    auto Q = oracle::random_tensor({6, 3}, rng);
    auto t = Tensor::scalar(0.2 + 0.05 * i, true);
    const auto M = oracle::random_tensor({6, 3}, rng, -1, 1, false);
    record("soft_project", oracle::gradcheck([&] { return ad::sum(ad::mul(soft_project(P, Q, 7, t).points, M)); }, {Q, t}));
    record("weight_cross_entropy",
           oracle::gradcheck([&] { return weight_cross_entropy_loss(soft_project(P, Q, 7, t).state); }, {Q, t}));
    record("weight_entropy", oracle::gradcheck([&] { return weight_entropy_loss(soft_project(P, Q, 7, t).state); }, {Q, t}));
    record("projection_loss", oracle::gradcheck([&] { return projection_loss(t); }, {t}));

    auto q = oracle::random_tensor({4}, rng);
    const auto gt = Rotation::from_euler_zyx(0.1 * i, -0.3, 0.7);
    const auto S = oracle::random_tensor({9, 3}, rng, -1, 1, false);
    const auto T = oracle::random_tensor({9, 3}, rng, -1, 1, false);
    record("rotation_matrix_loss", oracle::gradcheck([&] { return rotation_matrix_loss(quat_to_matrix(ad::normalize(q)), gt); }, {q}));
    record("registration_loss",
           oracle::gradcheck([&] { return registration_loss_from_quaternion(ad::normalize(q), S, T, gt); }, {q}));

    // network layers: per-point MLP, affine normalization, ReLU, max pooling, dense heads
    auto tc = default_task_config(TaskKind::classifier);
    tc.conv = {5, 6};
    tc.fc = {4};
    tc.classes = 3;
    tc.seed = static_cast<std::uint64_t>(i);
    TaskModel cls(tc);
    auto Xc = oracle::random_tensor({7, 3}, rng);
    auto cp = nn::tensors_of(cls.named_parameters());
    oracle::perturb(cp, rng);
    cp.push_back(Xc);
    record("classifier", oracle::gradcheck([&] { return ad::cross_entropy(cls.classify(Xc), i % 3); }, cp));

    auto ta = default_task_config(TaskKind::autoencoder);
    ta.conv = {4, 5};
    ta.fc = {6};
    ta.n_out = 5;
    ta.seed = static_cast<std::uint64_t>(i);
    TaskModel ae(ta);
    auto Xa = oracle::random_tensor({6, 3}, rng);
    auto ap = nn::tensors_of(ae.named_parameters());
    oracle::perturb(ap, rng);
    ap.push_back(Xa);
    record("autoencoder", oracle::gradcheck([&] { return chamfer(ae.reconstruct(Xa), Xa); }, ap));

    auto tr = default_task_config(TaskKind::registration);
    tr.conv = {4, 5};
    tr.fc = {6};
    tr.seed = static_cast<std::uint64_t>(i);
    TaskModel reg(tr);
    auto Sr = oracle::random_tensor({6, 3}, rng);
    const auto Tr = oracle::random_tensor({6, 3}, rng, -1, 1, false);
    auto rp = nn::tensors_of(reg.named_parameters());
    oracle::perturb(rp, rng);
    rp.push_back(Sr);
    record("registration_net",
           oracle::gradcheck([&] { return registration_loss_from_quaternion(reg.register_pair(Sr, Tr), Sr, Tr, gt); }, rp));

    SamplerConfig sc;
    sc.n = 10;
    sc.m = 4;
    sc.conv = {4, 6};
    sc.fc = {8};
    sc.k = 3;
    sc.seed = static_cast<std::uint64_t>(i);
    SamplerModel sm(sc);
    auto Ps = oracle::random_tensor({10, 3}, rng);
    const auto Ms = oracle::random_tensor({4, 3}, rng, -1, 1, false);
    auto sp = nn::tensors_of(sm.named_parameters(false));
    oracle::perturb(sp, rng);
    sp.push_back(Ps);
    record("sampler", oracle::gradcheck([&] { return ad::sum(ad::mul(sm.forward(Ps), Ms)); }, sp));
  }

  double global = 0.0;
  std::string worst_name;
  bool enough = true;
  for (const auto& [name, e] : worst) {
    if (e >= global) {
      global = e;
      worst_name = name;
    }
    enough = enough && count[name] >= kInstances;
  }
  const double secs = seconds_since(t0);
  return {enough && global < 1e-5 && secs < 60.0,
          fmt("%zu operations x %d instances, max relative error %.2e (%s), %.1f s", worst.size(), kInstances, global,
              worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// A2

Outcome a2_oracles() {
  const auto t0 = Clock::now();
  std::size_t fps_bad = 0, knn_bad = 0, loss_bad = 0;
  for (int i = 0; i < 200; ++i) {
    std::mt19937_64 rng(20'000 + i);
    const std::size_t n = 2 + static_cast<std::size_t>(i) % 63;
    const auto P = oracle::random_cloud(n, rng);
    const std::size_t m = 1 + static_cast<std::size_t>(i * 7) % n;
    const std::size_t start = static_cast<std::size_t>(i) % n;
    fps_bad += fps(P, m, start) != oracle::fps(P, m, start);

    const KdTree tree(P);
    for (int j = 0; j < 5; ++j) {
      const auto q = oracle::random_cloud(1, rng, -1.2, 1.2)[0];
      const std::size_t k = 1 + static_cast<std::size_t>(j * 5 + i) % n;
      const auto got = tree.knn(q, k);
      const auto want = oracle::knn(P, q, k);
      for (std::size_t r = 0; r < k; ++r)
        knn_bad += got[r].index != want[r].first || got[r].distance != want[r].second;
    }

    const auto Y = oracle::random_cloud(3 + static_cast<std::size_t>(i) % 40, rng);
    loss_bad += nn_loss_avg(P, Y) != oracle::nn_avg(P, Y);
    loss_bad += nn_loss_max(P, Y) != oracle::nn_max(P, Y);
    loss_bad += chamfer(P, Y) != oracle::chamfer(P, Y);
  }
  const double secs = seconds_since(t0);
  return {fps_bad == 0 && knn_bad == 0 && loss_bad == 0 && secs < 30.0,
          fmt("200 clouds: fps mismatches %zu, knn mismatches %zu, loss mismatches %zu, %.1f s", fps_bad, knn_bad,
              loss_bad, secs)};
}

// ---------------------------------------------------------------------------
// A7

Outcome a7_limit() {
  std::size_t soft_bad = 0, hard_bad = 0, idem_bad = 0, compared = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::mt19937_64 rng(70'000 + i);
    const std::size_t n = 32 + static_cast<std::size_t>(i) % 33, m = 4 + static_cast<std::size_t>(i) % 13;
    const auto P = oracle::random_cloud(n, rng);
    const auto Q = oracle::random_tensor({m, 3}, rng, -1, 1, false);
    const auto sp = soft_project(P, Q, 7, Tensor::scalar(1e-3));
    const auto hs = hard_sample(P, sp.state, m);
    // each soft row against its nearest input point; the hard sample keeps
    // those points (first occurrence order) before any completion
    std::vector<std::size_t> unique;
    for (std::size_t q = 0; q < m; ++q) {
      const auto nn = oracle::knn(P, {Q.at(q, 0), Q.at(q, 1), Q.at(q, 2)}, 1)[0].first;
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(sp.points.at(q, c) - P[nn][c]));
      worst = std::max(worst, d);
      soft_bad += d > 1e-6;
      if (std::find(unique.begin(), unique.end(), nn) == unique.end()) unique.push_back(nn);
    }
    for (std::size_t r = 0; r < unique.size(); ++r) {
      ++compared;
      hard_bad += hs.indices[r] != unique[r];
    }
    const auto again = hard_sample(P, soft_project(P, hs.points.to_tensor(), 7, Tensor::scalar(1e-3)).state, m);
    idem_bad += again.indices != hs.indices;
  }
  return {soft_bad == 0 && hard_bad == 0 && idem_bad == 0,
          fmt("100 instances: soft-vs-nearest max deviation %.2e (%zu over 1e-6), hard mismatches %zu/%zu, "
              "non-idempotent %zu",
              worst, soft_bad, hard_bad, compared, idem_bad)};
}

// ---------------------------------------------------------------------------
// A9

Outcome a9_complexity() {
  const auto r = mac_memory_report(sampler_reference(32), pointnet_reference(40), 1024, 32);
  const bool ok = std::abs(r.cr_percent - 89.0) <= 2.0 && std::abs(r.mi_percent - 106.0) <= 2.0;
  return {ok, fmt("reference preset m=32: CR %.2f%%, MI %.2f%% (sampler %.1fM MACs %.3fM params, task %.1fM MACs %.2fM params)",
                  r.cr_percent, r.mi_percent, r.sampler_macs / 1e6, r.sampler_params / 1e6,
                  r.task_macs_sampled / 1e6, r.task_params / 1e6)};
}

// ---------------------------------------------------------------------------
// A10

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome a10_determinism() {
  const auto root = fs::temp_directory_path() / "dsample_acceptance_a10";
  fs::remove_all(root);
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / ("run" + std::to_string(run));
    const auto c = resolve_config({{"classes", "4"},
                                   {"train_per_class", "10"},
                                   {"test_per_class", "5"},
                                   {"points", "64"},
                                   {"task_conv", "16,32"},
                                   {"task_fc", "16"},
                                   {"task_epochs", "2"},
                                   {"sampler_conv", "8,16"},
                                   {"sampler_fc", "32"},
                                   {"sampler_epochs", "2"},
                                   {"sampler_batch", "8"},
                                   {"ratios", "4,8"},
                                   {"threads", "4"},
                                   {"out", dir.string()}});
    cmd_train_task(c);
    cmd_train_sampler(c, (dir / "task.ckpt").string());
    auto ce = c;
    ce.out = (dir / "eval").string();
    cmd_eval(ce, (dir / "task.ckpt").string(), dir.string());
    reports[run] = slurp(dir / "eval" / "report.csv");
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];

  std::mt19937_64 rng(10'101);
  const auto P = oracle::random_cloud(500, rng, -50, 50);
  std::size_t io_bad = 0;
  for (const char* name : {"cloud.xyz", "cloud.ply"}) {
    const auto path = (root / name).string();
    write_cloud(path, P);
    const auto back = read_cloud(path);
    if (back.size() != P.size()) {
      ++io_bad;
      continue;
    }
    for (std::size_t i = 0; i < P.size(); ++i)
      for (int k = 0; k < 3; ++k) io_bad += fmt("%.9g", P[i][k]) != fmt("%.9g", back[i][k]);
  }
  return {same && io_bad == 0,
          fmt("report.csv %s across reruns (%zu bytes); XYZ/PLY round trip mismatches at 9 digits: %zu",
              same ? "byte-identical" : "DIFFERS", reports[0].size(), io_bad)};
}

// ---------------------------------------------------------------------------
// Desk classification: A3-A6 share one classifier and the baseline samplers.

ConfigEntries desk_classification() {
  // configs/desk_classification.cfg holds the same values
  return {{"task", "classification"}, {"threads", "0"}};
}

struct RatioResult {
  std::map<std::string, double> accuracy;  // by strategy
  std::vector<SamplerEpoch> epochs;
};

struct ClassificationStudy {
  ExperimentConfig config;
  TaskData data;
  std::optional<TaskModel> task;
  double task_accuracy = 0.0;
  double task_seconds = 0.0;
  std::map<std::uint64_t, std::map<std::size_t, RatioResult>> baseline;  // seed -> ratio
  double baseline_seconds = 0.0;
};

ClassificationStudy& study() {
  static std::optional<ClassificationStudy> s;
  if (s) return *s;
  s.emplace();
  auto& st = *s;
  st.config = resolve_config(desk_classification());
  const auto t0 = Clock::now();
  st.data = make_task_data(st.config);
  auto tr = train_task(st.config, st.data);
  st.task = tr.model;
  st.task_accuracy = tr.test_metric;
  st.task_seconds = seconds_since(t0);
  std::printf("   classifier: test accuracy %.4f on complete clouds, %.0f s\n", st.task_accuracy, st.task_seconds);

  const auto t1 = Clock::now();
  const auto& c = st.config;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (auto r : c.ratios) {
      const std::size_t m = c.n() / r;
      auto trained = train_sampler(c, *st.task, st.data, m, baseline_variant(c), seed);
      auto& res = st.baseline[seed][r];
      res.epochs = trained.epochs;
      for (const auto& name : {"fps", "samplenet", "samplenet-softly-projected", "samplenet-simplified"}) {
        const auto fn = make_strategy(name, m, &trained.model);
        res.accuracy[name] = evaluate(*st.task, st.data.test, fn, c.eval_seed, c.threads).metric;
      }
      std::printf("   seed %llu ratio %2zu: fps %.4f samplenet %.4f soft %.4f simplified %.4f (t^2 %.4f)\n",
                  static_cast<unsigned long long>(seed), r, res.accuracy["fps"], res.accuracy["samplenet"],
                  res.accuracy["samplenet-softly-projected"], res.accuracy["samplenet-simplified"],
                  res.epochs.back().t2);
      std::fflush(stdout);
    }
  }
  st.baseline_seconds = seconds_since(t1);
  return st;
}

double median_accuracy(const ClassificationStudy& st, std::size_t ratio, const std::string& strategy) {
  std::vector<double> v;
  for (const auto& [seed, by_ratio] : st.baseline) v.push_back(by_ratio.at(ratio).accuracy.at(strategy));
  return median(v);
}

Outcome a3_trend() {
  auto& st = study();
  bool ok = st.task_accuracy >= 0.95;
  std::string detail = fmt("classifier %.4f;", st.task_accuracy);
  for (auto r : st.config.ratios) {
    const double sn = median_accuracy(st, r, "samplenet"), fp = median_accuracy(st, r, "fps");
    if (r >= 4) ok = ok && sn >= fp;
    if (r == 16) ok = ok && sn >= fp + 0.05;
    detail += fmt(" r%zu samplenet %.4f vs fps %.4f;", r, sn, fp);
  }
  const double secs = st.task_seconds + st.baseline_seconds;
  ok = ok && secs < 1800.0;
  detail += fmt(" median of 3 seeds, %.0f s", secs);
  return {ok, detail};
}

Outcome a4_soft_vs_hard() {
  auto& st = study();
  bool ok = true;
  double worst = 0.0;
  std::string detail;
  for (auto r : st.config.ratios) {
    if (r > 8) continue;
    for (const auto& [seed, by_ratio] : st.baseline) {
      const auto& a = by_ratio.at(r).accuracy;
      const double gap = std::abs(a.at("samplenet-softly-projected") - a.at("samplenet"));
      worst = std::max(worst, gap);
      ok = ok && gap <= 0.05;
    }
  }
  detail = fmt("max |soft - sampled| over ratios <= 8 and 3 seeds: %.4f", worst);
  return {ok, detail};
}

Outcome a5_annealing() {
  auto& st = study();
  const auto& c = st.config;
  bool ok = true;
  double worst_t2 = 0.0, min_gain = 1.0;
  for (const auto& [seed, by_ratio] : st.baseline)
    for (const auto& [r, res] : by_ratio) {
      const auto& first = res.epochs.front();
      const auto& last = res.epochs.back();
      worst_t2 = std::max(worst_t2, last.t2);
      min_gain = std::min(min_gain, last.rank_weights[0] - first.rank_weights[0]);
      ok = ok && last.t2 <= 0.5 * c.t_init * c.t_init && last.rank_weights[0] > first.rank_weights[0];
    }

  // cross-entropy ablation against the same seed's baseline at the largest ratio
  const std::size_t r = c.ratios.back();
  const std::size_t m = c.n() / r;
  auto v = baseline_variant(c);
  v.name = "eta_ce=0.1";
  v.eta_ce = 0.1;
  const auto trained = train_sampler(c, *st.task, st.data, m, v, 1);
  const double w1 = trained.epochs.back().rank_weights[0];
  const double acc =
      evaluate(*st.task, st.data.test, make_strategy("samplenet", m, &trained.model), c.eval_seed, c.threads).metric;
  const auto& base = st.baseline.at(1).at(r).accuracy;
  const double margin_ce = acc - base.at("fps"), margin_base = base.at("samplenet") - base.at("fps");
  const bool ce_ok = w1 >= 0.9 && margin_ce < margin_base;
  return {ok && ce_ok,
          fmt("final t^2 at most %.4f, first-neighbor weight gain at least %.3f; eta_ce=0.1 at r%zu: weight %.3f, "
              "margin over fps %.4f vs baseline %.4f",
              worst_t2, min_gain, r, w1, margin_ce, margin_base)};
}

Outcome a6_profiles() {
  auto& st = study();
  const auto& c = st.config;
  bool ok = true;
  std::string detail;
  for (auto r : c.ratios) {
    if (r < 8) continue;
    const std::size_t m = c.n() / r;
    const auto& base = st.baseline.at(1).at(r);
    const double learned = base.accuracy.at("samplenet");
    // exponential converges to half of the learned terminal t^2
    const double rate = exp_rate_for_terminal(c.t_init * c.t_init, 0.5 * base.epochs.back().t2, c.sampler_epochs);
    detail += fmt(" r%zu learned %.4f", r, learned);
    for (auto kind : {ProfileKind::constant, ProfileKind::linear_rectified, ProfileKind::exponential}) {
      auto v = baseline_variant(c);
      v.profile.kind = kind;
      v.profile.exp_rate = rate;
      v.name = to_string(kind);
      const auto trained = train_sampler(c, *st.task, st.data, m, v, 1);
      const double acc =
          evaluate(*st.task, st.data.test, make_strategy("samplenet", m, &trained.model), c.eval_seed, c.threads).metric;
      if (kind == ProfileKind::constant) ok = ok && acc < learned;
      else ok = ok && std::abs(acc - learned) <= 0.05;
      detail += fmt(" %s %.4f", v.name.c_str(), acc);
    }
    detail += ";";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// A8

Outcome a8_registration() {
  const auto t0 = Clock::now();
  const auto c = resolve_config({{"task", "registration"}, {"threads", "0"}});
  const auto data = make_task_data(c);
  const auto tr = train_task(c, data);
  std::printf("   registration network: MRE %.2f deg on complete clouds, %.0f s\n", tr.test_metric, seconds_since(t0));
  std::fflush(stdout);
  const std::size_t r = 16;
  const std::size_t m = c.n() / r;
  std::vector<double> sn_mre, sn_cons;
  const auto fps_res = evaluate(tr.model, data.test, make_strategy("fps", m, nullptr), c.eval_seed, c.threads);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto trained = train_sampler(c, tr.model, data, m, baseline_variant(c), seed);
    const auto res = evaluate(tr.model, data.test, make_strategy("samplenet", m, &trained.model), c.eval_seed, c.threads);
    sn_mre.push_back(res.metric);
    sn_cons.push_back(res.consistency);
    std::printf("   seed %llu ratio %zu: samplenet MRE %.2f consistency %.4f (fps MRE %.2f consistency %.4f)\n",
                static_cast<unsigned long long>(seed), r, res.metric, res.consistency, fps_res.metric,
                fps_res.consistency);
    std::fflush(stdout);
  }
  const double mre = median(sn_mre), cons = median(sn_cons);
  const double secs = seconds_since(t0);
  const bool ok = cons < fps_res.consistency && mre <= fps_res.metric && secs < 1800.0;
  return {ok, fmt("ratio %zu median of 3 seeds: consistency %.4f vs fps %.4f, MRE %.2f vs fps %.2f deg, %.0f s", r, cons,
                  fps_res.consistency, mre, fps_res.metric, secs)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"A1", a1_gradients}, {"A2", a2_oracles},   {"A3", a3_trend},        {"A4", a4_soft_vs_hard},
      {"A5", a5_annealing}, {"A6", a6_profiles},  {"A7", a7_limit},        {"A8", a8_registration},
      {"A9", a9_complexity}, {"A10", a10_determinism}};
  // --report-only: FAIL verdicts are printed but only errors set the exit code
  bool report_only = false;
  std::string log_path;
  std::set<std::string> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report-only") report_only = true;
    else if (a == "--log" && i + 1 < argc) log_path = argv[++i];
    else wanted.insert(a);
  }
  std::FILE* log = log_path.empty() ? nullptr : std::fopen(log_path.c_str(), "w");
  if (!log_path.empty() && !log) {
    std::fprintf(stderr, "cannot write '%s'\n", log_path.c_str());
    return 2;
  }
  for (const auto& w : wanted)
    if (std::none_of(all.begin(), all.end(), [&](const auto& a) { return a.first == w; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", w.c_str());
      return 2;
    }
  int failed = 0, errors = 0;
  for (const auto& [name, fn] : all) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      ++errors;
    }
    std::printf("%-3s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (log) {
      std::fprintf(log, "%-3s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
      std::fflush(log);
    }
    failed += !o.pass;
  }
  if (log) std::fclose(log);
  if (errors) return 1;
  return failed && !report_only ? 1 : 0;
}
