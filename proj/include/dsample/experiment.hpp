#pragma once

// Training and evaluation protocol shared by the CLI and the acceptance run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dsample/complexity.hpp"
#include "dsample/config.hpp"
#include "dsample/data.hpp"
#include "dsample/losses.hpp"
#include "dsample/models.hpp"
#include "dsample/optim.hpp"
#include "dsample/projection.hpp"

#ifndef DSAMPLE_BUILD_ID
#define DSAMPLE_BUILD_ID "dev"
#endif

namespace dsample {

inline std::string build_id() { return DSAMPLE_BUILD_ID; }

// ---------------------------------------------------------------------------
// CSV output

struct Provenance {
  std::string build;
  std::string config;
  std::uint64_t seed = 0;

  static Provenance of(const ExperimentConfig& c) { return {build_id(), config_hash(c), c.seed}; }
};

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Appends rows as they come; every row starts with the provenance columns.
class CsvLog {
 public:
  CsvLog() = default;
  CsvLog(const std::string& path, const std::vector<std::string>& columns, Provenance prov, bool append = false)
      : prov_(std::move(prov)) {
    const bool fresh = !append || !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    os_ = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc);
    if (!*os_) throw IoError("cannot write '" + path + "'");
    if (fresh) {
      *os_ << "build_id,config_hash,seed";
      for (const auto& c : columns) *os_ << ',' << c;
      *os_ << '\n';
    }
  }

  bool open() const { return os_ != nullptr; }

  void row(const std::vector<std::string>& cells) {
    if (!os_) return;
    *os_ << prov_.build << ',' << prov_.config << ',' << prov_.seed;
    for (const auto& c : cells) *os_ << ',' << c;
    *os_ << '\n';
    os_->flush();
  }

 private:
  std::unique_ptr<std::ofstream> os_;
  Provenance prov_;
};

/// One experiment per output directory.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir) : path_(std::filesystem::path(dir) / ".lock") {
    std::filesystem::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw IoError("output directory '" + dir + "' is locked by another run (remove " + path_.string() + " if stale)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Task data

struct TaskItem {
  PointCloud cloud;       // classifier / autoencoder input, registration source
  std::size_t label = 0;  // classifier
  PointCloud templ;       // registration
  Rotation rotation;      // registration ground truth: cloud = rotation(templ)
};

struct TaskData {
  TaskKind kind = TaskKind::classifier;
  std::vector<TaskItem> train;
  std::vector<TaskItem> test;
};

inline TaskData make_task_data(const ExperimentConfig& c) {
  TaskData d;
  d.kind = c.task;
  if (c.task == TaskKind::classifier) {
    const auto ds = generate_dataset(c.data);
    for (const auto& s : ds.train) d.train.push_back({s.cloud, s.label, {}, {}});
    for (const auto& s : ds.test) d.test.push_back({s.cloud, s.label, {}, {}});
    return d;
  }
  const auto pool = generate_pool(c.data, c.shape, c.pool_size);
  auto item = [&](std::size_t i) {
    TaskItem it;
    if (c.task == TaskKind::registration) {
      auto pair = make_registration_pair(pool.clouds[i], c.angle_range, stream_seed(c.data.seed ^ 0x7e57ULL, i));
      it.cloud = std::move(pair.source);
      it.templ = std::move(pair.templ);
      it.rotation = pair.rotation;
    } else {
      it.cloud = pool.clouds[i];
    }
    return it;
  };
  for (auto i : pool.split.train) d.train.push_back(item(i));
  for (auto i : pool.split.test) d.test.push_back(item(i));
  return d;
}

inline TaskConfig task_config_of(const ExperimentConfig& c) {
  TaskConfig t = default_task_config(c.task);
  t.conv = c.task_conv;
  t.fc = c.task_fc;
  t.classes = c.data.classes;
  t.n_out = c.n();
  t.seed = c.task_seed;
  return t;
}

inline SamplerConfig sampler_config_of(const ExperimentConfig& c, std::size_t m, std::size_t k, std::uint64_t seed) {
  SamplerConfig s;
  s.n = c.n();
  s.m = m;
  s.conv = c.sampler_conv;
  s.fc = c.sampler_fc;
  s.k = k;
  s.t_init = c.t_init;
  s.t_floor = c.profile.floor;
  s.seed = seed;
  return s;
}

/// Task loss of one item given the (sampled) inputs. For registration `x`
/// is the source and `y` the template; the registered source is S R_pred.
inline ad::Tensor task_loss(const TaskModel& task, const TaskItem& item, const ad::Tensor& x,
                            const ad::Tensor* y = nullptr) {
  switch (task.kind()) {
    case TaskKind::classifier: return ad::cross_entropy(task.classify(x), item.label);
    case TaskKind::autoencoder: return chamfer(task.reconstruct(x), item.cloud.to_tensor());
    case TaskKind::registration: {
      if (!y) throw Error("task_loss: registration needs a template");
      return registration_loss_from_quaternion(task.register_pair(x, *y), x, *y, item.rotation);
    }
  }
  throw Error("task_loss: invalid task");
}

inline void check_finite(double v, const char* phase, std::size_t epoch, std::size_t item) {
  if (!std::isfinite(v))
    throw Error(std::string("training diverged: non-finite ") + phase + " loss at epoch " + std::to_string(epoch) +
                ", item " + std::to_string(item));
}

inline double cosine_lr(double lr, double final_fraction, std::size_t epoch, std::size_t epochs) {
  const double f = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
  return lr * (final_fraction + (1.0 - final_fraction) * f);
}

// ---------------------------------------------------------------------------
// Parallel evaluation

inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Task metrics

struct EvalResult {
  double metric = 0.0;  // accuracy | NRE | MRE (degrees)
  double consistency = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

inline std::string metric_name(TaskKind k) {
  switch (k) {
    case TaskKind::classifier: return "accuracy";
    case TaskKind::autoencoder: return "nre";
    case TaskKind::registration: return "mre_deg";
  }
  return "?";
}

/// Selects the inputs handed to the task for one cloud. `stream` is a per-
/// cloud seed for stochastic strategies.
using SampleFn = std::function<ad::Tensor(const PointCloud&, std::uint64_t stream)>;

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Per-item raw error: classifier 1 if correct, autoencoder chamfer to the
/// complete cloud, registration rotation error; plus consistency.
inline std::pair<double, double> item_score(const TaskModel& task, const TaskItem& it, const SampleFn& sample,
                                            std::uint64_t stream) {
  ad::NoGradGuard guard;
  switch (task.kind()) {
    case TaskKind::classifier: {
      const auto x = sample(it.cloud, stream);
      return {argmax(task.classify(x).values()) == it.label ? 1.0 : 0.0, 0.0};
    }
    case TaskKind::autoencoder: {
      const auto x = sample(it.cloud, stream);
      return {chamfer(task.reconstruct(x), it.cloud.to_tensor()).item(), 0.0};
    }
    case TaskKind::registration: {
      const auto s = sample(it.cloud, 2 * stream);
      const auto t = sample(it.templ, 2 * stream + 1);
      const auto q = task.register_pair(s, t);
      const auto pred = Rotation::from_quaternion({q[0], q[1], q[2], q[3]});
      const auto t_rot = it.rotation.apply(PointCloud::from_tensor(t));
      return {rotation_error(pred, it.rotation), sampling_consistency(PointCloud::from_tensor(s), t_rot)};
    }
  }
  throw Error("item_score: invalid task");
}

inline EvalResult evaluate(const TaskModel& task, const std::vector<TaskItem>& items, const SampleFn& sample,
                           std::uint64_t seed, std::size_t threads, double reference_error = 0.0) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::pair<double, double>> scores(items.size());
  parallel_for(items.size(), threads,
               [&](std::size_t i) { scores[i] = item_score(task, items[i], sample, stream_seed(seed, i)); });
  double a = 0.0, b = 0.0;
  for (const auto& [x, y] : scores) {
    a += x;
    b += y;
  }
  const double count = static_cast<double>(std::max<std::size_t>(1, items.size()));
  EvalResult r;
  r.metric = a / count;
  if (task.kind() == TaskKind::autoencoder) r.metric = reference_error > 0.0 ? r.metric / reference_error : r.metric;
  if (task.kind() == TaskKind::registration) r.consistency = b / count;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline ad::Tensor complete_input(const PointCloud& P, std::uint64_t) { return P.to_tensor(); }

/// Mean chamfer of reconstructions from complete inputs; the NRE divisor.
inline double reference_error(const TaskModel& task, const std::vector<TaskItem>& items, std::size_t threads) {
  if (task.kind() != TaskKind::autoencoder) return 0.0;
  return evaluate(task, items, complete_input, 0, threads).metric;
}

// ---------------------------------------------------------------------------
// Task training

struct TaskTrainResult {
  TaskModel model;
  std::vector<double> epoch_loss;
  double test_metric = 0.0;
};

inline TaskTrainResult train_task(const ExperimentConfig& c, const TaskData& data, CsvLog* metrics = nullptr) {
  TaskModel model(task_config_of(c));
  auto params = nn::tensors_of(model.named_parameters());
  ad::Adam opt(params, {c.task_lr});
  std::mt19937_64 rng(stream_seed(c.task_seed, 0x7a5cULL));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ad::Tensor> inputs, templates;
  for (const auto& it : data.train) {
    inputs.push_back(it.cloud.to_tensor());
    if (c.task == TaskKind::registration) templates.push_back(it.templ.to_tensor());
  }
  TaskTrainResult out{model, {}, 0.0};
  for (std::size_t epoch = 0; epoch < c.task_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += c.task_batch) {
      const std::size_t B = std::min(c.task_batch, order.size() - b);
      opt.zero_grad();
      for (std::size_t j = 0; j < B; ++j) {
        const auto i = order[b + j];
        const auto* y = c.task == TaskKind::registration ? &templates[i] : nullptr;
        auto loss = task_loss(model, data.train[i], inputs[i], y);
        check_finite(loss.item(), "task", epoch, i);
        total += loss.item();
        ad::scale(loss, 1.0 / static_cast<double>(B)).backward();
      }
      opt.step();
    }
    out.epoch_loss.push_back(total / static_cast<double>(std::max<std::size_t>(1, order.size())));
    const bool last = epoch + 1 == c.task_epochs;
    double metric = std::numeric_limits<double>::quiet_NaN();
    if (last || metrics) {
      metric = evaluate(model, data.test, complete_input, c.eval_seed, c.threads).metric;
    }
    if (last) out.test_metric = metric;
    if (metrics)
      metrics->row({"task", std::to_string(epoch), fmt_num(out.epoch_loss.back()), "", "", fmt_num(metric)});
  }
  out.model = model;
  out.model.freeze();
  return out;
}

// ---------------------------------------------------------------------------
// Sampler training

struct SamplerVariant {
  std::string name = "baseline";
  TemperatureProfile profile;
  std::size_t k = 7;
  double eta_ce = 0.0;
  double eta_entropy = 0.0;
};

inline SamplerVariant baseline_variant(const ExperimentConfig& c) { return {"baseline", c.profile, c.k, c.eta_ce, c.eta_entropy}; }

struct SamplerEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double task_loss = 0.0;
  double t = 0.0;   // effective temperature at the end of the epoch
  double t2 = 0.0;
  std::vector<double> rank_weights;  // mean projection weight per neighbor rank
};

struct TrainedSampler {
  SamplerModel model;
  std::vector<SamplerEpoch> epochs;
};

struct SamplerLogs {
  CsvLog* metrics = nullptr;
  CsvLog* temperature = nullptr;
  CsvLog* weights = nullptr;
  std::string tag;  // e.g. ratio or variant label
};

namespace detail {

struct SamplerStep {
  ad::Tensor total;
  double task = 0.0;
  std::vector<const ProjectionState*> states;
};

}  // namespace detail

/// Trains a sampler in front of the frozen task. `m` is the sample size;
/// progressive training ignores it and emits n ordered points.
inline TrainedSampler train_sampler(const ExperimentConfig& c, const TaskModel& task, const TaskData& data,
                                    std::size_t m, const SamplerVariant& v, std::uint64_t seed,
                                    const SamplerLogs& logs = {}) {
  if (!task.frozen()) throw Error("train_sampler: the task network must be frozen");
  const std::size_t n = c.n();
  const bool reg = c.task == TaskKind::registration;
  const std::size_t out_m = c.progressive ? n : m;
  SamplerModel model(sampler_config_of(c, out_m, v.k, seed));
  for (const auto& it : data.train)
    if (it.cloud.size() != n) throw Error("train_sampler: cloud size " + std::to_string(it.cloud.size()) +
                                          " does not match the sampler input size " + std::to_string(n));
  const bool learned = v.profile.kind == ProfileKind::learned;
  auto params = nn::tensors_of(model.named_parameters(learned && !c.simplified_only));
  ad::Adam opt(params, {c.sampler_lr});
  const auto control = c.progressive ? (c.control_sizes.empty() ? default_control_sizes(n) : c.control_sizes)
                                     : std::vector<std::size_t>{m};
  validate_control_sizes(control, out_m);

  std::vector<KdTree> trees, ttrees;
  std::vector<ad::Tensor> inputs, tinputs;
  for (const auto& it : data.train) {
    trees.emplace_back(it.cloud);
    inputs.push_back(it.cloud.to_tensor());
    if (reg) {
      ttrees.emplace_back(it.templ);
      tinputs.push_back(it.templ.to_tensor());
    }
  }
  std::mt19937_64 rng(stream_seed(seed, 0x5a3bULL));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& w = c.weights;
  TrainedSampler out{model, {}};

  for (std::size_t epoch = 0; epoch < c.sampler_epochs; ++epoch) {
    opt.set_lr(cosine_lr(c.sampler_lr, c.lr_final_fraction, epoch, c.sampler_epochs));
    if (const auto t2 = temperature_schedule(v.profile, epoch, c.sampler_epochs)) model.set_temperature(std::sqrt(*t2));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, task_sum = 0.0;
    std::vector<double> rank(v.k, 0.0);
    double queries = 0.0;

    for (std::size_t b = 0; b < order.size(); b += c.sampler_batch) {
      const std::size_t B = std::min(c.sampler_batch, order.size() - b);
      opt.zero_grad();
      for (std::size_t j = 0; j < B; ++j) {
        const auto i = order[b + j];
        const auto& item = data.train[i];
        const auto t = learned ? model.effective_temperature() : ad::Tensor::scalar(model.temperature().item());
        const auto Q = model.forward(inputs[i]);
        const auto QT = reg ? model.forward(tinputs[i]) : ad::Tensor();
        ad::Tensor total = c.simplified_only ? ad::Tensor::scalar(0.0) : ad::scale(projection_loss(t), w.lambda);
        double task_value = 0.0;
        for (auto cs : control) {
          const auto Qc = c.progressive ? ad::slice_rows(Q, 0, cs) : Q;
          const auto QTc = reg ? (c.progressive ? ad::slice_rows(QT, 0, cs) : QT) : ad::Tensor();
          ad::Tensor simp = simplification_loss(Qc, inputs[i], w);
          if (reg) simp = ad::add(simp, simplification_loss(QTc, tinputs[i], w));
          ad::Tensor tl;
          std::vector<SoftProjection> sp;
          if (c.simplified_only) {
            tl = task_loss(task, item, Qc, reg ? &QTc : nullptr);
          } else {
            sp.push_back(soft_project(item.cloud, trees[i], Qc, v.k, t));
            if (reg) sp.push_back(soft_project(item.templ, ttrees[i], QTc, v.k, t));
            tl = task_loss(task, item, sp[0].points, reg ? &sp[1].points : nullptr);
          }
          ad::Tensor term = ad::add(tl, ad::scale(simp, w.alpha));
          for (const auto& p : sp) {
            const double share = 1.0 / static_cast<double>(sp.size());
            if (v.eta_ce > 0.0) term = ad::add(term, ad::scale(weight_cross_entropy_loss(p.state), v.eta_ce * share));
            if (v.eta_entropy > 0.0)
              term = ad::add(term, ad::scale(weight_entropy_loss(p.state), v.eta_entropy * share));
          }
          total = ad::add(total, term);
          task_value += tl.item();
          if (cs == control.back())
            for (const auto& p : sp) {
              const auto wv = p.state.weights.values();
              for (std::size_t q = 0; q < p.state.queries(); ++q)
                for (std::size_t r = 0; r < v.k; ++r) rank[r] += wv[q * v.k + r];
              queries += static_cast<double>(p.state.queries());
            }
        }
        check_finite(total.item(), "sampler", epoch, i);
        loss_sum += total.item();
        task_sum += task_value;
        ad::scale(total, 1.0 / static_cast<double>(B)).backward();
      }
      opt.step();
      if (learned) model.clip_temperature();
    }
    SamplerEpoch rec;
    rec.epoch = epoch;
    const double count = static_cast<double>(std::max<std::size_t>(1, order.size()));
    rec.loss = loss_sum / count;
    rec.task_loss = task_sum / count;
    rec.t = model.effective_temperature().item();
    rec.t2 = rec.t * rec.t;
    for (auto& r : rank) r = queries > 0 ? r / queries : 0.0;
    rec.rank_weights = rank;
    out.epochs.push_back(rec);
    if (logs.metrics) logs.metrics->row({"sampler:" + logs.tag, std::to_string(epoch), fmt_num(rec.loss), fmt_num(rec.task_loss), fmt_num(opt.lr()), ""});
    if (logs.temperature) logs.temperature->row({logs.tag, std::to_string(epoch), fmt_num(rec.t), fmt_num(rec.t2)});
    if (logs.weights)
      for (std::size_t r = 0; r < v.k; ++r)
        logs.weights->row({logs.tag, std::to_string(epoch), std::to_string(r + 1), fmt_num(rec.rank_weights[r])});
  }
  out.model = model;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling strategies

/// Points handed to the task for `strategy` at sample size m. `model` is
/// required for the samplenet strategies; a progressive model (m_out = n)
/// contributes its first m points.
inline SampleFn make_strategy(const std::string& strategy, std::size_t m, const SamplerModel* model) {
  if (strategy == "random")
    return [m](const PointCloud& P, std::uint64_t stream) {
      std::vector<std::size_t> idx(P.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::mt19937_64 rng(stream);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(m);
      return P.subset(idx).to_tensor();
    };
  if (strategy == "fps")
    return [m](const PointCloud& P, std::uint64_t stream) {
      std::mt19937_64 rng(stream);
      const auto start = std::uniform_int_distribution<std::size_t>(0, P.size() - 1)(rng);
      return P.subset(fps(P, m, start)).to_tensor();
    };
  if (strategy.rfind("samplenet", 0) != 0) throw Error("unknown strategy '" + strategy + "'");
  if (!model) throw Error("strategy '" + strategy + "' needs a trained sampler checkpoint");
  if (model->config().m < m)
    throw Error("sampler emits " + std::to_string(model->config().m) + " points, " + std::to_string(m) + " requested");
  const SamplerModel* sm = model;
  auto simplified = [sm, m](const PointCloud& P) {
    ad::NoGradGuard guard;
    auto Q = sm->forward(P.to_tensor());
    return Q.dim(0) == m ? Q : ad::slice_rows(Q, 0, m);
  };
  if (strategy == "samplenet-simplified") return [simplified](const PointCloud& P, std::uint64_t) { return simplified(P); };
  if (strategy == "samplenet-softly-projected")
    return [sm, simplified](const PointCloud& P, std::uint64_t) {
      ad::NoGradGuard guard;
      return soft_project(P, simplified(P), sm->config().k, sm->effective_temperature()).points;
    };
  if (strategy == "samplenet")
    return [sm, m, simplified](const PointCloud& P, std::uint64_t) {
      ad::NoGradGuard guard;
      const auto sp = soft_project(P, simplified(P), sm->config().k, sm->effective_temperature());
      return hard_sample(P, sp.state, m).points.to_tensor();
    };
  throw Error("unknown strategy '" + strategy + "'");
}

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string variant = "baseline";
  std::string strategy;
  std::size_t ratio = 1;
  std::size_t m = 0;
  std::string metric;
  EvalResult result;
};

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> c{"task", "variant", "strategy", "ratio", "m", "metric", "value", "consistency"};
  return c;
}

/// report.csv holds only deterministic values; wall times go to timing.csv.
inline void write_report(const std::string& dir, const ExperimentConfig& c, const std::vector<ReportRow>& rows) {
  const auto prov = Provenance::of(c);
  CsvLog report((std::filesystem::path(dir) / "report.csv").string(), report_columns(), prov);
  CsvLog timing((std::filesystem::path(dir) / "timing.csv").string(), {"variant", "strategy", "ratio", "seconds"}, prov);
  for (const auto& r : rows) {
    report.row({to_string(c.task), r.variant, r.strategy, std::to_string(r.ratio), std::to_string(r.m), r.metric,
                fmt_num(r.result.metric), fmt_num(r.result.consistency)});
    timing.row({r.variant, r.strategy, std::to_string(r.ratio), fmt_num(r.result.seconds)});
  }
}

/// Samplers by ratio, or one progressive sampler under key 0.
using SamplerSet = std::map<std::size_t, SamplerModel>;

inline const SamplerModel* sampler_for(const SamplerSet& set, std::size_t ratio) {
  if (auto it = set.find(ratio); it != set.end()) return &it->second;
  if (auto it = set.find(0); it != set.end()) return &it->second;
  return nullptr;
}

inline std::vector<ReportRow> evaluate_strategies(const ExperimentConfig& c, const TaskModel& task,
                                                  const TaskData& data, const SamplerSet& samplers,
                                                  const std::string& variant = "baseline") {
  const double ref = reference_error(task, data.test, c.threads);
  std::vector<ReportRow> rows;
  for (auto ratio : c.ratios) {
    const std::size_t m = c.n() / ratio;
    for (const auto& s : c.strategies) {
      const SamplerModel* model = s.rfind("samplenet", 0) == 0 ? sampler_for(samplers, ratio) : nullptr;
      if (s.rfind("samplenet", 0) == 0 && !model)
        throw Error("no sampler checkpoint for ratio " + std::to_string(ratio) + " (strategy '" + s + "')");
      const auto fn = make_strategy(s, m, model);
      rows.push_back({variant, s, ratio, m, metric_name(c.task), evaluate(task, data.test, fn, c.eval_seed, c.threads, ref)});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Complexity

struct ProfileRow {
  std::size_t ratio;
  ComplexityReport report;
};

inline std::vector<ProfileRow> complexity_profile(const ExperimentConfig& c) {
  std::vector<ProfileRow> rows;
  const bool full = c.preset == "reference";
  if (!full && c.preset != "desk") throw Error("unknown preset '" + c.preset + "' (expected desk or reference)");
  const std::size_t n = full ? 1024 : c.n();
  const auto task = full ? pointnet_reference(40) : TaskModel(task_config_of(c)).architecture();
  for (auto r : c.ratios) {
    if (r == 0 || n % r != 0) throw Error("ratio " + std::to_string(r) + " does not divide " + std::to_string(n));
    const std::size_t m = n / r;
    const auto sampler = full ? sampler_reference(m) : sampler_architecture(c.sampler_conv, c.sampler_fc, m);
    rows.push_back({r, mac_memory_report(sampler, task, n, m)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Commands

inline std::filesystem::path out_path(const ExperimentConfig& c, const std::string& name) {
  return std::filesystem::path(c.out) / name;
}

inline void echo_config(const ExperimentConfig& c) {
  std::ofstream os(out_path(c, "config.txt"));
  if (!os) throw IoError("cannot write config.txt in '" + c.out + "'");
  os << "# resolved configuration, hash " << config_hash(c) << '\n' << to_text(c);
}

inline std::string sampler_file(const ExperimentConfig& c, std::size_t ratio) {
  return c.progressive ? "sampler_progressive.ckpt" : "sampler_r" + std::to_string(ratio) + ".ckpt";
}

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> c{"phase", "epoch", "loss", "task_loss", "lr", "test_metric"};
  return c;
}

/// Writes the dataset as XYZ files plus manifest.csv.
inline std::size_t cmd_gen_data(const ExperimentConfig& c) {
  OutputLock lock(c.out);
  echo_config(c);
  const auto data = make_task_data(c);
  std::vector<ManifestEntry> manifest;
  auto dump = [&](const std::vector<TaskItem>& items, const std::string& split) {
    const auto dir = out_path(c, "data") / split;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < items.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%05zu.xyz", i);
      const auto rel = (std::filesystem::path("data") / split / name).string();
      write_cloud((std::filesystem::path(c.out) / rel).string(), items[i].cloud);
      manifest.push_back({rel, items[i].label, split});
    }
  };
  dump(data.train, "train");
  dump(data.test, "test");
  write_manifest(out_path(c, "manifest.csv").string(), manifest);
  return manifest.size();
}

inline TaskTrainResult cmd_train_task(const ExperimentConfig& c) {
  OutputLock lock(c.out);
  echo_config(c);
  const auto data = make_task_data(c);
  CsvLog metrics(out_path(c, "metrics.csv").string(), metrics_columns(), Provenance::of(c));
  auto result = train_task(c, data, &metrics);
  auto ck = result.model.to_checkpoint();
  ck.meta["points"] = std::to_string(c.n());
  save_checkpoint(out_path(c, "task.ckpt").string(), ck);
  return result;
}

inline TaskModel load_task(const std::string& path, const ExperimentConfig& c) {
  const auto ck = load_checkpoint(path);
  auto model = TaskModel::from_checkpoint(ck);
  if (model.kind() != c.task)
    throw Error("task checkpoint is a " + to_string(model.kind()) + " network, config says " + to_string(c.task));
  if (auto it = ck.meta.find("points"); it != ck.meta.end() && std::stoul(it->second) != c.n())
    throw Error("task checkpoint was trained on " + it->second + " points, config has " + std::to_string(c.n()));
  model.freeze();
  return model;
}

inline std::vector<TrainedSampler> cmd_train_sampler(const ExperimentConfig& c, const std::string& task_ckpt) {
  const auto task = load_task(task_ckpt, c);
  OutputLock lock(c.out);
  echo_config(c);
  const auto data = make_task_data(c);
  const auto prov = Provenance::of(c);
  CsvLog metrics(out_path(c, "metrics.csv").string(), metrics_columns(), prov, true);
  CsvLog temperature(out_path(c, "temperature.csv").string(), {"run", "epoch", "t", "t2"}, prov);
  CsvLog weights(out_path(c, "weights_evolution.csv").string(), {"run", "epoch", "rank", "mean_weight"}, prov);
  std::vector<TrainedSampler> out;
  const auto ratios = c.progressive ? std::vector<std::size_t>{1} : c.ratios;
  for (auto r : ratios) {
    const std::string tag = c.progressive ? "progressive" : "r" + std::to_string(r);
    auto trained = train_sampler(c, task, data, c.n() / r, baseline_variant(c), c.seed, {&metrics, &temperature, &weights, tag});
    save_checkpoint(out_path(c, sampler_file(c, r)).string(), trained.model.to_checkpoint());
    out.push_back(std::move(trained));
  }
  return out;
}

/// Loads whichever sampler checkpoints exist in `dir` for the configured
/// ratios.
inline SamplerSet load_samplers(const ExperimentConfig& c, const std::string& dir) {
  SamplerSet set;
  const auto ratios = c.progressive ? std::vector<std::size_t>{0} : c.ratios;
  for (auto r : ratios) {
    const auto path = std::filesystem::path(dir) / sampler_file(c, r);
    if (!std::filesystem::exists(path)) continue;
    auto model = SamplerModel::from_checkpoint(load_checkpoint(path.string()));
    if (model.config().n != c.n())
      throw Error("sampler checkpoint " + path.string() + " expects " + std::to_string(model.config().n) +
                  " points, config has " + std::to_string(c.n()));
    set.emplace(r, std::move(model));
  }
  return set;
}

inline std::vector<ReportRow> cmd_eval(const ExperimentConfig& c, const std::string& task_ckpt,
                                       const std::string& sampler_dir) {
  const auto task = load_task(task_ckpt, c);
  const auto samplers = load_samplers(c, sampler_dir);
  OutputLock lock(c.out);
  echo_config(c);
  const auto data = make_task_data(c);
  auto rows = evaluate_strategies(c, task, data, samplers);
  write_report(c.out, c, rows);
  return rows;
}

inline std::vector<SamplerVariant> ablation_variants(const ExperimentConfig& c) {
  std::vector<SamplerVariant> out;
  const auto base = baseline_variant(c);
  auto profiles = c.ablate_profiles;
  if (profiles.empty() && c.ablate_k.empty() && c.ablate_eta_ce.empty() && c.ablate_eta_entropy.empty())
    profiles = {"learned", "constant", "linear_rectified", "exponential"};
  for (const auto& p : profiles) {
    auto v = base;
    v.profile.kind = parse_profile_kind(p);
    v.name = "profile=" + p;
    out.push_back(v);
  }
  for (auto k : c.ablate_k) {
    auto v = base;
    v.k = k;
    v.name = "k=" + std::to_string(k);
    out.push_back(v);
  }
  for (auto e : c.ablate_eta_ce) {
    auto v = base;
    v.eta_ce = e;
    v.name = "eta_ce=" + fmt_num(e);
    out.push_back(v);
  }
  for (auto e : c.ablate_eta_entropy) {
    auto v = base;
    v.eta_entropy = e;
    v.name = "eta_entropy=" + fmt_num(e);
    out.push_back(v);
  }
  return out;
}

inline std::vector<ReportRow> cmd_ablate(const ExperimentConfig& c, const std::string& task_ckpt) {
  const auto task = load_task(task_ckpt, c);
  OutputLock lock(c.out);
  echo_config(c);
  const auto data = make_task_data(c);
  const auto prov = Provenance::of(c);
  CsvLog temperature(out_path(c, "temperature.csv").string(), {"run", "epoch", "t", "t2"}, prov);
  CsvLog weights(out_path(c, "weights_evolution.csv").string(), {"run", "epoch", "rank", "mean_weight"}, prov);
  const double ref = reference_error(task, data.test, c.threads);
  std::vector<ReportRow> rows;
  for (const auto& v : ablation_variants(c))
    for (auto r : c.ratios) {
      const std::size_t m = c.n() / r;
      const auto tag = v.name + "/r" + std::to_string(r);
      auto trained = train_sampler(c, task, data, m, v, c.seed, {nullptr, &temperature, &weights, tag});
      const auto fn = make_strategy("samplenet", m, &trained.model);
      rows.push_back({v.name, "samplenet", r, m, metric_name(c.task), evaluate(task, data.test, fn, c.eval_seed, c.threads, ref)});
    }
  write_report(c.out, c, rows);
  return rows;
}

inline std::vector<ProfileRow> cmd_profile(const ExperimentConfig& c) {
  auto rows = complexity_profile(c);
  OutputLock lock(c.out);
  echo_config(c);
  CsvLog csv(out_path(c, "profile.csv").string(),
             {"preset", "ratio", "m", "sampler_macs", "task_macs_sampled", "task_macs_full", "sampler_params",
              "task_params", "cr_percent", "mi_percent"},
             Provenance::of(c));
  for (const auto& [ratio, r] : rows)
    csv.row({c.preset, std::to_string(ratio), std::to_string(r.m), std::to_string(r.sampler_macs),
             std::to_string(r.task_macs_sampled), std::to_string(r.task_macs_full), std::to_string(r.sampler_params),
             std::to_string(r.task_params), fmt_num(r.cr_percent), fmt_num(r.mi_percent)});
  return rows;
}

}  // namespace dsample
