#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "dsample/experiment.hpp"

using namespace dsample;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> ratios;
  std::optional<std::string> strategy;
  std::optional<std::string> profile_kind;
  bool progressive = false;
  std::string task_ckpt;
  std::string sampler_dir;
};

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override one key, e.g. --set k=5 (repeatable)");
  cmd->add_option("--seed", o.seed, "sampler seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--ratios", o.ratios, "comma separated sampling ratios n/m");
}

/// File entries first, then flags, so flags win.
ExperimentConfig build(const Common& o) {
  ConfigEntries e;
  if (!o.config.empty()) e = read_config_file(o.config);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
    e.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) e.emplace_back("seed", std::to_string(*o.seed));
  if (o.out) e.emplace_back("out", *o.out);
  if (o.ratios) e.emplace_back("ratios", *o.ratios);
  if (o.strategy) e.emplace_back("strategies", *o.strategy);
  if (o.profile_kind) e.emplace_back("profile", *o.profile_kind);
  if (o.progressive) e.emplace_back("progressive", "true");
  return resolve_config(e);
}

void print_rows(const std::vector<ReportRow>& rows) {
  std::printf("%-24s %-28s %6s %5s %-9s %10s %12s\n", "variant", "strategy", "ratio", "m", "metric", "value",
              "consistency");
  for (const auto& r : rows)
    std::printf("%-24s %-28s %6zu %5zu %-9s %10.4f %12s\n", r.variant.c_str(), r.strategy.c_str(), r.ratio, r.m,
                r.metric.c_str(), r.result.metric, fmt_num(r.result.consistency).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned point cloud sampling: data, training, evaluation and ablations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", build_id());

  Common o;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as XYZ files plus manifest.csv");
  auto* train_task = app.add_subcommand("train-task", "train the task network on complete clouds");
  auto* train_sampler = app.add_subcommand("train-sampler", "train samplers in front of a frozen task network");
  auto* eval = app.add_subcommand("eval", "evaluate sampling strategies at each ratio");
  auto* ablate = app.add_subcommand("ablate", "sweep temperature profiles, k or weight losses");
  auto* profile = app.add_subcommand("profile", "MAC and memory accounting per ratio");

  for (auto* cmd : {gen, train_task, train_sampler, eval, ablate, profile}) add_common(cmd, o);
  for (auto* cmd : {train_sampler, eval, ablate}) {
    cmd->add_option("--task-ckpt", o.task_ckpt, "task checkpoint (default <out>/task.ckpt)");
    cmd->add_option("--profile-kind", o.profile_kind, "learned | constant | linear_rectified | exponential");
    cmd->add_flag("--progressive", o.progressive, "one ordered sampler for all ratios");
  }
  eval->add_option("--sampler-dir", o.sampler_dir, "directory with sampler checkpoints (default <out>)");
  eval->add_option("--strategy", o.strategy, "comma separated strategies");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto c = build(o);
    const auto ckpt = o.task_ckpt.empty() ? out_path(c, "task.ckpt").string() : o.task_ckpt;
    if (gen->parsed()) {
      const auto count = cmd_gen_data(c);
      std::printf("wrote %zu clouds to %s\n", count, c.out.c_str());
    } else if (train_task->parsed()) {
      const auto r = cmd_train_task(c);
      std::printf("%s %s on complete test clouds: %.4f\n", to_string(c.task).c_str(), metric_name(c.task).c_str(),
                  r.test_metric);
    } else if (train_sampler->parsed()) {
      for (const auto& s : cmd_train_sampler(c, ckpt)) {
        const auto& last = s.epochs.back();
        std::printf("m=%zu final loss %.5f t^2 %.5f first-neighbor weight %.3f\n", s.model.config().m, last.loss,
                    last.t2, last.rank_weights.empty() ? 0.0 : last.rank_weights[0]);
      }
    } else if (eval->parsed()) {
      print_rows(cmd_eval(c, ckpt, o.sampler_dir.empty() ? c.out : o.sampler_dir));
    } else if (ablate->parsed()) {
      print_rows(cmd_ablate(c, ckpt));
    } else if (profile->parsed()) {
      std::printf("%6s %5s %14s %14s %12s %12s %8s %8s\n", "ratio", "m", "sampler_macs", "task_macs", "sampler_par",
                  "task_par", "CR%", "MI%");
      for (const auto& [ratio, r] : cmd_profile(c))
        std::printf("%6zu %5zu %14.0f %14.0f %12.0f %12.0f %8.2f %8.2f\n", ratio, r.m, double(r.sampler_macs),
                    double(r.task_macs_sampled), double(r.sampler_params), double(r.task_params), r.cr_percent,
                    r.mi_percent);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
