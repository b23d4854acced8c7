#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "geoclip/harness.hpp"

namespace {

using namespace geoclip;

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, int workers) {
  RunConfig cfg = parse_run_config(config_path, overrides);
  SplitDataset data = load_split(cfg.dataset);
  std::vector<RunRecord> records;
  records.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    records.push_back(train(cfg, data, seed));
    std::fprintf(stderr, "seed %llu: final metric %.6g, epsilon %.6g\n",
                 static_cast<unsigned long long>(seed),
                 records.back().rows.back().metric,
                 records.back().rows.back().epsilon);
  }
  (void)workers;
  emit(cfg, records);
  double mean = 0;
  for (const auto& r : records) mean += r.rows.back().metric;
  mean /= static_cast<double>(records.size());
  std::printf("%s final metric mean %.9g over %zu seeds -> %s\n",
              to_string(cfg.strategy.kind).c_str(), mean, records.size(),
              cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& overrides, int workers) {
  SweepConfig cfg = parse_sweep_config(config_path, overrides);
  if (workers > 0) cfg.workers = workers;
  SplitDataset data = load_split(cfg.base.dataset);
  auto cells = sweep(cfg, data);
  emit(cfg, cells);
  for (const auto& cell : cells)
    std::printf("%s budget %g: sigma %.6g epsilon %.6g lr %g -> %.9g +- %.9g\n",
                to_string(cell.strategy).c_str(), cell.budget, cell.sigma,
                cell.epsilon, cell.learning_rate, cell.metric_mean,
                cell.metric_std);
  return 0;
}

int cmd_accountant(double sigma, double q, std::int64_t steps, double delta) {
  PrivacySpec spec{sigma, q, steps, delta};
  std::printf("%.12g\n", epsilon_of(spec));
  return 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path,
                 const std::vector<std::string>& overrides) {
  DatasetConfig cfg = parse_dataset_config(spec_path, overrides);
  Dataset data = load_raw(cfg);
  write_dataset_csv(data, out_path);
  std::printf("%s: %lld rows, %lld features -> %s\n", data.name.c_str(),
              static_cast<long long>(data.n()), static_cast<long long>(data.p()),
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private SGD with covariance-adapted clipping"};
  app.require_subcommand(1);

  std::string config_path, spec_path, out_path;
  std::vector<std::string> overrides;
  int workers = 0;
  double sigma = 1.0, q = 1.0, delta = 1e-5;
  std::int64_t steps = 0;

  auto* run = app.add_subcommand("run", "Train one strategy over the config seeds");
  run->add_option("config", config_path, "run config file")->required();
  run->add_option("--set", overrides, "override config keys (section.key=value)");
  run->add_option("--workers", workers, "parallel run workers");

  auto* sw = app.add_subcommand("sweep", "Tune and evaluate strategy/budget cells");
  sw->add_option("config", config_path, "sweep config file")->required();
  sw->add_option("--set", overrides, "override config keys (section.key=value)");
  sw->add_option("--workers", workers, "parallel run workers");

  auto* acc = app.add_subcommand("accountant", "Print epsilon for sigma, q, T, delta");
  acc->add_option("sigma", sigma, "noise multiplier")->required();
  acc->add_option("q", q, "Poisson sample rate")->required();
  acc->add_option("steps", steps, "number of releases")->required();
  acc->add_option("delta", delta, "target delta")->required();

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  gen->add_option("spec", spec_path, "dataset spec config")->required();
  gen->add_option("out", out_path, "output CSV path")->required();
  gen->add_option("--set", overrides, "override config keys (section.key=value)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, overrides, workers);
    if (sw->parsed()) return cmd_sweep(config_path, overrides, workers);
    if (acc->parsed()) return cmd_accountant(sigma, q, steps, delta);
    if (gen->parsed()) return cmd_gen_data(spec_path, out_path, overrides);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
