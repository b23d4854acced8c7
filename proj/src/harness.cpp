#include "geoclip/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "geoclip/rng.hpp"

namespace geoclip {

namespace {

constexpr std::uint64_t kStreamSample = 1;
constexpr std::uint64_t kStreamNoise = 2;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_short(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

void DatasetConfig::validate() const {
  if (kind == "synthetic_regression" || kind == "synthetic_classification") {
    require(n > 0 && p > 0, "harness: dataset shape must be positive");
    require(corr_block >= 0 && corr_block <= p,
            "harness: correlated block exceeds feature count");
  } else if (kind == "csv") {
    require(!path.empty(), "harness: csv dataset needs a path");
    require(!schema.empty(), "harness: csv dataset needs a schema");
  } else {
    throw std::invalid_argument("harness: unknown dataset kind '" + kind + "'");
  }
}

void RunConfig::validate() const {
  dataset.validate();
  strategy.validate();
  require(learning_rate > 0.0, "harness: learning rate must be positive");
  require(batch_size > 0, "harness: batch size must be positive");
  // Both zero is a legal no-op run: one evaluation row, zero releases.
  require(epochs >= 0 && iterations >= 0 && !(epochs > 0 && iterations > 0),
          "harness: epochs and iterations are mutually exclusive");
  require(!seeds.empty(), "harness: at least one seed required");
  require(delta > 0.0 && delta < 1.0, "harness: delta must lie in (0, 1)");
  if (epsilon_target) {
    require(*epsilon_target > 0.0, "harness: epsilon target must be positive");
  } else {
    require(strategy.sigma >= 0.0, "harness: negative noise multiplier");
  }
  if (classes) require(*classes >= 2, "harness: classes must be >= 2");
}

void SweepConfig::validate() const {
  base.dataset.validate();
  require(!strategies.empty(), "harness: sweep needs at least one strategy");
  require(sigmas.empty() != epsilons.empty(),
          "harness: sweep needs exactly one of sigmas/epsilons");
  for (double s : sigmas) require(s > 0, "harness: sigma must be positive");
  for (double e : epsilons) require(e > 0, "harness: epsilon must be positive");
  require(!lr_grid.empty(), "harness: sweep needs a learning-rate grid");
  for (double lr : lr_grid) require(lr > 0, "harness: learning rates must be positive");
  bool transformed = false, vanilla = false, quantile = false, lowrank = false;
  for (ClipKind k : strategies) {
    if (k == ClipKind::vanilla) vanilla = true;
    if (k == ClipKind::quantile) quantile = true;
    if (k == ClipKind::geoclip_lowrank) lowrank = true;
    if (k == ClipKind::geoclip_full || k == ClipKind::geoclip_lowrank ||
        k == ClipKind::adaclip)
      transformed = true;
  }
  if (transformed)
    require(!h2_grid.empty(), "harness: transformed strategies need h2_grid");
  if (vanilla)
    require(!clip_grid.empty(), "harness: vanilla needs clip_grid");
  if (quantile)
    require(base.strategy.clip_norm && base.strategy.quantile_lr,
            "harness: quantile sweep needs strategy clip_norm and quantile_lr");
  if (lowrank)
    require(base.strategy.rank.has_value(),
            "harness: geoclip_lowrank sweep needs strategy rank");
  require(!tuning_seeds.empty(), "harness: sweep needs tuning seeds");
  require(!report_seeds.empty(), "harness: sweep needs report seeds");
  require(workers >= 1, "harness: workers must be >= 1");
  require(base.learning_rate > 0 && base.batch_size > 0,
          "harness: invalid sweep base train settings");
  require((base.epochs > 0) != (base.iterations > 0),
          "harness: exactly one of epochs/iterations must be positive");
}

TrainGeometry train_geometry(const RunConfig& config, Index n_train) {
  require(n_train > 0, "harness: empty training split");
  TrainGeometry g;
  g.steps_per_epoch =
      (static_cast<std::int64_t>(n_train) + config.batch_size - 1) /
      config.batch_size;
  g.total_steps = config.epochs > 0 ? config.epochs * g.steps_per_epoch
                                    : config.iterations;
  g.sample_rate = std::min(
      1.0, static_cast<double>(config.batch_size) / static_cast<double>(n_train));
  return g;
}

Dataset load_raw(const DatasetConfig& config) {
  config.validate();
  if (config.kind == "synthetic_regression")
    return gen_synthetic_regression(config.n, config.p, config.corr_block,
                                    config.gen_seed, config.rho,
                                    config.noise_scale);
  if (config.kind == "synthetic_classification")
    return gen_synthetic_classification(config.n, config.p, config.corr_block,
                                        config.gen_seed, config.rho,
                                        config.noise_scale);
  return load_csv(config.path, load_schema(config.schema));
}

SplitDataset load_split(const DatasetConfig& config) {
  SplitSpec spec;
  spec.seed = config.split_seed;
  return split(load_raw(config), spec);
}

namespace {

ModelSpec model_for(const RunConfig& config, const Dataset& train) {
  ModelSpec m;
  m.kind = config.model;
  m.input_dim = train.p();
  if (m.kind == ModelKind::softmax) {
    m.classes = config.classes.value_or(train.classes);
    require(!train.classification || m.classes >= train.classes,
            "harness: model has fewer classes than the dataset");
  }
  bool model_classifies = m.kind != ModelKind::linear_regression;
  require(model_classifies == train.classification,
          "harness: model task does not match dataset task");
  m.validate();
  return m;
}

// Cumulative epsilon evaluator with the per-order RDP grid precomputed once.
class Ledger {
 public:
  Ledger(double sigma, double count_sigma, double q, double delta)
      : delta_(delta) {
    const auto& grid = rdp_order_grid();
    rho_grad_.reserve(grid.size());
    rho_count_.reserve(grid.size());
    for (double a : grid) {
      rho_grad_.push_back(sigma > 0 ? rdp_subsampled_gaussian(sigma, q, a)
                                    : std::numeric_limits<double>::infinity());
      rho_count_.push_back(
          count_sigma > 0 ? rdp_subsampled_gaussian(count_sigma, q, a) : 0.0);
    }
  }

  double epsilon(std::int64_t grad_steps, std::int64_t count_steps) const {
    if (grad_steps == 0 && count_steps == 0) return 0.0;
    const auto& grid = rdp_order_grid();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double total = grad_steps * rho_grad_[i] + count_steps * rho_count_[i];
      best = std::min(total + std::log(1.0 / delta_) / (grid[i] - 1.0), best);
    }
    return best;
  }

 private:
  double delta_;
  std::vector<double> rho_grad_;
  std::vector<double> rho_count_;
};

}  // namespace

RunRecord train(const RunConfig& config, const SplitDataset& data,
                std::uint64_t seed) {
  config.validate();
  auto t_begin = std::chrono::steady_clock::now();

  const Dataset& tr = data.train;
  ModelSpec model = model_for(config, tr);
  TrainGeometry geom = train_geometry(config, tr.n());

  ClipStrategyConfig strat = config.strategy;
  if (config.epsilon_target)
    strat.sigma = sigma_for_target(*config.epsilon_target, geom.sample_rate,
                                   geom.total_steps, config.delta);
  auto strategy = make_strategy(strat, model.param_count(), config.batch_size);

  auto releases = strategy->releases_per_step();
  double count_sigma = releases.size() > 1 ? releases.back().sigma : 0.0;
  Ledger ledger(strat.sigma, count_sigma, geom.sample_rate, config.delta);

  VectorXd theta = VectorXd::Zero(model.param_count());
  RunRecord rec;
  rec.seed = seed;
  rec.sigma_used = strat.sigma;

  auto evaluate = [&](std::int64_t step) {
    EvalRow row;
    row.step = step;
    row.loss = mean_loss(model, theta, tr.features, tr.targets);
    row.metric = evaluation_metric(model, theta, data.test.features,
                                   data.test.targets);
    row.epsilon = ledger.epsilon(rec.gradient_releases, rec.count_releases);
    require_io(std::isfinite(row.loss),
               "harness: training diverged at step " + std::to_string(step) +
                   " (non-finite loss); reduce learning_rate");
    rec.rows.push_back(row);
  };

  evaluate(0);
  std::vector<Index> batch;
  batch.reserve(static_cast<size_t>(2 * config.batch_size));
  for (std::int64_t t = 1; t <= geom.total_steps; ++t) {
    // Poisson sampling: every release is charged, empty draws included.
    SplitRng sample_rng = SplitRng::for_step(seed, kStreamSample,
                                             static_cast<std::uint64_t>(t));
    batch.clear();
    for (Index i = 0; i < tr.n(); ++i)
      if (sample_rng.uniform() < geom.sample_rate) batch.push_back(i);

    rec.gradient_releases += 1;
    if (count_sigma > 0) rec.count_releases += 1;

    if (!batch.empty()) {
      MatrixXd X(batch.size(), tr.p());
      VectorXd y(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) {
        X.row(static_cast<Index>(i)) = tr.features.row(batch[i]);
        y[static_cast<Index>(i)] = tr.targets[batch[i]];
      }
      MatrixXd grads = per_sample_gradients(model, theta, X, y);
      SplitRng noise_rng = SplitRng::for_step(seed, kStreamNoise,
                                              static_cast<std::uint64_t>(t));
      PrivatizedGradient pg = strategy->step(grads, noise_rng);
      require_io(pg.value.allFinite(),
                 "harness: non-finite privatized gradient at step " +
                     std::to_string(t));
      theta -= config.learning_rate * pg.value;
    }

    bool scheduled = config.epochs > 0 ? (t % geom.steps_per_epoch == 0) : true;
    if (scheduled || t == geom.total_steps) evaluate(t);
  }

  rec.final_val_metric = evaluation_metric(model, theta, data.val.features,
                                           data.val.targets);
  if (config.save_estimator) strategy->save_estimator(*config.save_estimator);

  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin)
          .count();
  return rec;
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

struct Candidate {
  double learning_rate;
  double h2 = std::numeric_limits<double>::quiet_NaN();
  double clip_norm = std::numeric_limits<double>::quiet_NaN();
};

bool uses_transform(ClipKind kind) {
  return kind == ClipKind::geoclip_full || kind == ClipKind::geoclip_lowrank ||
         kind == ClipKind::adaclip;
}

RunConfig cell_config(const SweepConfig& sw, ClipKind kind, double sigma,
                      const Candidate& cand) {
  RunConfig cfg = sw.base;
  cfg.strategy.kind = kind;
  cfg.strategy.sigma = sigma;
  cfg.epsilon_target.reset();  // sigma already resolved for the cell
  cfg.learning_rate = cand.learning_rate;
  if (uses_transform(kind)) {
    cfg.strategy.h2 = cand.h2;
    cfg.strategy.rank.reset();
    cfg.strategy.clip_norm.reset();
    cfg.strategy.quantile_lr.reset();
    if (kind == ClipKind::geoclip_lowrank) cfg.strategy.rank = sw.base.strategy.rank;
  } else if (kind == ClipKind::vanilla) {
    cfg.strategy.clip_norm = cand.clip_norm;
    cfg.strategy.rank.reset();
    cfg.strategy.quantile_lr.reset();
  } else {  // quantile: self-adapting threshold, lr/target from base config
    cfg.strategy.clip_norm = sw.base.strategy.clip_norm;
    cfg.strategy.quantile_lr = sw.base.strategy.quantile_lr;
    cfg.strategy.rank.reset();
  }
  cfg.seeds = {0};  // filled per run
  return cfg;
}

std::vector<Candidate> candidates_for(const SweepConfig& sw, ClipKind kind) {
  std::vector<Candidate> out;
  for (double lr : sw.lr_grid) {
    if (uses_transform(kind)) {
      for (double h2 : sw.h2_grid) {
        Candidate c;
        c.learning_rate = lr;
        c.h2 = h2;
        out.push_back(c);
      }
    } else if (kind == ClipKind::vanilla) {
      for (double cn : sw.clip_grid) {
        Candidate c;
        c.learning_rate = lr;
        c.clip_norm = cn;
        out.push_back(c);
      }
    } else {
      Candidate c;
      c.learning_rate = lr;
      out.push_back(c);
    }
  }
  return out;
}

// Runs jobs in waves of at most `workers` async tasks; results keep job order.
template <typename Job>
std::vector<RunRecord> run_pool(const std::vector<Job>& jobs, int workers) {
  std::vector<RunRecord> out(jobs.size());
  if (workers <= 1) {
    for (size_t i = 0; i < jobs.size(); ++i) out[i] = jobs[i]();
    return out;
  }
  size_t next = 0;
  while (next < jobs.size()) {
    size_t wave = std::min<size_t>(static_cast<size_t>(workers),
                                   jobs.size() - next);
    std::vector<std::future<RunRecord>> futs;
    futs.reserve(wave);
    for (size_t i = 0; i < wave; ++i)
      futs.push_back(std::async(std::launch::async, jobs[next + i]));
    for (size_t i = 0; i < wave; ++i) out[next + i] = futs[i].get();
    next += wave;
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<SweepCell> sweep(const SweepConfig& config,
                             const SplitDataset& data) {
  config.validate();
  bool minimize = config.base.model == ModelKind::linear_regression;
  TrainGeometry geom = train_geometry(config.base, data.train.n());

  // Budgets resolve to noise multipliers once, shared across strategies.
  std::vector<std::pair<double, double>> budgets;  // (sigma, declared budget)
  if (!config.sigmas.empty()) {
    for (double s : config.sigmas) budgets.emplace_back(s, s);
  } else {
    for (double e : config.epsilons)
      budgets.emplace_back(sigma_for_target(e, geom.sample_rate,
                                            geom.total_steps,
                                            config.base.delta),
                           e);
  }

  std::vector<SweepCell> cells;
  for (ClipKind kind : config.strategies) {
    for (auto [sigma, budget_label] : budgets) {
      auto cands = candidates_for(config, kind);

      // Tuning: mean final validation metric across tuning seeds; diverging
      // candidates are disqualified.
      double best_score = minimize ? std::numeric_limits<double>::infinity()
                                   : -std::numeric_limits<double>::infinity();
      size_t best_idx = cands.size();
      for (size_t ci = 0; ci < cands.size(); ++ci) {
        RunConfig cfg = cell_config(config, kind, sigma, cands[ci]);
        std::vector<std::function<RunRecord()>> jobs;
        for (std::uint64_t s : config.tuning_seeds)
          jobs.push_back([cfg, &data, s] { return train(cfg, data, s); });
        std::vector<double> vals;
        bool ok = true;
        try {
          auto recs = run_pool(jobs, config.workers);
          for (const auto& r : recs) vals.push_back(r.final_val_metric);
        } catch (const std::runtime_error&) {
          ok = false;  // divergence disqualifies the candidate
        }
        if (!ok) continue;
        double score = mean_of(vals);
        if (!std::isfinite(score)) continue;
        bool better = minimize ? score < best_score : score > best_score;
        if (better) {
          best_score = score;
          best_idx = ci;
        }
      }
      require_io(best_idx < cands.size(),
                 "harness: every candidate diverged for strategy " +
                     to_string(kind));

      RunConfig cfg = cell_config(config, kind, sigma, cands[best_idx]);
      std::vector<std::function<RunRecord()>> jobs;
      for (std::uint64_t s : config.report_seeds)
        jobs.push_back([cfg, &data, s] { return train(cfg, data, s); });

      SweepCell cell;
      cell.strategy = kind;
      cell.budget = budget_label;
      cell.sigma = sigma;
      cell.learning_rate = cands[best_idx].learning_rate;
      cell.h2 = cands[best_idx].h2;
      cell.clip_norm = kind == ClipKind::quantile
                           ? config.base.strategy.clip_norm.value_or(
                                 std::numeric_limits<double>::quiet_NaN())
                           : cands[best_idx].clip_norm;
      if (kind == ClipKind::quantile)
        cell.quantile_lr = config.base.strategy.quantile_lr.value_or(
            std::numeric_limits<double>::quiet_NaN());
      cell.records = run_pool(jobs, config.workers);

      std::vector<double> finals;
      for (const auto& r : cell.records) finals.push_back(r.rows.back().metric);
      cell.metric_mean = mean_of(finals);
      cell.metric_std = sample_std(finals, cell.metric_mean);
      cell.epsilon = cell.records.front().rows.back().epsilon;
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

void write_metrics_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream os(path, std::ios::trunc);
  require_io(os.is_open(), "harness: cannot write " + path);
  os << "step,loss,metric,epsilon\n";
  for (const auto& r : rec.rows)
    os << r.step << ',' << fmt(r.loss) << ',' << fmt(r.metric) << ','
       << fmt(r.epsilon) << '\n';
  require_io(os.good(), "harness: short write to " + path);
}

void write_curve_from_rows(const std::string& path, const RunRecord& rec) {
  EpsilonCurve curve;
  for (const auto& r : rec.rows) curve.points.emplace_back(r.step, r.epsilon);
  write_epsilon_curve_csv(curve, path);
}

const char* kSummaryHeader =
    "strategy,budget,sigma,epsilon,learning_rate,h2,clip_norm,quantile_lr,"
    "metric_mean,metric_std,seeds\n";

std::string summary_row(const SweepCell& cell) {
  std::ostringstream os;
  auto opt = [](double x) { return std::isnan(x) ? std::string() : fmt(x); };
  os << to_string(cell.strategy) << ',' << fmt(cell.budget) << ','
     << fmt(cell.sigma) << ',' << fmt(cell.epsilon) << ','
     << fmt(cell.learning_rate) << ',' << opt(cell.h2) << ','
     << opt(cell.clip_norm) << ',' << opt(cell.quantile_lr) << ','
     << fmt(cell.metric_mean) << ',' << fmt(cell.metric_std) << ','
     << cell.records.size() << '\n';
  return os.str();
}

SweepCell cell_from_records(const RunConfig& config,
                            const std::vector<RunRecord>& records) {
  SweepCell cell;
  cell.strategy = config.strategy.kind;
  cell.learning_rate = config.learning_rate;
  cell.h2 = uses_transform(config.strategy.kind)
                ? config.strategy.h2
                : std::numeric_limits<double>::quiet_NaN();
  if (config.strategy.clip_norm) cell.clip_norm = *config.strategy.clip_norm;
  if (config.strategy.quantile_lr) cell.quantile_lr = *config.strategy.quantile_lr;
  cell.records = records;
  if (!records.empty()) {
    cell.sigma = records.front().sigma_used;
    cell.budget = config.epsilon_target.value_or(cell.sigma);
    cell.epsilon = records.front().rows.back().epsilon;
    std::vector<double> finals;
    for (const auto& r : records) finals.push_back(r.rows.back().metric);
    cell.metric_mean = mean_of(finals);
    cell.metric_std = sample_std(finals, cell.metric_mean);
  }
  return cell;
}

std::string budget_dir_name(const SweepConfig& config, const SweepCell& cell) {
  // Budgets were declared as epsilons or sigmas; label directories the way
  // the config spoke.
  const char* axis = config.epsilons.empty() ? "_sigma" : "_eps";
  return to_string(cell.strategy) + axis + fmt_short(cell.budget);
}

}  // namespace

void emit(const RunConfig& config, const std::vector<RunRecord>& records) {
  require(!config.out_dir.empty(), "harness: out_dir not set");
  std::filesystem::create_directories(config.out_dir);
  std::ofstream os(config.out_dir + "/summary.csv", std::ios::trunc);
  require_io(os.is_open(), "harness: cannot write " + config.out_dir +
                               "/summary.csv");
  os << kSummaryHeader;
  if (!records.empty()) os << summary_row(cell_from_records(config, records));
  require_io(os.good(), "harness: short write to summary.csv");
  for (const auto& rec : records)
    write_metrics_csv(
        config.out_dir + "/metrics_" + std::to_string(rec.seed) + ".csv", rec);
  if (!records.empty())
    write_curve_from_rows(config.out_dir + "/epsilon_curve.csv",
                          records.front());
}

void emit(const SweepConfig& config, const std::vector<SweepCell>& cells) {
  require(!config.base.out_dir.empty(), "harness: out_dir not set");
  std::filesystem::create_directories(config.base.out_dir);
  std::ofstream os(config.base.out_dir + "/summary.csv", std::ios::trunc);
  require_io(os.is_open(), "harness: cannot write summary.csv");
  os << kSummaryHeader;
  for (const auto& cell : cells) os << summary_row(cell);
  require_io(os.good(), "harness: short write to summary.csv");
  for (const auto& cell : cells) {
    std::string dir = config.base.out_dir + "/" + budget_dir_name(config, cell);
    std::filesystem::create_directories(dir);
    for (const auto& rec : cell.records)
      write_metrics_csv(dir + "/metrics_" + std::to_string(rec.seed) + ".csv",
                        rec);
    if (!cell.records.empty())
      write_curve_from_rows(dir + "/epsilon_curve.csv", cell.records.front());
  }
}

// ---------------------------------------------------------------------------
// Config files

namespace {

using Section = std::map<std::string, std::string>;

struct ConfigFile {
  std::map<std::string, Section> sections;
  std::map<std::string, std::set<std::string>> consumed;

  bool has(const std::string& sec, const std::string& key) const {
    auto it = sections.find(sec);
    return it != sections.end() && it->second.count(key) > 0;
  }

  std::string take(const std::string& sec, const std::string& key) {
    consumed[sec].insert(key);
    auto it = sections.find(sec);
    require(it != sections.end() && it->second.count(key) > 0,
            "harness: config missing " + sec + "." + key);
    return it->second.at(key);
  }

  std::string take_or(const std::string& sec, const std::string& key,
                      const std::string& fallback) {
    consumed[sec].insert(key);
    if (!has(sec, key)) return fallback;
    return sections.at(sec).at(key);
  }

  void finish() const {
    for (const auto& [sec, kv] : sections) {
      auto it = consumed.find(sec);
      require(it != consumed.end(), "harness: unknown config section [" + sec + "]");
      for (const auto& [key, _] : kv)
        require(it->second.count(key) > 0,
                "harness: unknown config key " + sec + "." + key);
    }
  }
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

ConfigFile parse_config_file(const std::string& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  require_io(is.is_open(), "harness: cannot read config " + path);
  ConfigFile cf;
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      require_io(!section.empty(), "harness: " + path + ":" +
                                       std::to_string(lineno) +
                                       ": empty section name");
      cf.sections[section];
      continue;
    }
    auto eq = line.find('=');
    require_io(eq != std::string::npos && !section.empty(),
               "harness: " + path + ":" + std::to_string(lineno) +
                   ": expected key = value inside a section");
    cf.sections[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  for (const auto& ov : overrides) {
    auto eq = ov.find('=');
    auto dot = ov.find('.');
    require(eq != std::string::npos && dot != std::string::npos && dot < eq,
            "harness: override must look like section.key=value: " + ov);
    cf.sections[trim(ov.substr(0, dot))][trim(ov.substr(dot + 1, eq - dot - 1))] =
        trim(ov.substr(eq + 1));
  }
  return cf;
}

double to_double(const std::string& v, const std::string& what) {
  size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && std::isfinite(x),
          "harness: bad numeric value for " + what + ": '" + v + "'");
  return x;
}

std::int64_t to_int(const std::string& v, const std::string& what) {
  size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size(), "harness: bad integer value for " + what + ": '" + v + "'");
  return x;
}

bool to_bool(const std::string& v, const std::string& what) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("harness: bad boolean for " + what + ": '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_double_list(const std::string& v, const std::string& what) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(s, what));
  require(!out.empty(), "harness: empty list for " + what);
  return out;
}

// "a,b,c" is the explicit list; a single integer N means seeds 1..N.
std::vector<std::uint64_t> to_seed_list(const std::string& v,
                                        const std::string& what) {
  auto items = split_list(v);
  require(!items.empty(), "harness: empty seed list for " + what);
  if (items.size() == 1) {
    std::int64_t n = to_int(items[0], what);
    require(n > 0, "harness: seed count must be positive for " + what);
    if (v.find(',') == std::string::npos) {
      std::vector<std::uint64_t> out;
      for (std::int64_t i = 1; i <= n; ++i)
        out.push_back(static_cast<std::uint64_t>(i));
      return out;
    }
  }
  std::vector<std::uint64_t> out;
  for (const auto& s : items)
    out.push_back(static_cast<std::uint64_t>(to_int(s, what)));
  return out;
}

DatasetConfig dataset_from(ConfigFile& cf) {
  DatasetConfig d;
  d.kind = cf.take("dataset", "kind");
  d.split_seed = static_cast<std::uint64_t>(
      to_int(cf.take_or("dataset", "split_seed", "0"), "dataset.split_seed"));
  if (d.kind == "csv") {
    d.path = cf.take("dataset", "path");
    d.schema = cf.take("dataset", "schema");
  } else {
    d.n = to_int(cf.take_or("dataset", "n", "20000"), "dataset.n");
    d.p = to_int(cf.take_or("dataset", "p", "10"), "dataset.p");
    d.corr_block = to_int(cf.take_or("dataset", "corr_block", "5"),
                          "dataset.corr_block");
    d.gen_seed = static_cast<std::uint64_t>(
        to_int(cf.take_or("dataset", "gen_seed", "0"), "dataset.gen_seed"));
    d.rho = to_double(cf.take_or("dataset", "rho", "0.8"), "dataset.rho");
    d.noise_scale = to_double(cf.take_or("dataset", "noise_scale", "0.1"),
                              "dataset.noise_scale");
  }
  return d;
}

ClipStrategyConfig strategy_from(ConfigFile& cf, bool need_kind) {
  ClipStrategyConfig s;
  if (need_kind)
    s.kind = clip_kind_from_string(cf.take("strategy", "kind"));
  else if (cf.has("strategy", "kind"))
    s.kind = clip_kind_from_string(cf.take("strategy", "kind"));
  s.sigma = to_double(cf.take_or("strategy", "sigma", "0"), "strategy.sigma");
  if (cf.has("strategy", "rank"))
    s.rank = static_cast<int>(to_int(cf.take("strategy", "rank"), "strategy.rank"));
  if (cf.has("strategy", "clip_norm"))
    s.clip_norm = to_double(cf.take("strategy", "clip_norm"), "strategy.clip_norm");
  if (cf.has("strategy", "quantile_lr"))
    s.quantile_lr =
        to_double(cf.take("strategy", "quantile_lr"), "strategy.quantile_lr");
  s.quantile_target = to_double(cf.take_or("strategy", "quantile_target", "0.5"),
                                "strategy.quantile_target");
  s.h1 = to_double(cf.take_or("strategy", "h1", "1e-15"), "strategy.h1");
  s.h2 = to_double(cf.take_or("strategy", "h2", "10"), "strategy.h2");
  s.beta1 = to_double(cf.take_or("strategy", "beta1", "0.99"), "strategy.beta1");
  s.beta2 = to_double(cf.take_or("strategy", "beta2", "0.999"), "strategy.beta2");
  s.beta3 = to_double(cf.take_or("strategy", "beta3", "0.99"), "strategy.beta3");
  s.scale_by_batch = to_bool(cf.take_or("strategy", "scale_by_batch", "true"),
                             "strategy.scale_by_batch");
  return s;
}

void train_privacy_from(ConfigFile& cf, RunConfig& cfg, bool need_seeds) {
  cfg.model = model_kind_from_string(cf.take("model", "kind"));
  if (cf.has("model", "classes"))
    cfg.classes = static_cast<int>(to_int(cf.take("model", "classes"), "model.classes"));
  cfg.learning_rate = to_double(cf.take_or("train", "learning_rate", "0.1"),
                                "train.learning_rate");
  cfg.batch_size = static_cast<int>(
      to_int(cf.take_or("train", "batch_size", "32"), "train.batch_size"));
  cfg.epochs = to_int(cf.take_or("train", "epochs", "0"), "train.epochs");
  cfg.iterations =
      to_int(cf.take_or("train", "iterations", "0"), "train.iterations");
  if (need_seeds)
    cfg.seeds = to_seed_list(cf.take("train", "seeds"), "train.seeds");
  else if (cf.has("train", "seeds"))
    cfg.seeds = to_seed_list(cf.take("train", "seeds"), "train.seeds");
  cfg.out_dir = cf.take("train", "out_dir");
  if (cf.has("train", "save_estimator"))
    cfg.save_estimator = cf.take("train", "save_estimator");
  cfg.delta = to_double(cf.take_or("privacy", "delta", "1e-5"), "privacy.delta");
  if (cf.has("privacy", "epsilon_target"))
    cfg.epsilon_target =
        to_double(cf.take("privacy", "epsilon_target"), "privacy.epsilon_target");
}

}  // namespace

RunConfig parse_run_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  ConfigFile cf = parse_config_file(path, overrides);
  RunConfig cfg;
  cfg.dataset = dataset_from(cf);
  cfg.strategy = strategy_from(cf, true);
  train_privacy_from(cf, cfg, true);
  cf.finish();
  cfg.validate();
  return cfg;
}

SweepConfig parse_sweep_config(const std::string& path,
                               const std::vector<std::string>& overrides) {
  ConfigFile cf = parse_config_file(path, overrides);
  SweepConfig sw;
  sw.base.dataset = dataset_from(cf);
  sw.base.strategy = strategy_from(cf, false);
  train_privacy_from(cf, sw.base, false);
  if (sw.base.seeds.empty()) sw.base.seeds = {1};

  for (const auto& item : split_list(cf.take("sweep", "strategies")))
    sw.strategies.push_back(clip_kind_from_string(item));
  if (cf.has("sweep", "sigmas"))
    sw.sigmas = to_double_list(cf.take("sweep", "sigmas"), "sweep.sigmas");
  if (cf.has("sweep", "epsilons"))
    sw.epsilons = to_double_list(cf.take("sweep", "epsilons"), "sweep.epsilons");
  sw.lr_grid = to_double_list(cf.take("sweep", "lr_grid"), "sweep.lr_grid");
  if (cf.has("sweep", "h2_grid"))
    sw.h2_grid = to_double_list(cf.take("sweep", "h2_grid"), "sweep.h2_grid");
  if (cf.has("sweep", "clip_grid"))
    sw.clip_grid = to_double_list(cf.take("sweep", "clip_grid"), "sweep.clip_grid");
  sw.tuning_seeds =
      to_seed_list(cf.take("sweep", "tuning_seeds"), "sweep.tuning_seeds");
  sw.report_seeds =
      to_seed_list(cf.take("sweep", "report_seeds"), "sweep.report_seeds");
  sw.workers = static_cast<int>(
      to_int(cf.take_or("sweep", "workers", "1"), "sweep.workers"));
  cf.finish();
  sw.validate();
  return sw;
}

DatasetConfig parse_dataset_config(const std::string& path,
                                   const std::vector<std::string>& overrides) {
  ConfigFile cf = parse_config_file(path, overrides);
  DatasetConfig d = dataset_from(cf);
  // gen-data specs may sit inside a full run config; ignore other sections.
  for (const auto& [sec, kv] : cf.sections)
    for (const auto& [key, _] : kv) cf.consumed[sec].insert(key);
  cf.finish();
  d.validate();
  return d;
}

bool config_has_sweep(const std::string& path) {
  ConfigFile cf = parse_config_file(path, {});
  return cf.sections.count("sweep") > 0;
}

}  // namespace geoclip
