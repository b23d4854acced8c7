#include "geoclip/modeling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "geoclip/rng.hpp"

namespace geoclip {

namespace {

constexpr std::uint64_t kStreamData = 0xDA7A;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

VectorXd augmented(const VectorXd& x) {
  VectorXd xhat(x.size() + 1);
  xhat.head(x.size()) = x;
  xhat[x.size()] = 1.0;
  return xhat;
}

// Row-wise softmax probabilities for theta laid out class-major.
MatrixXd softmax_probs(const ModelSpec& model, const VectorXd& theta,
                       const MatrixXd& X) {
  Index n = X.rows(), p = X.cols();
  int c = model.classes;
  MatrixXd logits(n, c);
  for (int i = 0; i < c; ++i) {
    auto block = theta.segment(static_cast<Index>(i) * (p + 1), p + 1);
    logits.col(i) = X * block.head(p);
    logits.col(i).array() += block[p];
  }
  VectorXd row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  MatrixXd probs = logits.array().exp();
  VectorXd denom = probs.rowwise().sum();
  probs.array().colwise() /= denom.array();
  return probs;
}

void check_batch(const ModelSpec& model, const VectorXd& theta,
                 const MatrixXd& X, const VectorXd& y) {
  model.validate();
  require(theta.size() == model.param_count(),
          "modeling: parameter vector has wrong length");
  require(theta.allFinite(), "modeling: non-finite parameters");
  require(X.cols() == model.input_dim, "modeling: feature width mismatch");
  require(X.rows() == y.size(), "modeling: feature/target count mismatch");
}

int class_label(double y, int classes) {
  double r = std::nearbyint(y);
  require(y == r && r >= 0 && r < classes,
          "modeling: class label out of range");
  return static_cast<int>(r);
}

}  // namespace

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear_regression") return ModelKind::linear_regression;
  if (s == "logistic_binary") return ModelKind::logistic_binary;
  if (s == "softmax") return ModelKind::softmax;
  throw std::invalid_argument("modeling: unknown model kind '" + s + "'");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear_regression: return "linear_regression";
    case ModelKind::logistic_binary: return "logistic_binary";
    case ModelKind::softmax: return "softmax";
  }
  throw std::invalid_argument("modeling: unknown model kind");
}

Index ModelSpec::param_count() const {
  if (kind == ModelKind::softmax)
    return static_cast<Index>(classes) * (input_dim + 1);
  return input_dim + 1;
}

void ModelSpec::validate() const {
  require(input_dim > 0, "modeling: input dimension must be positive");
  if (kind == ModelKind::softmax)
    require(classes >= 2, "modeling: softmax needs at least two classes");
}

void Dataset::validate() const {
  require(features.rows() == targets.size(),
          "modeling: feature/target count mismatch");
  require(features.allFinite() && targets.allFinite(),
          "modeling: dataset contains non-finite values");
  if (classification) {
    for (Index i = 0; i < targets.size(); ++i)
      class_label(targets[i], classes);
  }
}

void SplitSpec::validate() const {
  require(train_fraction > 0 && val_fraction >= 0 && test_fraction >= 0,
          "modeling: split fractions must be nonnegative");
  require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) <= 1e-9,
          "modeling: split fractions must sum to 1");
}

MatrixXd per_sample_gradients(const ModelSpec& model, const VectorXd& theta,
                              const MatrixXd& X, const VectorXd& y) {
  check_batch(model, theta, X, y);
  Index n = X.rows(), p = X.cols();
  MatrixXd grads(n, model.param_count());
  switch (model.kind) {
    case ModelKind::linear_regression: {
      VectorXd r = X * theta.head(p);
      r.array() += theta[p];
      r -= y;
      grads.leftCols(p) = r.asDiagonal() * X;
      grads.col(p) = r;
      break;
    }
    case ModelKind::logistic_binary: {
      VectorXd z = X * theta.head(p);
      z.array() += theta[p];
      VectorXd r(n);
      for (Index i = 0; i < n; ++i) r[i] = sigmoid(z[i]) - y[i];
      grads.leftCols(p) = r.asDiagonal() * X;
      grads.col(p) = r;
      break;
    }
    case ModelKind::softmax: {
      MatrixXd probs = softmax_probs(model, theta, X);
      for (int c = 0; c < model.classes; ++c) {
        VectorXd r = probs.col(c);
        for (Index i = 0; i < n; ++i)
          if (class_label(y[i], model.classes) == c) r[i] -= 1.0;
        Index off = static_cast<Index>(c) * (p + 1);
        grads.middleCols(off, p) = r.asDiagonal() * X;
        grads.col(off + p) = r;
      }
      break;
    }
  }
  return grads;
}

VectorXd per_sample_gradient(const ModelSpec& model, const VectorXd& theta,
                             const VectorXd& x, double y) {
  MatrixXd X = x.transpose();
  VectorXd yv(1);
  yv[0] = y;
  return per_sample_gradients(model, theta, X, yv).row(0);
}

double mean_loss(const ModelSpec& model, const VectorXd& theta,
                 const MatrixXd& X, const VectorXd& y) {
  check_batch(model, theta, X, y);
  Index n = X.rows(), p = X.cols();
  require(n > 0, "modeling: empty batch");
  double total = 0.0;
  switch (model.kind) {
    case ModelKind::linear_regression: {
      VectorXd r = X * theta.head(p);
      r.array() += theta[p];
      r -= y;
      total = 0.5 * r.squaredNorm();
      break;
    }
    case ModelKind::logistic_binary: {
      VectorXd z = X * theta.head(p);
      z.array() += theta[p];
      for (Index i = 0; i < n; ++i)
        total += softplus(z[i]) - y[i] * z[i];  // -log p(y|x)
      break;
    }
    case ModelKind::softmax: {
      MatrixXd probs = softmax_probs(model, theta, X);
      for (Index i = 0; i < n; ++i) {
        int c = class_label(y[i], model.classes);
        total -= std::log(std::max(probs(i, c), 1e-300));
      }
      break;
    }
  }
  return total / static_cast<double>(n);
}

double evaluation_metric(const ModelSpec& model, const VectorXd& theta,
                         const MatrixXd& X, const VectorXd& y) {
  check_batch(model, theta, X, y);
  Index n = X.rows(), p = X.cols();
  require(n > 0, "modeling: empty batch");
  switch (model.kind) {
    case ModelKind::linear_regression: {
      VectorXd r = X * theta.head(p);
      r.array() += theta[p];
      r -= y;
      return r.squaredNorm() / static_cast<double>(n);
    }
    case ModelKind::logistic_binary: {
      VectorXd z = X * theta.head(p);
      z.array() += theta[p];
      Index hits = 0;
      for (Index i = 0; i < n; ++i)
        if ((z[i] > 0.0 ? 1.0 : 0.0) == y[i]) ++hits;
      return 100.0 * hits / static_cast<double>(n);
    }
    case ModelKind::softmax: {
      MatrixXd probs = softmax_probs(model, theta, X);
      Index hits = 0;
      for (Index i = 0; i < n; ++i) {
        Index arg;
        probs.row(i).maxCoeff(&arg);
        if (static_cast<int>(arg) == class_label(y[i], model.classes)) ++hits;
      }
      return 100.0 * hits / static_cast<double>(n);
    }
  }
  throw std::invalid_argument("modeling: unknown model kind");
}

namespace {

// Shared feature model: latent factor over the leading block.
MatrixXd gen_features(SplitRng& rng, Index n, Index p, Index corr_block,
                      double rho) {
  MatrixXd X(n, p);
  double resid = std::sqrt(1.0 - rho * rho);
  for (Index i = 0; i < n; ++i) {
    double z = rng.gaussian();
    for (Index j = 0; j < p; ++j) {
      double g = rng.gaussian();
      X(i, j) = j < corr_block ? rho * z + resid * g : g;
    }
  }
  return X;
}

VectorXd gen_signal(SplitRng& rng, const MatrixXd& X) {
  VectorXd w = rng.gaussian_vector(X.cols());
  VectorXd s = X * w;
  double mean = s.mean();
  double sd = std::sqrt((s.array() - mean).square().sum() / s.size());
  require(sd > 0, "modeling: degenerate synthetic signal");
  return (s.array() - mean) / sd;
}

}  // namespace

Dataset gen_synthetic_regression(Index n, Index p, Index corr_block,
                                 std::uint64_t seed, double rho,
                                 double noise_scale) {
  require(n > 0 && p > 0, "modeling: dataset shape must be positive");
  require(corr_block >= 0 && corr_block <= p,
          "modeling: correlated block exceeds feature count");
  require(rho > -1.0 && rho < 1.0, "modeling: rho must lie in (-1, 1)");
  SplitRng rng = SplitRng::for_step(seed, kStreamData, 0);
  Dataset d;
  d.features = gen_features(rng, n, p, corr_block, rho);
  VectorXd s = gen_signal(rng, d.features);
  d.targets = s + noise_scale * rng.gaussian_vector(n);
  d.name = "synthetic_regression";
  return d;
}

Dataset gen_synthetic_classification(Index n, Index p, Index corr_block,
                                     std::uint64_t seed, double rho,
                                     double noise_scale) {
  require(n > 0 && p > 0, "modeling: dataset shape must be positive");
  require(corr_block >= 0 && corr_block <= p,
          "modeling: correlated block exceeds feature count");
  require(rho > -1.0 && rho < 1.0, "modeling: rho must lie in (-1, 1)");
  SplitRng rng = SplitRng::for_step(seed, kStreamData, 1);
  Dataset d;
  d.features = gen_features(rng, n, p, corr_block, rho);
  VectorXd u = gen_signal(rng, d.features) +
               noise_scale * rng.gaussian_vector(n);
  d.targets.resize(n);
  for (Index i = 0; i < n; ++i)
    d.targets[i] = sigmoid(u[i]) > 0.5 ? 1.0 : 0.0;
  d.name = "synthetic_classification";
  d.classification = true;
  d.classes = 2;
  return d;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::string trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trimmed(cur));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& tok, const std::string& path, size_t line,
                  const std::string& column) {
  require_io(!tok.empty(), "modeling: " + path + ":" + std::to_string(line) +
                               ": empty cell in column " + column);
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require_io(used == tok.size(), "modeling: " + path + ":" +
                                     std::to_string(line) +
                                     ": non-numeric value '" + tok +
                                     "' in column " + column);
  require_io(std::isfinite(v), "modeling: " + path + ":" +
                                   std::to_string(line) +
                                   ": non-finite value in column " + column);
  return v;
}

}  // namespace

CsvSchema load_schema(const std::string& path) {
  std::ifstream is(path);
  require_io(is.is_open(), "modeling: cannot read schema " + path);
  CsvSchema schema;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    require_io(eq != std::string::npos,
               "modeling: " + path + ":" + std::to_string(lineno) +
                   ": expected key=value");
    std::string key = trimmed(line.substr(0, eq));
    std::string val = trimmed(line.substr(eq + 1));
    if (key == "target") {
      schema.target_column = val;
    } else if (key == "task") {
      require_io(val == "regression" || val == "classification",
                 "modeling: schema task must be regression or classification");
      schema.classification = (val == "classification");
    } else if (key == "target_scale") {
      require_io(val == "none" || val == "minmax01",
                 "modeling: schema target_scale must be none or minmax01");
      schema.target_minmax = (val == "minmax01");
    } else if (key == "header") {
      require_io(val == "true" || val == "false",
                 "modeling: schema header must be true or false");
      schema.has_header = (val == "true");
    } else {
      throw std::runtime_error("modeling: unknown schema key '" + key + "'");
    }
  }
  require_io(!schema.target_column.empty(),
             "modeling: schema must name a target column");
  return schema;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream is(path);
  require_io(is.is_open(), "modeling: cannot read " + path);
  std::string line;
  size_t lineno = 0;
  std::vector<std::string> names;
  size_t width = 0;

  if (schema.has_header) {
    require_io(static_cast<bool>(std::getline(is, line)),
               "modeling: " + path + " is empty");
    ++lineno;
    names = split_fields(line);
    width = names.size();
    require_io(width >= 2, "modeling: " + path + ": need >= 2 columns");
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (trimmed(line).empty()) continue;
    auto fields = split_fields(line);
    if (width == 0) {
      width = fields.size();
      require_io(width >= 2, "modeling: " + path + ": need >= 2 columns");
      for (size_t j = 0; j < width; ++j) names.push_back(std::to_string(j));
    }
    require_io(fields.size() == width,
               "modeling: " + path + ":" + std::to_string(lineno) +
                   ": expected " + std::to_string(width) + " fields, got " +
                   std::to_string(fields.size()));
    std::vector<double> row(width);
    for (size_t j = 0; j < width; ++j)
      row[j] = parse_cell(fields[j], path, lineno, names[j]);
    rows.push_back(std::move(row));
  }
  require_io(!rows.empty(), "modeling: " + path + " has no data rows");

  // Target column by name, falling back to a zero-based index.
  size_t target = width;
  for (size_t j = 0; j < width; ++j)
    if (names[j] == schema.target_column) target = j;
  if (target == width) {
    try {
      size_t used = 0;
      unsigned long idx = std::stoul(schema.target_column, &used);
      if (used == schema.target_column.size() && idx < width) target = idx;
    } catch (const std::exception&) {
    }
  }
  require_io(target < width, "modeling: schema target column '" +
                                 schema.target_column + "' not found in " +
                                 path);

  Index n = static_cast<Index>(rows.size());
  Index p = static_cast<Index>(width - 1);
  Dataset d;
  d.features.resize(n, p);
  d.targets.resize(n);
  for (Index i = 0; i < n; ++i) {
    Index jj = 0;
    for (size_t j = 0; j < width; ++j) {
      if (j == target)
        d.targets[i] = rows[i][j];
      else
        d.features(i, jj++) = rows[i][j];
    }
  }
  auto stem_begin = path.find_last_of('/');
  auto stem = path.substr(stem_begin == std::string::npos ? 0 : stem_begin + 1);
  auto dot = stem.find_last_of('.');
  d.name = dot == std::string::npos ? stem : stem.substr(0, dot);
  d.classification = schema.classification;
  d.target_minmax = schema.target_minmax;
  if (d.classification) {
    int max_label = 0;
    for (Index i = 0; i < n; ++i) {
      double r = std::nearbyint(d.targets[i]);
      require_io(d.targets[i] == r && r >= 0,
                 "modeling: " + path + ": non-integer class label");
      max_label = std::max(max_label, static_cast<int>(r));
    }
    d.classes = max_label + 1;
    require_io(d.classes >= 2, "modeling: " + path + ": single-class targets");
  }
  d.validate();
  return d;
}

namespace {

Dataset take_rows(const Dataset& d, const std::vector<Index>& idx, Index begin,
                  Index end) {
  Dataset out;
  out.features.resize(end - begin, d.p());
  out.targets.resize(end - begin);
  for (Index i = begin; i < end; ++i) {
    out.features.row(i - begin) = d.features.row(idx[i]);
    out.targets[i - begin] = d.targets[idx[i]];
  }
  out.name = d.name;
  out.classification = d.classification;
  out.classes = d.classes;
  out.target_minmax = d.target_minmax;
  return out;
}

}  // namespace

SplitDataset split(const Dataset& data, const SplitSpec& spec) {
  data.validate();
  spec.validate();
  Index n = data.n();
  require(n >= 10, "modeling: need at least 10 rows to split");

  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  SplitRng rng = SplitRng::for_step(spec.seed, kStreamData, 2);
  for (Index i = n - 1; i > 0; --i) {
    Index j = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }

  Index n_train = static_cast<Index>(std::floor(spec.train_fraction * n));
  Index n_val = static_cast<Index>(std::floor(spec.val_fraction * n));
  require(n_train >= 1 && n_train + n_val < n, "modeling: degenerate split");

  SplitDataset out;
  out.train = take_rows(data, idx, 0, n_train);
  out.val = take_rows(data, idx, n_train, n_train + n_val);
  out.test = take_rows(data, idx, n_train + n_val, n);

  // Fit on train only; apply everywhere with train statistics.
  Index p = data.p();
  Standardization st;
  st.mean = out.train.features.colwise().mean().transpose();
  VectorXd var = (out.train.features.rowwise() - st.mean.transpose())
                     .array()
                     .square()
                     .colwise()
                     .mean()
                     .transpose();
  st.stddev = var.array().sqrt();
  for (Index j = 0; j < p; ++j)
    if (st.stddev[j] < 1e-12) st.stddev[j] = 1.0;
  st.target_minmax = data.target_minmax && !data.classification;
  if (st.target_minmax) {
    st.target_lo = out.train.targets.minCoeff();
    st.target_hi = out.train.targets.maxCoeff();
    require(st.target_hi > st.target_lo,
            "modeling: constant targets cannot be min-max scaled");
  }
  for (Dataset* part : {&out.train, &out.val, &out.test}) {
    part->features = (part->features.rowwise() - st.mean.transpose()).array().rowwise() /
                     st.stddev.transpose().array();
    if (st.target_minmax)
      part->targets = (part->targets.array() - st.target_lo) /
                      (st.target_hi - st.target_lo);
    part->standardization = st;
  }
  return out;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream os(path, std::ios::trunc);
  require_io(os.is_open(), "modeling: cannot write " + path);
  for (Index j = 0; j < data.p(); ++j) os << 'x' << j << ',';
  os << "target\n";
  char buf[64];
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.targets[i]);
    os << buf << '\n';
  }
  require_io(os.good(), "modeling: short write to " + path);
}

}  // namespace geoclip
