#include "geoclip/estimator.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace geoclip {

namespace {

void check_decay(double beta, const char* what) {
  require(beta > 0.0 && beta < 1.0, std::string("estimator: ") + what +
                                        " must lie in (0, 1)");
}

}  // namespace

FullCovState FullCovState::init(Index d, double beta1, double beta2,
                                int batch_size) {
  require(d > 0, "estimator: dimension must be positive");
  require(batch_size > 0, "estimator: batch size must be positive");
  check_decay(beta1, "beta1");
  check_decay(beta2, "beta2");
  FullCovState s;
  s.mean = VectorXd::Zero(d);
  s.cov = MatrixXd::Identity(d, d);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.batch_size = batch_size;
  return s;
}

void FullCovState::observe(const VectorXd& g) {
  require(g.size() == dim(), "estimator: observation dimension mismatch");
  double w = batch_size * (1.0 - beta2);
  VectorXd r = g - mean;  // pre-update mean
  cov *= beta2;
  cov.selfadjointView<Eigen::Lower>().rankUpdate(r, w);
  cov.triangularView<Eigen::StrictlyUpper>() =
      cov.triangularView<Eigen::StrictlyLower>().transpose();
  mean = update_mean(mean, g, beta1);
  ++steps;
}

DiagCovState DiagCovState::init(Index d, double beta1, double beta2,
                                int batch_size) {
  require(d > 0, "estimator: dimension must be positive");
  require(batch_size > 0, "estimator: batch size must be positive");
  check_decay(beta1, "beta1");
  check_decay(beta2, "beta2");
  DiagCovState s;
  s.mean = VectorXd::Zero(d);
  s.var = VectorXd::Ones(d);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.batch_size = batch_size;
  return s;
}

void DiagCovState::observe(const VectorXd& g) {
  require(g.size() == dim(), "estimator: observation dimension mismatch");
  double w = batch_size * (1.0 - beta2);
  var = beta2 * var + w * (g - mean).cwiseAbs2();
  mean = update_mean(mean, g, beta1);
  ++steps;
}

LowRankState LowRankState::init(Index d, Index k, double beta1, double beta3,
                                int batch_size, bool scale_by_batch) {
  require(d > 0, "estimator: dimension must be positive");
  require(k > 0 && k <= d, "estimator: rank must lie in [1, dim]");
  require(batch_size > 0, "estimator: batch size must be positive");
  check_decay(beta1, "beta1");
  check_decay(beta3, "beta3");
  LowRankState s;
  s.mean = VectorXd::Zero(d);
  s.basis = MatrixXd::Identity(d, k);  // first k coordinate directions
  s.values = VectorXd::Ones(k);
  s.beta1 = beta1;
  s.beta3 = beta3;
  s.batch_size = batch_size;
  s.scale_by_batch = scale_by_batch;
  return s;
}

void LowRankState::observe(const VectorXd& g) {
  *this = streaming_rank_k_update(*this, g);
}

VectorXd update_mean(const VectorXd& mean, const VectorXd& g, double beta1) {
  require(g.size() == mean.size(), "estimator: observation dimension mismatch");
  check_decay(beta1, "beta1");
  return beta1 * mean + (1.0 - beta1) * g;
}

FullCovState update_cov_full(const FullCovState& state, const VectorXd& g) {
  require(g.size() == state.dim(),
          "estimator: observation dimension mismatch");
  FullCovState out = state;
  double w = state.batch_size * (1.0 - state.beta2);
  VectorXd r = g - state.mean;
  out.cov = state.beta2 * state.cov + w * (r * r.transpose());
  return out;
}

VectorXd batch_effective_residual(const VectorXd& g, const VectorXd& mean,
                                  int batch_size) {
  require(g.size() == mean.size(), "estimator: observation dimension mismatch");
  require(batch_size > 0, "estimator: batch size must be positive");
  return std::sqrt(static_cast<double>(batch_size)) * (g - mean);
}

void lowrank_fold(MatrixXd& basis, VectorXd& values, const VectorXd& z,
                  double beta3) {
  check_decay(beta3, "beta3");
  Index d = basis.rows();
  Index k = basis.cols();
  require(values.size() == k, "estimator: basis/value count mismatch");
  require(z.size() == d, "estimator: observation dimension mismatch");
  Index m = k + 1;

  MatrixXd widened(d, m);
  for (Index i = 0; i < k; ++i)
    widened.col(i) = std::sqrt(beta3 * std::max(values[i], 0.0)) * basis.col(i);
  widened.col(k) = std::sqrt(1.0 - beta3) * z;

  // Thin QR keeps every intermediate at d x (k+1).
  Eigen::HouseholderQR<MatrixXd> qr(widened);
  MatrixXd thin_q = qr.householderQ() * MatrixXd::Identity(d, m);
  MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();

  Eigen::JacobiSVD<MatrixXd> svd(r, Eigen::ComputeFullU);
  VectorXd sv = svd.singularValues();
  double floor = 1e-12 * sv[0];
  basis.noalias() = thin_q * svd.matrixU().leftCols(k);
  for (Index i = 0; i < k; ++i) {
    double s = sv[i] < floor ? 0.0 : sv[i];
    values[i] = s * s;
  }
}

LowRankState streaming_rank_k_update(const LowRankState& state,
                                     const VectorXd& g) {
  require(g.size() == state.dim(),
          "estimator: observation dimension mismatch");
  LowRankState out = state;
  out.mean = update_mean(state.mean, g, state.beta1);
  VectorXd z = out.scale_by_batch
                   ? batch_effective_residual(g, out.mean, out.batch_size)
                   : VectorXd(g - out.mean);
  lowrank_fold(out.basis, out.values, z, out.beta3);
  ++out.steps;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'G', 'C', 'E', 'S', 'T', 'A', 'T', '1'};

enum class StateKind : std::uint32_t { full = 0, diag = 1, lowrank = 2 };

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  put_u64(os, v);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

void put_matrix(std::ostream& os, const MatrixXd& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put_f64(os, m(i, j));
}

MatrixXd get_matrix(std::istream& is, Index rows, Index cols) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = get_f64(is);
  return m;
}

void write_header(std::ostream& os, StateKind kind, Index d, Index k,
                  std::uint64_t steps, int batch_size, bool scale_by_batch,
                  double beta1, double beta_cov) {
  os.write(kMagic, 8);
  put_u64(os, static_cast<std::uint64_t>(kind));
  put_u64(os, static_cast<std::uint64_t>(d));
  put_u64(os, static_cast<std::uint64_t>(k));
  put_u64(os, steps);
  put_u64(os, static_cast<std::uint64_t>(batch_size));
  put_u64(os, scale_by_batch ? 1 : 0);
  put_f64(os, beta1);
  put_f64(os, beta_cov);
}

struct Header {
  StateKind kind;
  Index d, k;
  std::uint64_t steps;
  int batch_size;
  bool scale_by_batch;
  double beta1, beta_cov;
};

Header read_header(std::istream& is, StateKind expected) {
  char magic[8];
  is.read(magic, 8);
  require_io(is.good() && std::memcmp(magic, kMagic, 8) == 0,
             "estimator: bad checkpoint magic");
  Header h;
  h.kind = static_cast<StateKind>(get_u64(is));
  require_io(h.kind == expected, "estimator: checkpoint kind mismatch");
  h.d = static_cast<Index>(get_u64(is));
  h.k = static_cast<Index>(get_u64(is));
  h.steps = get_u64(is);
  h.batch_size = static_cast<int>(get_u64(is));
  h.scale_by_batch = get_u64(is) != 0;
  h.beta1 = get_f64(is);
  h.beta_cov = get_f64(is);
  require_io(is.good(), "estimator: truncated checkpoint header");
  require_io(h.d > 0 && h.k >= 0 && h.k <= h.d && h.batch_size > 0,
             "estimator: corrupt checkpoint header");
  return h;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require_io(os.is_open(), "estimator: cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require_io(is.is_open(), "estimator: cannot read " + path);
  return is;
}

}  // namespace

void save_state(const FullCovState& state, const std::string& path) {
  auto os = open_out(path);
  write_header(os, StateKind::full, state.dim(), state.dim(), state.steps,
               state.batch_size, false, state.beta1, state.beta2);
  put_matrix(os, state.mean);
  put_matrix(os, state.cov);
  require_io(os.good(), "estimator: short write to " + path);
}

void save_state(const DiagCovState& state, const std::string& path) {
  auto os = open_out(path);
  write_header(os, StateKind::diag, state.dim(), state.dim(), state.steps,
               state.batch_size, false, state.beta1, state.beta2);
  put_matrix(os, state.mean);
  put_matrix(os, state.var);
  require_io(os.good(), "estimator: short write to " + path);
}

void save_state(const LowRankState& state, const std::string& path) {
  auto os = open_out(path);
  write_header(os, StateKind::lowrank, state.dim(), state.rank(), state.steps,
               state.batch_size, state.scale_by_batch, state.beta1,
               state.beta3);
  put_matrix(os, state.mean);
  put_matrix(os, state.basis);
  put_matrix(os, state.values);
  require_io(os.good(), "estimator: short write to " + path);
}

FullCovState load_full_state(const std::string& path) {
  auto is = open_in(path);
  Header h = read_header(is, StateKind::full);
  FullCovState s = FullCovState::init(h.d, h.beta1, h.beta_cov, h.batch_size);
  s.steps = h.steps;
  s.mean = get_matrix(is, h.d, 1);
  s.cov = get_matrix(is, h.d, h.d);
  require_io(is.good(), "estimator: truncated checkpoint " + path);
  return s;
}

DiagCovState load_diag_state(const std::string& path) {
  auto is = open_in(path);
  Header h = read_header(is, StateKind::diag);
  DiagCovState s = DiagCovState::init(h.d, h.beta1, h.beta_cov, h.batch_size);
  s.steps = h.steps;
  s.mean = get_matrix(is, h.d, 1);
  s.var = get_matrix(is, h.d, 1);
  require_io(is.good(), "estimator: truncated checkpoint " + path);
  return s;
}

LowRankState load_lowrank_state(const std::string& path) {
  auto is = open_in(path);
  Header h = read_header(is, StateKind::lowrank);
  LowRankState s = LowRankState::init(h.d, h.k, h.beta1, h.beta_cov,
                                      h.batch_size, h.scale_by_batch);
  s.steps = h.steps;
  s.mean = get_matrix(is, h.d, 1);
  s.basis = get_matrix(is, h.d, h.k);
  s.values = get_matrix(is, h.k, 1);
  require_io(is.good(), "estimator: truncated checkpoint " + path);
  return s;
}

}  // namespace geoclip
