#include "nlm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nlm/blr.hpp"

namespace nlm {

namespace {

constexpr double kMinGradientNorm = 1e-12;
constexpr double kMinDelta = 1e-8;

void check_batch(const FeatureMap& trunk, const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) {
    throw DimensionError("batch has " + std::to_string(x.rows()) + " inputs but " +
                         std::to_string(y.size()) + " targets");
  }
  if (static_cast<std::size_t>(x.cols()) != trunk.input_dim()) {
    throw DimensionError("batch has " + std::to_string(x.cols()) +
                         " input columns, trunk expects " + std::to_string(trunk.input_dim()));
  }
}

void check_heads(const LunaParams& psi) {
  if (static_cast<std::size_t>(psi.heads.cols()) != psi.trunk.feature_dim() + 1) {
    throw DimensionError("heads have length " + std::to_string(psi.heads.cols()) +
                         ", expected L+1 = " + std::to_string(psi.trunk.feature_dim() + 1));
  }
}

void require_finite(double loss, const Vector& grad, const char* what) {
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw NonFiniteError(std::string(what) + ": non-finite loss or gradient");
  }
}

Matrix drop_bias_column(const Matrix& design_cotangent) {
  return design_cotangent.rightCols(design_cotangent.cols() - 1);
}

struct DiverseWork {
  ForwardResult base;
  std::vector<ForwardResult> shifted;
  std::vector<Matrix> slopes;  // per dimension: (F_d - F_0) / delta, N x L
};

DiverseWork diverse_forward(const LunaParams& psi, const Matrix& x, const Matrix& deltas) {
  if (deltas.rows() != x.rows() || deltas.cols() != x.cols()) {
    throw DimensionError("perturbations must have the shape of the batch");
  }
  DiverseWork w;
  w.base = forward(psi.trunk, x);
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    Matrix xd = x;
    xd.col(d) += deltas.col(d);
    w.shifted.push_back(forward(psi.trunk, xd));
    Matrix slope = w.shifted.back().features - w.base.features;
    slope.array().colwise() /= deltas.col(d).array();
    w.slopes.push_back(std::move(slope));
  }
  return w;
}

// Per-point gradient matrix G_n (M x D) from the per-dimension slopes.
// Input gradients of every head over points [begin, end), laid out as
// M x ((end - begin) * D) with columns ordered point-major.
Matrix head_gradients(const std::vector<Matrix>& per_dim, Eigen::Index begin, Eigen::Index end) {
  const Eigen::Index m = per_dim.front().cols();
  const auto dims = static_cast<Eigen::Index>(per_dim.size());
  Matrix g(m, (end - begin) * dims);
  for (Eigen::Index n = begin; n < end; ++n)
    for (Eigen::Index d = 0; d < dims; ++d)
      g.col((n - begin) * dims + d) = per_dim[static_cast<std::size_t>(d)].row(n).transpose();
  return g;
}

// Blocks of points sharing one cosine: each point alone, or the whole batch.
std::vector<std::pair<Eigen::Index, Eigen::Index>> aggregation_blocks(DiversityAggregation agg,
                                                                      Eigen::Index n,
                                                                      Eigen::Index dims) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;
  if (resolve_aggregation(agg, dims) == DiversityAggregation::Stacked) {
    blocks.emplace_back(0, n);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) blocks.emplace_back(i, i + 1);
  }
  return blocks;
}

}  // namespace

Vector LunaParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  const Vector theta = trunk.flatten();
  flat.head(theta.size()) = theta;
  Eigen::Index k = theta.size();
  for (Eigen::Index r = 0; r < heads.rows(); ++r)
    for (Eigen::Index c = 0; c < heads.cols(); ++c) flat[k++] = heads(r, c);
  return flat;
}

void LunaParams::assign(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw DimensionError("LunaParams::assign: size mismatch");
  }
  const auto n_theta = static_cast<Eigen::Index>(trunk.parameter_count());
  trunk.assign(std::span<const double>(flat.data(), static_cast<std::size_t>(n_theta)));
  Eigen::Index k = n_theta;
  for (Eigen::Index r = 0; r < heads.rows(); ++r)
    for (Eigen::Index c = 0; c < heads.cols(); ++c) heads(r, c) = flat[k++];
}

Vector default_epsilon(const Matrix& x, double range_fraction) {
  Vector eps(x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    double range = x.rows() > 0 ? x.col(d).maxCoeff() - x.col(d).minCoeff() : 0.0;
    if (!(range > 0.0)) range = 1.0;
    eps[d] = std::pow(range_fraction * range, 2);
  }
  return eps;
}

Matrix sample_perturbations(const PerturbationConfig& cfg, Eigen::Index n_points) {
  const Eigen::Index dims = cfg.epsilon.size();
  for (Eigen::Index d = 0; d < dims; ++d) {
    if (!(cfg.epsilon[d] > 0.0)) throw std::invalid_argument("perturbation epsilon must be > 0");
  }
  std::mt19937_64 rng(cfg.rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix deltas(n_points, dims);
  for (Eigen::Index n = 0; n < n_points; ++n) {
    for (Eigen::Index d = 0; d < dims; ++d) {
      const double sd = std::sqrt(cfg.epsilon[d]);
      double delta = 0.0;
      do {
        delta = sd * normal(rng);
      } while (std::abs(delta) < kMinDelta);
      deltas(n, d) = delta;
    }
  }
  return deltas;
}

LossAndGradient map_loss(const FeatureMap& trunk, const Vector& head, const Matrix& x,
                         const Vector& y, double gamma, double sigma2) {
  check_batch(trunk, x, y);
  if (static_cast<std::size_t>(head.size()) != trunk.feature_dim() + 1) {
    throw DimensionError("map_loss: head length must be L+1");
  }
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");

  ForwardResult fwd = forward(trunk, x);
  const Matrix design = augment_bias(fwd.features);
  const Vector residual = y - design * head;
  const Vector theta = trunk.flatten();
  const auto n = static_cast<double>(x.rows());

  LossAndGradient out;
  out.loss = 0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) +
             residual.squaredNorm() / (2.0 * sigma2) +
             gamma * (theta.squaredNorm() + head.squaredNorm());

  // d loss / d design = -r w^T / sigma2
  const Matrix design_cot = -(residual * head.transpose()) / sigma2;
  const Vector g_theta = backward(trunk, fwd.tape, drop_bias_column(design_cot)) + 2.0 * gamma * theta;
  const Vector g_head = -(design.transpose() * residual) / sigma2 + 2.0 * gamma * head;

  out.gradient.resize(g_theta.size() + g_head.size());
  out.gradient << g_theta, g_head;
  require_finite(out.loss, out.gradient, "map_loss");
  return out;
}

LossAndGradient marginal_loss(const FeatureMap& trunk, const Matrix& x, const Vector& y,
                              double gamma, double sigma2, double alpha) {
  check_batch(trunk, x, y);
  if (!(sigma2 > 0.0) || !(alpha > 0.0)) throw std::invalid_argument("sigma2, alpha must be > 0");
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");

  ForwardResult fwd = forward(trunk, x);
  const Matrix design = augment_bias(fwd.features);
  const Vector theta = trunk.flatten();

  const BlrPosterior post = fit_posterior(design, y, sigma2, alpha);
  const double evidence = log_marginal_likelihood(design, y, sigma2, alpha);

  LossAndGradient out;
  out.loss = -evidence + gamma * theta.squaredNorm();

  // d evidence / d Phi = ((y - Phi w_N) w_N^T - Phi V_N) / sigma2
  const Vector residual = y - design * post.mean;
  const Matrix d_evidence = (residual * post.mean.transpose() - design * post.covariance) / sigma2;
  out.gradient = backward(trunk, fwd.tape, drop_bias_column(-d_evidence)) + 2.0 * gamma * theta;
  require_finite(out.loss, out.gradient, "marginal_loss");
  return out;
}

LossAndGradient luna_fit_loss(const LunaParams& psi, const Matrix& x, const Vector& y,
                              double gamma, double sigma2) {
  check_batch(psi.trunk, x, y);
  check_heads(psi);
  if (psi.heads.rows() < 1) throw std::invalid_argument("luna_fit_loss: need at least one head");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");

  ForwardResult fwd = forward(psi.trunk, x);
  const Matrix design = augment_bias(fwd.features);
  const auto m = static_cast<double>(psi.heads.rows());
  const auto n = static_cast<double>(x.rows());

  Matrix residual = -design * psi.heads.transpose();  // N x M
  residual.colwise() += y;
  const Vector theta = psi.trunk.flatten();

  LossAndGradient out;
  out.loss = 0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) +
             residual.squaredNorm() / (2.0 * sigma2 * m) +
             gamma * (theta.squaredNorm() + psi.heads.squaredNorm());

  const Matrix design_cot = -(residual * psi.heads) / (sigma2 * m);
  const Vector g_theta =
      backward(psi.trunk, fwd.tape, drop_bias_column(design_cot)) + 2.0 * gamma * theta;
  const Matrix g_heads = -(residual.transpose() * design) / (sigma2 * m) + 2.0 * gamma * psi.heads;

  out.gradient.resize(static_cast<Eigen::Index>(psi.parameter_count()));
  out.gradient.head(g_theta.size()) = g_theta;
  Eigen::Index k = g_theta.size();
  for (Eigen::Index r = 0; r < g_heads.rows(); ++r)
    for (Eigen::Index c = 0; c < g_heads.cols(); ++c) out.gradient[k++] = g_heads(r, c);
  require_finite(out.loss, out.gradient, "luna_fit_loss");
  return out;
}

double cos_sim_sq(const Vector& u, const Vector& v, DiversityDiagnostics* diag) {
  if (u.size() != v.size()) throw DimensionError("cos_sim_sq: length mismatch");
  const double uu = u.squaredNorm();
  const double vv = v.squaredNorm();
  if (std::sqrt(uu) < kMinGradientNorm || std::sqrt(vv) < kMinGradientNorm) {
    if (diag) ++diag->degenerate_pairs;
    return 0.0;
  }
  const double uv = u.dot(v);
  return std::clamp(uv * uv / (uu * vv), 0.0, 1.0);
}

Vector fd_input_gradient(const LunaParams& psi, std::size_t head, const Vector& x,
                         const Vector& deltas) {
  check_heads(psi);
  if (head >= psi.head_count()) throw std::out_of_range("fd_input_gradient: head index");
  if (deltas.size() != x.size()) throw DimensionError("fd_input_gradient: delta length");
  const auto dims = x.size();
  // Row 0 is x, row d+1 is x shifted along dimension d.
  Matrix batch(dims + 1, dims);
  batch.row(0) = x.transpose();
  for (Eigen::Index d = 0; d < dims; ++d) {
    batch.row(d + 1) = x.transpose();
    batch(d + 1, d) += deltas[d];
  }
  const Vector f = design_matrix(psi.trunk, batch) * psi.heads.row(static_cast<Eigen::Index>(head)).transpose();
  Vector g(dims);
  for (Eigen::Index d = 0; d < dims; ++d) g[d] = (f[d + 1] - f[0]) / deltas[d];
  return g;
}

Vector fd_input_gradient(const LunaParams& psi, std::size_t head, const Vector& x,
                         const PerturbationConfig& perturb) {
  const Matrix deltas = sample_perturbations(perturb, 1);
  return fd_input_gradient(psi, head, x, Vector(deltas.row(0).transpose()));
}

double luna_diverse_value(const LunaParams& psi, const Matrix& x, const Matrix& deltas,
                          DiversityDiagnostics* diag, DiversityAggregation agg) {
  check_heads(psi);
  if (psi.heads.rows() < 2) throw std::invalid_argument("diversity needs at least two heads");
  if (x.rows() == 0) return 0.0;
  if (deltas.rows() != x.rows() || deltas.cols() != x.cols()) {
    throw DimensionError("perturbations must have the shape of the batch");
  }
  const Matrix base = features(psi.trunk, x);
  const Matrix hf = psi.heads.rightCols(psi.heads.cols() - 1);
  std::vector<Matrix> per_dim;
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    Matrix xd = x;
    xd.col(d) += deltas.col(d);
    Matrix slope = features(psi.trunk, xd) - base;
    slope.array().colwise() /= deltas.col(d).array();
    per_dim.push_back(slope * hf.transpose());
  }
  const Eigen::Index m = psi.heads.rows();
  double total = 0.0;
  const auto blocks = aggregation_blocks(agg, x.rows(), x.cols());
  for (const auto& [begin, end] : blocks) {
    const Matrix g = head_gradients(per_dim, begin, end);
    const Matrix s = g * g.transpose();
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i + 1; j < m; ++j) {
        if (std::sqrt(s(i, i)) < kMinGradientNorm || std::sqrt(s(j, j)) < kMinGradientNorm) {
          if (diag) ++diag->degenerate_pairs;
          continue;
        }
        total += s(i, j) * s(i, j) / (s(i, i) * s(j, j));
      }
    }
  }
  return total / static_cast<double>(blocks.size());
}

LossAndGradient luna_diverse_loss(const LunaParams& psi, const Matrix& x, const Matrix& deltas,
                                  DiversityDiagnostics* diag, DiversityAggregation agg) {
  check_heads(psi);
  if (psi.heads.rows() < 2) throw std::invalid_argument("diversity needs at least two heads");
  if (static_cast<std::size_t>(x.cols()) != psi.trunk.input_dim()) {
    throw DimensionError("luna_diverse_loss: input dimension mismatch");
  }
  LossAndGradient out;
  out.gradient = Vector::Zero(static_cast<Eigen::Index>(psi.parameter_count()));
  if (x.rows() == 0) return out;

  const DiverseWork work = diverse_forward(psi, x, deltas);
  const Eigen::Index n_points = x.rows();
  const Eigen::Index dims = x.cols();
  const Eigen::Index m = psi.heads.rows();
  const Matrix hf = psi.heads.rightCols(psi.heads.cols() - 1);  // M x L
  const auto blocks = aggregation_blocks(agg, n_points, x.cols());
  const double inv_n = 1.0 / static_cast<double>(blocks.size());

  std::vector<Matrix> per_dim;  // N x M each: d f_m / d x_d at every point
  for (const Matrix& slope : work.slopes) per_dim.push_back(slope * hf.transpose());
  std::vector<Matrix> d_per_dim(static_cast<std::size_t>(dims), Matrix::Zero(n_points, m));

  double total = 0.0;
  for (const auto& [begin, end] : blocks) {
    const Matrix g = head_gradients(per_dim, begin, end);  // M x (points * D)
    const Matrix s = g * g.transpose();
    const Vector p = s.diagonal();
    Matrix c = Matrix::Zero(m, m);  // 2 S_ij / (p_i p_j) on valid pairs
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i + 1; j < m; ++j) {
        if (std::sqrt(p[i]) < kMinGradientNorm || std::sqrt(p[j]) < kMinGradientNorm) {
          if (diag) ++diag->degenerate_pairs;
          continue;
        }
        total += s(i, j) * s(i, j) / (p[i] * p[j]);
        c(i, j) = c(j, i) = 2.0 * s(i, j) / (p[i] * p[j]);
      }
    }
    // d/dg_i sum_{j} cos^2(g_i, g_j) = sum_j c_ij (g_j - (s_ij / p_i) g_i)
    Vector self = c.cwiseProduct(s).rowwise().sum();
    for (Eigen::Index i = 0; i < m; ++i) self[i] = p[i] > 0.0 ? self[i] / p[i] : 0.0;
    Matrix dg = c * g - self.asDiagonal() * g;
    dg *= inv_n;
    for (Eigen::Index n = begin; n < end; ++n)
      for (Eigen::Index d = 0; d < dims; ++d)
        d_per_dim[static_cast<std::size_t>(d)].row(n) = dg.col((n - begin) * dims + d).transpose();
  }
  out.loss = total * inv_n;

  Matrix d_hf = Matrix::Zero(m, hf.cols());
  Matrix d_base = Matrix::Zero(n_points, hf.cols());
  Vector g_theta = Vector::Zero(static_cast<Eigen::Index>(psi.trunk.parameter_count()));
  for (Eigen::Index d = 0; d < dims; ++d) {
    const Matrix& dpd = d_per_dim[static_cast<std::size_t>(d)];
    d_hf += dpd.transpose() * work.slopes[static_cast<std::size_t>(d)];
    Matrix d_shift = dpd * hf;  // cotangent of the slope
    d_shift.array().colwise() /= deltas.col(d).array();
    d_base -= d_shift;
    g_theta += backward(psi.trunk, work.shifted[static_cast<std::size_t>(d)].tape, d_shift);
  }
  g_theta += backward(psi.trunk, work.base.tape, d_base);

  out.gradient.head(g_theta.size()) = g_theta;
  Eigen::Index k = g_theta.size();
  for (Eigen::Index r = 0; r < m; ++r) {
    ++k;  // bias entries do not affect input gradients
    for (Eigen::Index c = 0; c < d_hf.cols(); ++c) out.gradient[k++] = d_hf(r, c);
  }
  require_finite(out.loss, out.gradient, "luna_diverse_loss");
  return out;
}

LossAndGradient luna_diverse_loss(const LunaParams& psi, const Matrix& x,
                                  const PerturbationConfig& perturb, DiversityDiagnostics* diag,
                                  DiversityAggregation agg) {
  return luna_diverse_loss(psi, x, sample_perturbations(perturb, x.rows()), diag, agg);
}

LunaLoss luna_loss(const LunaParams& psi, const Matrix& x, const Vector& y, double gamma,
                   double lambda_eff, double sigma2, const Matrix& deltas,
                   DiversityDiagnostics* diag, DiversityAggregation agg) {
  if (lambda_eff < 0.0) throw std::invalid_argument("lambda_eff must be non-negative");
  const LossAndGradient fit = luna_fit_loss(psi, x, y, gamma, sigma2);
  LunaLoss out;
  out.fit = fit.loss;
  out.gradient = fit.gradient;
  if (psi.heads.rows() >= 2) {
    const LossAndGradient div = luna_diverse_loss(psi, x, deltas, diag, agg);
    out.diverse = div.loss;
    if (lambda_eff > 0.0) out.gradient += lambda_eff * div.gradient;
  }
  out.loss = out.fit + lambda_eff * out.diverse;
  return out;
}

std::string to_string(DiversityAggregation a) {
  switch (a) {
    case DiversityAggregation::PerPoint: return "pointwise";
    case DiversityAggregation::Stacked: return "stacked";
    case DiversityAggregation::Auto: return "auto";
  }
  return "auto";
}

DiversityAggregation parse_aggregation(const std::string& name) {
  if (name == "auto") return DiversityAggregation::Auto;
  if (name == "pointwise") return DiversityAggregation::PerPoint;
  if (name == "stacked") return DiversityAggregation::Stacked;
  throw std::invalid_argument("unknown diversity aggregation '" + name +
                              "' (expected auto, pointwise or stacked)");
}

DiversityAggregation resolve_aggregation(DiversityAggregation a, Eigen::Index input_dim) {
  if (a != DiversityAggregation::Auto) return a;
  return input_dim == 1 ? DiversityAggregation::Stacked : DiversityAggregation::PerPoint;
}

std::string to_string(AnnealKind k) {
  switch (k) {
    case AnnealKind::Sqrt: return "sqrt";
    case AnnealKind::Sigmoid: return "sigmoid";
    case AnnealKind::Tanh: return "tanh";
    case AnnealKind::Constant: return "constant";
  }
  return "constant";
}

AnnealKind parse_anneal(const std::string& name) {
  if (name == "sqrt") return AnnealKind::Sqrt;
  if (name == "sigmoid") return AnnealKind::Sigmoid;
  if (name == "tanh") return AnnealKind::Tanh;
  if (name == "constant") return AnnealKind::Constant;
  throw std::invalid_argument("unknown anneal schedule '" + name + "'");
}

double diversity_batch_scale(std::size_t batch_size, std::size_t head_count) {
  if (head_count < 2) throw std::invalid_argument("diversity scale needs at least two heads");
  const auto m = static_cast<double>(head_count);
  return 2.0 * static_cast<double>(batch_size) / (m * (m - 1.0));
}

double anneal_weight(const AnnealSchedule& sched, double t, double lambda) {
  if (sched.horizon < 1) throw std::invalid_argument("anneal horizon must be >= 1");
  if (sched.scale < 0.0) throw std::invalid_argument("anneal scale must be >= 0");
  if (t < 0.0) throw std::invalid_argument("anneal epoch must be >= 0");
  const double horizon = static_cast<double>(sched.horizon);
  const double u = std::min(t, horizon) / horizon;
  const double c = sched.scale;
  switch (sched.kind) {
    case AnnealKind::Sqrt: return lambda * c * std::sqrt(u);
    case AnnealKind::Sigmoid: return lambda * c / (1.0 + std::exp(-6.0 * u + 3.0));
    case AnnealKind::Tanh: return lambda * c * (std::tanh(6.0 * u - 3.0) + 1.0) / 2.0;
    case AnnealKind::Constant: return lambda * c;
  }
  return lambda * c;
}

}  // namespace nlm
