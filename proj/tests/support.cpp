#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nlm::testing {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

Matrix random_spd(Eigen::Index n, std::mt19937_64& rng) {
  const Matrix m = random_matrix(n, n, rng);
  return m.transpose() * m + Matrix::Identity(n, n);
}

double relative_error(const Vector& a, const Vector& b, double floor) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

FeatureMap random_net(const std::vector<std::size_t>& widths, Activation act,
                      std::mt19937_64& rng, double sd) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i]);
    const auto out = static_cast<Eigen::Index>(widths[i + 1]);
    layers.push_back({random_matrix(in, out, rng, sd), random_matrix(out, 1, rng, sd).col(0)});
  }
  return FeatureMap(std::move(layers), act);
}

LunaParams random_luna(const std::vector<std::size_t>& widths, std::size_t heads, Activation act,
                       std::mt19937_64& rng) {
  LunaParams p;
  p.trunk = random_net(widths, act, rng);
  p.heads = random_matrix(static_cast<Eigen::Index>(heads),
                          static_cast<Eigen::Index>(widths.back() + 1), rng);
  return p;
}

}  // namespace nlm::testing

namespace nlm::testing {

GridMoments grid_posterior_moments(const Matrix& design, const Vector& y, double sigma2,
                                   double alpha, double lo, double hi, double step) {
  if (design.cols() != 3) throw std::invalid_argument("grid oracle expects 3 features");
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  std::vector<double> axis(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) axis[static_cast<std::size_t>(i)] = lo + (i + 0.5) * step;

  // Log density up to a constant; the peak is subtracted before exponentiating.
  auto log_density = [&](double a, double b, double c) {
    double ss = 0.0;
    for (Eigen::Index r = 0; r < design.rows(); ++r) {
      const double e = y[r] - design(r, 0) * a - design(r, 1) * b - design(r, 2) * c;
      ss += e * e;
    }
    return -ss / (2.0 * sigma2) - (a * a + b * b + c * c) / (2.0 * alpha);
  };
  double peak = -std::numeric_limits<double>::infinity();
  for (double a : axis)
    for (double b : axis)
      for (double c : axis) peak = std::max(peak, log_density(a, b, c));

  double z = 0.0;
  Eigen::Vector3d s1 = Eigen::Vector3d::Zero();
  Eigen::Matrix3d s2 = Eigen::Matrix3d::Zero();
  for (double a : axis)
    for (double b : axis)
      for (double c : axis) {
        const double w = std::exp(log_density(a, b, c) - peak);
        const Eigen::Vector3d v(a, b, c);
        z += w;
        s1 += w * v;
        s2 += w * v * v.transpose();
      }
  GridMoments out;
  out.mean = s1 / z;
  out.covariance = s2 / z - out.mean * out.mean.transpose();
  return out;
}

double monte_carlo_log_evidence(const Matrix& design, const Vector& y, double sigma2,
                                double alpha, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(alpha));
  const auto rows = static_cast<double>(design.rows());
  const double log_norm = -0.5 * rows * std::log(2.0 * 3.141592653589793238 * sigma2);
  std::vector<double> logs(n);
  Vector w(design.cols());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = normal(rng);
    logs[i] = log_norm - (y - design * w).squaredNorm() / (2.0 * sigma2);
    top = std::max(top, logs[i]);
  }
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - top);
  return top + std::log(acc / static_cast<double>(n));
}

}  // namespace nlm::testing
