#include "nlm/linalg.hpp"

#include <cmath>

namespace nlm {

DecompositionError::DecompositionError(std::size_t pivot, double value)
    : std::runtime_error("cholesky: non-positive pivot " + std::to_string(value) +
                         " at index " + std::to_string(pivot)),
      pivot_(pivot) {}

namespace {

void check_square(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("cholesky: matrix is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ", expected square");
  }
}

// Column-oriented Cholesky-Banachiewicz. Reads only the lower triangle.
Matrix factorize(const Matrix& a) {
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw DecompositionError(static_cast<std::size_t>(j), d);
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

}  // namespace

CholeskyFactor cholesky_strict(const Matrix& a) {
  check_square(a);
  return CholeskyFactor(factorize(a));
}

CholeskyFactor cholesky(const Matrix& a) {
  check_square(a);
  try {
    return CholeskyFactor(factorize(a));
  } catch (const DecompositionError&) {
    if (a.rows() == 0) throw;
    const double jitter = 1e-8 * a.diagonal().mean();
    if (!(jitter > 0.0)) throw;
    Matrix shifted = a;
    shifted.diagonal().array() += jitter;
    CholeskyFactor f(factorize(shifted));
    f.set_jitter(jitter);
    return f;
  }
}

Matrix solve_lower(const CholeskyFactor& factor, const Matrix& b) {
  if (b.rows() != factor.size()) {
    throw DimensionError("solve: factor has size " + std::to_string(factor.size()) +
                         " but right-hand side has " + std::to_string(b.rows()) + " rows");
  }
  return factor.lower().triangularView<Eigen::Lower>().solve(b);
}

Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b) {
  Matrix z = solve_lower(factor, b);
  return factor.lower().transpose().triangularView<Eigen::Upper>().solve(z);
}

Vector solve_spd(const CholeskyFactor& factor, const Vector& b) {
  Matrix x = solve_spd(factor, Matrix(b));
  return x.col(0);
}

Matrix inverse_spd(const CholeskyFactor& factor) {
  return solve_spd(factor, Matrix(Matrix::Identity(factor.size(), factor.size())));
}

double logdet_spd(const CholeskyFactor& factor) {
  return 2.0 * factor.lower().diagonal().array().log().sum();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace nlm
