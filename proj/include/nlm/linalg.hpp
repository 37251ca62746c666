#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace nlm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when operand shapes disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a Cholesky factorization meets a non-positive pivot.
class DecompositionError : public std::runtime_error {
 public:
  DecompositionError(std::size_t pivot, double value);
  std::size_t pivot() const { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Lower-triangular factor L of an SPD matrix A = L L^T.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(Matrix lower) : lower_(std::move(lower)) {}

  const Matrix& lower() const { return lower_; }
  Eigen::Index size() const { return lower_.rows(); }

  /// Jitter that had to be added to the diagonal (0 when none).
  double jitter() const { return jitter_; }
  void set_jitter(double j) { jitter_ = j; }

  Matrix reconstruct() const { return lower_ * lower_.transpose(); }

 private:
  Matrix lower_;
  double jitter_ = 0.0;
};

/// Factorizes a symmetric positive definite matrix. On a non-positive pivot
/// the diagonal is inflated by 1e-8 * mean(diag) and the factorization is
/// retried once; a second failure throws DecompositionError.
CholeskyFactor cholesky(const Matrix& a);

/// Factorization without the jitter retry.
CholeskyFactor cholesky_strict(const Matrix& a);

/// Solves A x = b given the factor of A.
Vector solve_spd(const CholeskyFactor& factor, const Vector& b);

/// Column-wise solve, A X = B.
Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b);

/// Solves L x = b (forward substitution only).
Matrix solve_lower(const CholeskyFactor& factor, const Matrix& b);

/// A^{-1} from the factor.
Matrix inverse_spd(const CholeskyFactor& factor);

/// log det A = 2 sum log L_ii.
double logdet_spd(const CholeskyFactor& factor);

bool all_finite(const Matrix& m);

}  // namespace nlm
