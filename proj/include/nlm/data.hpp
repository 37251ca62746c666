#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlm/blr.hpp"
#include "nlm/linalg.hpp"

namespace nlm {

/// Raised for malformed delimited tables; carries the 1-based location.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t row, std::size_t column, const std::string& what);
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

struct Split {
  Matrix x;
  Vector y;
  Vector y_true;                  // noiseless targets when known, else empty
  std::vector<std::size_t> rows;  // source row indices

  Eigen::Index size() const { return x.rows(); }
};

/// Per-column z-score fitted on the training split.
struct Standardization {
  bool active = false;
  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
};

struct GapDataset {
  std::string name;
  Split train;
  Split val;
  Split test_not_gap;
  Split test_gap;
  Eigen::Index input_dim = 0;
  Standardization stats;
  std::optional<std::size_t> gap_dim;
  std::uint64_t seed = 0;
};

double cubic(double x);
double squiggle(double x);

/// x uniform on [-4,-2] U [2,4] (test_gap: uniform on (-2,2)), y = x^3 + noise.
/// 20% of the n_train generated training points are held out as validation.
GapDataset gen_cubic_gap(std::size_t n_train = 100, std::size_t n_test = 100,
                         double noise_sd = 3.0, std::uint64_t seed = 0);

/// Same layout with y = x^3 + 20 exp(-x^2) sin(10 x) + noise.
GapDataset gen_squiggle_gap(std::size_t n_train = 100, std::size_t n_test = 100,
                            double noise_sd = 3.0, std::uint64_t seed = 0);

/// Sorts rows by `gap_dim`, moves the middle floor(N/3) rows into test_gap and
/// splits the rest 80/10/10 into train / test_not_gap / val.
GapDataset make_gap_split(const Matrix& x, const Vector& y, std::size_t gap_dim,
                          std::uint64_t seed, const std::string& name = "table");

struct Table {
  std::vector<std::string> header;  // empty when the file had none
  Matrix values;
};

/// Comma- or whitespace-delimited numeric table; '#' lines are comments and a
/// single non-numeric first line is treated as a header.
Table read_table(const std::filesystem::path& path);

struct XyTable {
  Matrix x;
  Vector y;
};

/// Last column is the target.
XyTable load_table(const std::filesystem::path& path);

void write_table(const std::filesystem::path& path, const Matrix& x, const Vector& y,
                 const std::string& comment = "");

/// Fits the z-score on train and applies it to every split. Constant input
/// columns are left unchanged.
GapDataset standardize(const GapDataset& data);

/// Maps a predictive in standardized target units back to data units.
PredictiveDistribution destandardize(const PredictiveDistribution& pred,
                                     const Standardization& stats);
Vector destandardize_targets(const Vector& y, const Standardization& stats);
Matrix standardize_inputs(const Matrix& x, const Standardization& stats);

/// Writes train/val/test_not_gap/test_gap tables plus manifest.txt.
void save_dataset(const std::filesystem::path& dir, const GapDataset& data,
                  const std::string& comment);
GapDataset load_dataset(const std::filesystem::path& dir);

std::string manifest_text(const GapDataset& data);

}  // namespace nlm
