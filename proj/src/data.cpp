#include "nlm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace nlm {

ParseError::ParseError(const std::string& path, std::size_t row, std::size_t column,
                       const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(row) + ":" + std::to_string(column) + ": " +
                         what),
      row_(row),
      column_(column) {}

double cubic(double x) { return x * x * x; }

double squiggle(double x) { return x * x * x + 20.0 * std::exp(-x * x) * std::sin(10.0 * x); }

namespace {

Split make_split(const std::vector<double>& xs, double (*f)(double), double noise_sd,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  Split s;
  const auto n = static_cast<Eigen::Index>(xs.size());
  s.x.resize(n, 1);
  s.y.resize(n);
  s.y_true.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = xs[static_cast<std::size_t>(i)];
    s.x(i, 0) = x;
    s.y_true[i] = f(x);
    s.y[i] = s.y_true[i] + noise_sd * noise(rng);
  }
  return s;
}

std::vector<double> draw_outside_gap(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(2.0, 4.0);
  std::bernoulli_distribution side(0.5);
  std::vector<double> xs(n);
  for (double& x : xs) {
    const double m = mag(rng);
    x = side(rng) ? m : -m;
  }
  return xs;
}

std::vector<double> draw_inside_gap(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> xs(n);
  for (double& x : xs) x = u(rng);
  return xs;
}

void number_rows(Split& s, std::size_t& next) {
  s.rows.resize(static_cast<std::size_t>(s.size()));
  for (auto& r : s.rows) r = next++;
}

GapDataset gen_synthetic(const std::string& name, double (*f)(double), std::size_t n_train,
                         std::size_t n_test, double noise_sd, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument(name + ": counts must be >= 1");
  if (noise_sd < 0.0) throw std::invalid_argument(name + ": noise_sd must be >= 0");
  std::mt19937_64 rng(seed);
  GapDataset d;
  d.name = name;
  d.seed = seed;
  d.input_dim = 1;
  d.gap_dim = 0;

  const std::size_t n_val = n_train / 5;
  std::vector<double> train_x = draw_outside_gap(n_train, rng);
  std::vector<double> val_x(train_x.end() - static_cast<std::ptrdiff_t>(n_val), train_x.end());
  train_x.resize(n_train - n_val);
  const std::vector<double> test_x = draw_outside_gap(n_test, rng);
  const std::vector<double> gap_x = draw_inside_gap(n_test, rng);

  d.train = make_split(train_x, f, noise_sd, rng);
  d.val = make_split(val_x, f, noise_sd, rng);
  d.test_not_gap = make_split(test_x, f, noise_sd, rng);
  d.test_gap = make_split(gap_x, f, noise_sd, rng);
  std::size_t next = 0;
  for (Split* s : {&d.train, &d.val, &d.test_not_gap, &d.test_gap}) number_rows(*s, next);
  return d;
}

Split gather(const Matrix& x, const Vector& y, const std::vector<std::size_t>& rows) {
  Split s;
  const auto n = static_cast<Eigen::Index>(rows.size());
  s.x.resize(n, x.cols());
  s.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    s.x.row(i) = x.row(r);
    s.y[i] = y[r];
  }
  s.rows = rows;
  return s;
}

bool parse_double(std::string_view token, double& out) {
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  if (line.find(',') != std::string::npos) {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
      const auto b = f.find_first_not_of(" \t\r");
      const auto e = f.find_last_not_of(" \t\r");
      fields.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
  } else {
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) fields.push_back(f);
  }
  return fields;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

Split apply(const Split& s, const Standardization& st) {
  Split out = s;
  out.x = standardize_inputs(s.x, st);
  out.y = (s.y.array() - st.y_mean) / st.y_std;
  if (s.y_true.size() > 0) out.y_true = (s.y_true.array() - st.y_mean) / st.y_std;
  return out;
}

Split revert(const Split& s, const Standardization& st) {
  if (!st.active) return s;
  Split out = s;
  out.x = (s.x.array().rowwise() * st.x_std.transpose().array()).rowwise() +
          st.x_mean.transpose().array();
  out.y = destandardize_targets(s.y, st);
  if (s.y_true.size() > 0) out.y_true = destandardize_targets(s.y_true, st);
  return out;
}

void write_split(const std::filesystem::path& path, const Split& s, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!comment.empty()) out << "# " << comment << "\n";
  const bool truth = s.y_true.size() == s.size() && s.size() > 0;
  for (Eigen::Index d = 0; d < s.x.cols(); ++d) out << "x" << d << ",";
  out << "y" << (truth ? ",y_true" : "") << "\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (Eigen::Index d = 0; d < s.x.cols(); ++d) out << format_number(s.x(i, d)) << ",";
    out << format_number(s.y[i]);
    if (truth) out << "," << format_number(s.y_true[i]);
    out << "\n";
  }
}

Split read_split(const std::filesystem::path& path, Eigen::Index dims) {
  const Table t = read_table(path);
  Split s;
  const bool truth = !t.header.empty() && t.header.back() == "y_true";
  const Eigen::Index expected = dims + 1 + (truth ? 1 : 0);
  if (t.values.rows() > 0 && t.values.cols() != expected) {
    throw ParseError(path.string(), 1, static_cast<std::size_t>(t.values.cols()),
                     "unexpected column count");
  }
  s.x = t.values.rows() > 0 ? Matrix(t.values.leftCols(dims)) : Matrix(0, dims);
  s.y = t.values.rows() > 0 ? Vector(t.values.col(dims)) : Vector(0);
  if (truth && t.values.rows() > 0) s.y_true = t.values.col(dims + 1);
  s.rows.resize(static_cast<std::size_t>(s.size()));
  std::iota(s.rows.begin(), s.rows.end(), 0);
  return s;
}

}  // namespace

GapDataset gen_cubic_gap(std::size_t n_train, std::size_t n_test, double noise_sd,
                         std::uint64_t seed) {
  return gen_synthetic("cubic", &cubic, n_train, n_test, noise_sd, seed);
}

GapDataset gen_squiggle_gap(std::size_t n_train, std::size_t n_test, double noise_sd,
                            std::uint64_t seed) {
  return gen_synthetic("squiggle", &squiggle, n_train, n_test, noise_sd, seed);
}

GapDataset make_gap_split(const Matrix& x, const Vector& y, std::size_t gap_dim,
                          std::uint64_t seed, const std::string& name) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (static_cast<Eigen::Index>(n) != y.size()) throw DimensionError("make_gap_split: X/y rows");
  if (gap_dim >= static_cast<std::size_t>(x.cols())) {
    throw std::invalid_argument("make_gap_split: gap_dim " + std::to_string(gap_dim) +
                                " out of range for " + std::to_string(x.cols()) + " columns");
  }
  if (n < 3) throw std::invalid_argument("make_gap_split: need at least 3 rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto col = static_cast<Eigen::Index>(gap_dim);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x(static_cast<Eigen::Index>(a), col) < x(static_cast<Eigen::Index>(b), col);
  });

  const std::size_t third = n / 3;
  std::vector<std::size_t> gap(order.begin() + static_cast<std::ptrdiff_t>(third),
                               order.begin() + static_cast<std::ptrdiff_t>(2 * third));
  std::vector<std::size_t> rest(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(third));
  rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(2 * third), order.end());

  std::mt19937_64 rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto tenth = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(rest.size())));
  std::vector<std::size_t> train(rest.begin(), rest.end() - static_cast<std::ptrdiff_t>(2 * tenth));
  std::vector<std::size_t> test(rest.end() - static_cast<std::ptrdiff_t>(2 * tenth),
                                rest.end() - static_cast<std::ptrdiff_t>(tenth));
  std::vector<std::size_t> val(rest.end() - static_cast<std::ptrdiff_t>(tenth), rest.end());

  GapDataset d;
  d.name = name;
  d.seed = seed;
  d.gap_dim = gap_dim;
  d.input_dim = x.cols();
  d.train = gather(x, y, train);
  d.val = gather(x, y, val);
  d.test_not_gap = gather(x, y, test);
  d.test_gap = gather(x, y, gap);
  return d;
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table t;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::vector<std::string> fields = split_fields(line);
    std::vector<double> values(fields.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (!parse_double(fields[i], values[i]) && bad == 0) bad = i + 1;
    }
    if (first_content) {
      first_content = false;
      width = fields.size();
      if (bad != 0) {
        t.header = fields;
        continue;
      }
    }
    if (bad != 0) {
      throw ParseError(path.string(), line_no, bad, "not a number: '" + fields[bad - 1] + "'");
    }
    if (fields.size() != width) {
      throw ParseError(path.string(), line_no, fields.size(),
                       "ragged row: expected " + std::to_string(width) + " columns");
    }
    rows.push_back(std::move(values));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return t;
}

XyTable load_table(const std::filesystem::path& path) {
  const Table t = read_table(path);
  if (t.values.cols() < 2 && t.values.rows() > 0) {
    throw ParseError(path.string(), 1, 1, "need at least one input column and a target");
  }
  XyTable out;
  const Eigen::Index d = std::max<Eigen::Index>(t.values.cols() - 1, 0);
  out.x = t.values.leftCols(d);
  out.y = t.values.rows() > 0 ? Vector(t.values.col(d)) : Vector(0);
  return out;
}

void write_table(const std::filesystem::path& path, const Matrix& x, const Vector& y,
                 const std::string& comment) {
  Split s;
  s.x = x;
  s.y = y;
  write_split(path, s, comment);
}

Matrix standardize_inputs(const Matrix& x, const Standardization& st) {
  if (!st.active) return x;
  return ((x.rowwise() - st.x_mean.transpose()).array().rowwise() / st.x_std.transpose().array())
      .matrix();
}

GapDataset standardize(const GapDataset& data) {
  if (data.stats.active) return data;
  Standardization st;
  st.active = true;
  const Matrix& x = data.train.x;
  const auto n = static_cast<double>(x.rows());
  st.x_mean = x.rows() > 0 ? Vector(x.colwise().mean().transpose()) : Vector::Zero(x.cols());
  st.x_std = Vector::Ones(x.cols());
  for (Eigen::Index d = 0; d < x.cols() && x.rows() > 0; ++d) {
    const double sd = std::sqrt((x.col(d).array() - st.x_mean[d]).square().sum() / n);
    if (sd > 0.0 && std::isfinite(sd)) {
      st.x_std[d] = sd;
    } else {
      st.x_mean[d] = 0.0;  // constant columns pass through unchanged
    }
  }
  if (data.train.y.size() > 0) {
    st.y_mean = data.train.y.mean();
    const double sd = std::sqrt((data.train.y.array() - st.y_mean).square().sum() / n);
    st.y_std = sd > 0.0 && std::isfinite(sd) ? sd : 1.0;
  }
  GapDataset out = data;
  out.stats = st;
  out.train = apply(data.train, st);
  out.val = apply(data.val, st);
  out.test_not_gap = apply(data.test_not_gap, st);
  out.test_gap = apply(data.test_gap, st);
  return out;
}

Vector destandardize_targets(const Vector& y, const Standardization& st) {
  if (!st.active) return y;
  return (y.array() * st.y_std + st.y_mean).matrix();
}

PredictiveDistribution destandardize(const PredictiveDistribution& pred,
                                     const Standardization& st) {
  if (!st.active) return pred;
  const double s2 = st.y_std * st.y_std;
  PredictiveDistribution out;
  out.mean = destandardize_targets(pred.mean, st);
  out.total_var = pred.total_var * s2;
  out.epistemic_var = pred.epistemic_var * s2;
  out.noise_var = pred.noise_var * s2;
  return out;
}

std::string manifest_text(const GapDataset& d) {
  std::ostringstream os;
  os << "name = " << d.name << "\n";
  os << "seed = " << d.seed << "\n";
  os << "input_dim = " << d.input_dim << "\n";
  os << "gap_dim = " << (d.gap_dim ? std::to_string(*d.gap_dim) : std::string("none")) << "\n";
  os << "standardize = " << (d.stats.active ? 1 : 0) << "\n";
  os << "n_train = " << d.train.size() << "\n";
  os << "n_val = " << d.val.size() << "\n";
  os << "n_test_not_gap = " << d.test_not_gap.size() << "\n";
  os << "n_test_gap = " << d.test_gap.size() << "\n";
  return os.str();
}

void save_dataset(const std::filesystem::path& dir, const GapDataset& d,
                  const std::string& comment) {
  std::filesystem::create_directories(dir);
  write_split(dir / "train.csv", revert(d.train, d.stats), comment);
  write_split(dir / "val.csv", revert(d.val, d.stats), comment);
  write_split(dir / "test_not_gap.csv", revert(d.test_not_gap, d.stats), comment);
  write_split(dir / "test_gap.csv", revert(d.test_gap, d.stats), comment);
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  if (!comment.empty()) out << "# " << comment << "\n";
  out << manifest_text(d);
}

GapDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw std::runtime_error("missing manifest in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  GapDataset d;
  d.name = kv["name"];
  d.seed = kv.count("seed") ? std::stoull(kv["seed"]) : 0;
  d.input_dim = kv.count("input_dim") ? std::stol(kv["input_dim"]) : 1;
  if (kv.count("gap_dim") && kv["gap_dim"] != "none") d.gap_dim = std::stoul(kv["gap_dim"]);
  d.train = read_split(dir / "train.csv", d.input_dim);
  d.val = read_split(dir / "val.csv", d.input_dim);
  d.test_not_gap = read_split(dir / "test_not_gap.csv", d.input_dim);
  d.test_gap = read_split(dir / "test_gap.csv", d.input_dim);
  if (kv["standardize"] == "1") d = standardize(d);
  return d;
}

}  // namespace nlm
