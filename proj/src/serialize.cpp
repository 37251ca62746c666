#include "nlm/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace nlm {

namespace {

void write_values(std::ostream& os, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) os << ' ' << data[i];
}

std::istringstream expect_record(std::istream& is, const std::string& key) {
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream rec(line);
    std::string got;
    rec >> got;
    if (got != key) throw FormatError("model file: expected '" + key + "', found '" + got + "'");
    return rec;
  }
  throw FormatError("model file: missing '" + key + "'");
}

template <class T>
T read_scalar(std::istringstream& rec, const std::string& key) {
  T v{};
  if (!(rec >> v)) throw FormatError("model file: bad value for '" + key + "'");
  return v;
}

Vector read_vector(std::istream& is, const std::string& key) {
  auto rec = expect_record(is, key);
  const auto n = read_scalar<Eigen::Index>(rec, key);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = read_scalar<double>(rec, key);
  return v;
}

Matrix read_matrix(std::istream& is, const std::string& key) {
  auto rec = expect_record(is, key);
  const auto r = read_scalar<Eigen::Index>(rec, key);
  const auto c = read_scalar<Eigen::Index>(rec, key);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = read_scalar<double>(rec, key);
  return m;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    const long v = std::stol(item, &pos);
    if (pos != item.size() || v <= 0) throw std::invalid_argument("bad width '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

double parse_double(const std::string& text) {
  std::size_t pos = 0;
  const double v = std::stod(text, &pos);
  if (pos != text.size()) throw std::invalid_argument("trailing characters");
  return v;
}

long long parse_integer(const std::string& text) {
  std::size_t pos = 0;
  const long long v = std::stoll(text, &pos);
  if (pos != text.size()) throw std::invalid_argument("trailing characters");
  return v;
}

std::size_t parse_count(const std::string& text) {
  const long long v = parse_integer(text);
  if (v < 0) throw std::invalid_argument("must be >= 0");
  return static_cast<std::size_t>(v);
}

}  // namespace

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "objective") cfg.objective = parse_objective(value);
    else if (key == "hidden") cfg.hidden = parse_widths(value);
    else if (key == "activation") cfg.activation = parse_activation(value);
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_integer(value));
    else if (key == "batch_size") cfg.batch_size = parse_count(value);
    else if (key == "learning_rate") cfg.learning_rate = parse_double(value);
    else if (key == "optimizer") cfg.optimizer = parse_optimizer(value);
    else if (key == "gamma") cfg.gamma = parse_double(value);
    else if (key == "lambda") cfg.lambda = parse_double(value);
    else if (key == "alpha") cfg.alpha = parse_double(value);
    else if (key == "sigma2") cfg.sigma2 = parse_double(value);
    else if (key == "heads") cfg.heads = parse_count(value);
    else if (key == "anneal") cfg.anneal = parse_anneal(value);
    else if (key == "restarts") cfg.restarts = parse_count(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_count(value));
    else if (key == "perturb_fraction") cfg.perturb_fraction = parse_double(value);
    else if (key == "aggregation") cfg.aggregation = parse_aggregation(value);
    else throw std::invalid_argument("unknown key");
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what() + " (value '" + value + "')");
  } catch (const std::out_of_range&) {
    throw std::invalid_argument(key + ": value out of range '" + value + "'");
  }
}

TrainConfig parse_description(const std::string& text) {
  TrainConfig cfg;
  std::istringstream ss(text);
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + token + "'");
    apply_setting(cfg, token.substr(0, eq), token.substr(eq + 1));
  }
  return cfg;
}

void write_model(std::ostream& os, const TrainedModel& model, const std::string& comment) {
  std::istringstream lines(comment);
  for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "nlm-model 1\n";
  os << "config " << describe(model.config) << '\n';
  os << "activation " << to_string(model.features.activation()) << '\n';
  os << "widths";
  for (std::size_t w : model.features.widths()) os << ' ' << w;
  os << '\n';
  const Vector theta = model.features.flatten();
  os << "theta " << theta.size();
  write_values(os, theta.data(), theta.size());
  os << "\nsigma2 " << model.posterior.sigma2 << "\nalpha " << model.posterior.alpha;
  os << "\nposterior_mean " << model.posterior.mean.size();
  write_values(os, model.posterior.mean.data(), model.posterior.mean.size());
  const Matrix& cov = model.posterior.covariance;
  os << "\nposterior_cov " << cov.rows() << ' ' << cov.cols();
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j) os << ' ' << cov(i, j);
  const Matrix heads = model.aux_heads ? *model.aux_heads : Matrix(0, 0);
  os << "\nheads " << heads.rows() << ' ' << heads.cols();
  for (Eigen::Index i = 0; i < heads.rows(); ++i)
    for (Eigen::Index j = 0; j < heads.cols(); ++j) os << ' ' << heads(i, j);
  os << "\nepsilon " << model.epsilon.size();
  write_values(os, model.epsilon.data(), model.epsilon.size());
  os << "\ndiversity " << model.diversity_score << '\n';
  if (!os) throw std::runtime_error("model file: write failed");
}

TrainedModel read_model(std::istream& is) {
  TrainedModel m;
  {
    auto rec = expect_record(is, "nlm-model");
    if (read_scalar<int>(rec, "nlm-model") != 1) throw FormatError("model file: unsupported version");
  }
  {
    auto rec = expect_record(is, "config");
    std::string rest;
    std::getline(rec, rest);
    try {
      m.config = parse_description(rest);
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("model file: ") + e.what());
    }
  }
  Activation act;
  {
    auto rec = expect_record(is, "activation");
    try {
      act = parse_activation(read_scalar<std::string>(rec, "activation"));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("model file: ") + e.what());
    }
  }
  std::vector<std::size_t> widths;
  {
    auto rec = expect_record(is, "widths");
    for (std::size_t w; rec >> w;) widths.push_back(w);
    if (widths.size() < 2) throw FormatError("model file: widths needs at least two entries");
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i]);
    const auto out = static_cast<Eigen::Index>(widths[i + 1]);
    layers.push_back({Matrix::Zero(in, out), Vector::Zero(out)});
  }
  m.features = FeatureMap(std::move(layers), act);
  const Vector theta = read_vector(is, "theta");
  if (static_cast<std::size_t>(theta.size()) != m.features.parameter_count())
    throw FormatError("model file: theta length does not match widths");
  m.features.assign(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
  {
    auto rec = expect_record(is, "sigma2");
    m.posterior.sigma2 = read_scalar<double>(rec, "sigma2");
  }
  {
    auto rec = expect_record(is, "alpha");
    m.posterior.alpha = read_scalar<double>(rec, "alpha");
  }
  m.posterior.mean = read_vector(is, "posterior_mean");
  m.posterior.covariance = read_matrix(is, "posterior_cov");
  const auto dim = static_cast<Eigen::Index>(m.features.feature_dim() + 1);
  if (m.posterior.mean.size() != dim || m.posterior.covariance.rows() != dim ||
      m.posterior.covariance.cols() != dim)
    throw FormatError("model file: posterior size does not match feature dimension");
  Matrix heads = read_matrix(is, "heads");
  if (heads.rows() > 0) {
    if (heads.cols() != dim) throw FormatError("model file: heads width mismatch");
    m.aux_heads = std::move(heads);
  }
  m.epsilon = read_vector(is, "epsilon");
  {
    auto rec = expect_record(is, "diversity");
    m.diversity_score = read_scalar<double>(rec, "diversity");
  }
  return m;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model,
                const std::string& comment) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_model(os, model, comment);
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open model file '" + path.string() + "'");
  return read_model(is);
}

}  // namespace nlm
