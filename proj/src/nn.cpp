#include "nlm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace nlm {

std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + name + "' (expected relu or tanh)");
}

FeatureMap::FeatureMap(std::vector<Layer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw DimensionError("feature map needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.bias.size() != l.weight.cols()) {
      throw DimensionError("layer " + std::to_string(i) + ": bias length does not match width");
    }
    if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
      throw DimensionError("layer " + std::to_string(i) + ": fan-in does not chain");
    }
  }
}

FeatureMap FeatureMap::initialize(const std::vector<std::size_t>& widths, Activation activation,
                                  std::mt19937_64& rng) {
  if (widths.size() < 2) throw DimensionError("feature map widths need {D, ..., L}");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto fan_in = static_cast<Eigen::Index>(widths[i]);
    const auto fan_out = static_cast<Eigen::Index>(widths[i + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer{Matrix(fan_in, fan_out), Vector::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_in; ++r)
      for (Eigen::Index c = 0; c < fan_out; ++c) layer.weight(r, c) = u(rng);
    layers.push_back(std::move(layer));
  }
  return FeatureMap(std::move(layers), activation);
}

std::size_t FeatureMap::input_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.rows());
}

std::size_t FeatureMap::feature_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.cols());
}

std::vector<std::size_t> FeatureMap::widths() const {
  std::vector<std::size_t> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const Layer& l : layers_) w.push_back(static_cast<std::size_t>(l.weight.cols()));
  return w;
}

std::size_t FeatureMap::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vector FeatureMap::flatten() const {
  Vector theta(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) theta[k++] = l.weight(r, c);
    for (Eigen::Index c = 0; c < l.bias.size(); ++c) theta[k++] = l.bias[c];
  }
  return theta;
}

void FeatureMap::assign(std::span<const double> theta) {
  if (theta.size() != parameter_count()) {
    throw DimensionError("assign: expected " + std::to_string(parameter_count()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  std::size_t k = 0;
  for (Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = theta[k++];
    for (Eigen::Index c = 0; c < l.bias.size(); ++c) l.bias[c] = theta[k++];
  }
}

namespace {

Matrix activate(const Matrix& z, Activation a) {
  if (a == Activation::ReLU) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// d activation / d pre-activation, expressed through the cached values.
Matrix activation_slope(const Matrix& pre, const Matrix& post, Activation a) {
  if (a == Activation::ReLU) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - post.array().square()).matrix();
}

void check_input(const FeatureMap& params, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != params.input_dim()) {
    throw DimensionError("forward: batch has " + std::to_string(x.cols()) +
                         " columns, feature map expects " + std::to_string(params.input_dim()));
  }
}

}  // namespace

ForwardResult forward(const FeatureMap& params, const Matrix& x_batch) {
  check_input(params, x_batch);
  ForwardResult out;
  Matrix h = x_batch;
  for (const Layer& l : params.layers()) {
    Matrix z = h * l.weight;
    z.rowwise() += l.bias.transpose();
    Matrix a = activate(z, params.activation());
    out.tape.inputs.push_back(std::move(h));
    out.tape.pre_activations.push_back(std::move(z));
    h = a;
    out.tape.activations.push_back(std::move(a));
  }
  out.features = std::move(h);
  return out;
}

Matrix features(const FeatureMap& params, const Matrix& x_batch) {
  check_input(params, x_batch);
  Matrix h = x_batch;
  for (const Layer& l : params.layers()) {
    Matrix z = h * l.weight;
    z.rowwise() += l.bias.transpose();
    h = activate(z, params.activation());
  }
  return h;
}

Matrix augment_bias(const Matrix& features) {
  Matrix design(features.rows(), features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  return design;
}

Matrix design_matrix(const FeatureMap& params, const Matrix& x_batch) {
  return augment_bias(features(params, x_batch));
}

BackwardResult backward_full(const FeatureMap& params, const GradientTape& tape,
                             const Matrix& feature_cotangent) {
  const auto& layers = params.layers();
  if (tape.inputs.size() != layers.size() || tape.pre_activations.size() != layers.size()) {
    throw DimensionError("backward: tape depth does not match feature map");
  }
  const Matrix& last = tape.activations.back();
  if (feature_cotangent.rows() != last.rows() || feature_cotangent.cols() != last.cols()) {
    throw DimensionError("backward: cotangent is " + std::to_string(feature_cotangent.rows()) +
                         "x" + std::to_string(feature_cotangent.cols()) + ", tape output is " +
                         std::to_string(last.rows()) + "x" + std::to_string(last.cols()));
  }

  BackwardResult out;
  out.parameter_gradient = Vector::Zero(static_cast<Eigen::Index>(params.parameter_count()));

  // Offsets of each layer's block inside the flat vector.
  std::vector<Eigen::Index> offset(layers.size());
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    offset[i] = k;
    k += layers[i].weight.size() + layers[i].bias.size();
  }

  Matrix upstream = feature_cotangent;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const Layer& l = layers[i];
    Matrix dz = upstream.cwiseProduct(
        activation_slope(tape.pre_activations[i], tape.activations[i], params.activation()));
    const Matrix dw = tape.inputs[i].transpose() * dz;  // fan_in x fan_out
    const Vector db = dz.colwise().sum().transpose();
    Eigen::Index p = offset[i];
    for (Eigen::Index r = 0; r < dw.rows(); ++r)
      for (Eigen::Index c = 0; c < dw.cols(); ++c) out.parameter_gradient[p++] = dw(r, c);
    out.parameter_gradient.segment(p, db.size()) = db;
    upstream = dz * l.weight.transpose();
  }
  out.input_gradient = std::move(upstream);
  return out;
}

Vector backward(const FeatureMap& params, const GradientTape& tape,
                const Matrix& feature_cotangent) {
  return backward_full(params, tape, feature_cotangent).parameter_gradient;
}

FeatureMap scale_last_layer(const FeatureMap& params, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("scale_last_layer: c must be positive");
  FeatureMap scaled = params;
  Layer& last = scaled.layers().back();
  last.weight *= c;
  last.bias *= c;
  return scaled;
}

}  // namespace nlm
