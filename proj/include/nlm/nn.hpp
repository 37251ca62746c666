#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nlm/linalg.hpp"

namespace nlm {

enum class Activation { ReLU, Tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// One affine layer, out = in * weight + bias, with weight stored (in x out).
struct Layer {
  Matrix weight;
  Vector bias;
};

/// Deterministic feed-forward feature map phi: R^D -> R^L. The activation is
/// applied after every layer, so features are post-activation values of the
/// last layer.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::vector<Layer> layers, Activation activation);

  /// Fan-based uniform initialization; biases start at zero.
  /// `widths` is {D, h_1, ..., L}.
  static FeatureMap initialize(const std::vector<std::size_t>& widths, Activation activation,
                               std::mt19937_64& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Activation activation() const { return activation_; }

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::vector<std::size_t> widths() const;

  /// Number of entries in the flat parameter vector theta.
  std::size_t parameter_count() const;

  /// Flat view: for each layer, weight entries row-major then bias entries.
  Vector flatten() const;
  void assign(std::span<const double> theta);

 private:
  std::vector<Layer> layers_;
  Activation activation_ = Activation::ReLU;
};

/// Cached per-layer values from a forward pass over a batch.
struct GradientTape {
  std::vector<Matrix> inputs;           // input to each layer (N x fan_in)
  std::vector<Matrix> pre_activations;  // N x fan_out
  std::vector<Matrix> activations;      // N x fan_out
};

struct ForwardResult {
  Matrix features;  // N x L
  GradientTape tape;
};

ForwardResult forward(const FeatureMap& params, const Matrix& x_batch);

/// Forward pass without recording the tape.
Matrix features(const FeatureMap& params, const Matrix& x_batch);

/// Prepends a column of ones, producing the design matrix.
Matrix augment_bias(const Matrix& features);

/// Design matrix for a batch: augment_bias(features(params, x)).
Matrix design_matrix(const FeatureMap& params, const Matrix& x_batch);

/// Gradient of a scalar loss with respect to the flat parameter vector, given
/// dLoss/dFeatures for the batch that produced `tape`.
Vector backward(const FeatureMap& params, const GradientTape& tape,
                const Matrix& feature_cotangent);

/// Same as backward but also returns dLoss/dInputs (N x D).
struct BackwardResult {
  Vector parameter_gradient;
  Matrix input_gradient;
};
BackwardResult backward_full(const FeatureMap& params, const GradientTape& tape,
                             const Matrix& feature_cotangent);

/// Multiplies the last layer's weight and bias entries by c > 0.
FeatureMap scale_last_layer(const FeatureMap& params, double c);

}  // namespace nlm
