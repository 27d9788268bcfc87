#pragma once

#include "esde/rng.hpp"
#include "esde/types.hpp"

#include <string>
#include <vector>

namespace esde::nn {

enum class Activation { identity, relu, elu, softplus, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

double softplus(double x);
double sigmoid(double x);

struct Layer {
  MatX weight;  // out x in
  VecX bias;
};

/// Fully connected network; hidden layers share one activation, the output
/// layer is linear. Samples are columns.
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {inputs, hidden..., outputs}; Glorot-uniform weights, zero biases.
  Mlp(const std::vector<int>& sizes, Activation hidden, Rng& rng);

  struct Cache {
    std::vector<MatX> inputs;  // input to each layer
    std::vector<MatX> pre;     // pre-activation of each layer
  };

  MatX forward(const MatX& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients for dL/d(output) = grad_out into `grads`
  /// (same shapes as layers()).
  void backward(const Cache& cache, const MatX& grad_out, std::vector<Layer>& grads) const;

  std::vector<Layer> zero_like() const;
  std::size_t parameter_count() const;
  VecX flat() const;
  void set_flat(const VecX& v);
  static VecX flatten(const std::vector<Layer>& layers);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Activation hidden_activation() const { return hidden_; }
  std::vector<int> sizes() const;

  static Mlp from_layers(std::vector<Layer> layers, Activation hidden);

 private:
  std::vector<Layer> layers_;
  Activation hidden_ = Activation::relu;
};

}  // namespace esde::nn
