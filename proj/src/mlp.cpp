#include "esde/mlp.hpp"

#include <cmath>

namespace esde::nn {
namespace {

double apply(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0 ? x : 0.0;
    case Activation::elu: return x > 0 ? x : std::expm1(x);
    case Activation::softplus: return softplus(x);
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

double derivative(Activation a, double x) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0 ? 1.0 : 0.0;
    case Activation::elu: return x > 0 ? 1.0 : std::exp(x);
    case Activation::softplus: return sigmoid(x);
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity" || s == "linear") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "elu") return Activation::elu;
  if (s == "softplus") return Activation::softplus;
  if (s == "tanh") return Activation::tanh;
  throw DomainError("unknown activation '" + s + "'");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mlp::Mlp(const std::vector<int>& sizes, Activation hidden, Rng& rng) : hidden_(hidden) {
  if (sizes.size() < 2) throw DomainError("Mlp: need at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw DomainError("Mlp: layer sizes must be positive");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    Layer layer;
    layer.weight.resize(out, in);
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) layer.weight(r, c) = limit * unit(rng);
    layer.bias = VecX::Zero(out);
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::from_layers(std::vector<Layer> layers, Activation hidden) {
  if (layers.empty()) throw DomainError("Mlp: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows())
      throw DomainError("Mlp: bias/weight shape mismatch");
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
      throw DomainError("Mlp: consecutive layer shapes do not chain");
  }
  Mlp m;
  m.layers_ = std::move(layers);
  m.hidden_ = hidden;
  return m;
}

std::vector<int> Mlp::sizes() const {
  std::vector<int> s;
  if (layers_.empty()) return s;
  s.push_back(static_cast<int>(layers_.front().weight.cols()));
  for (const auto& l : layers_) s.push_back(static_cast<int>(l.weight.rows()));
  return s;
}

MatX Mlp::forward(const MatX& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  MatX a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (a.rows() != layer.weight.cols()) throw DomainError("Mlp::forward: input size mismatch");
    MatX z = layer.weight * a;
    z.colwise() += layer.bias;
    if (cache) {
      cache->inputs.push_back(a);
      cache->pre.push_back(z);
    }
    const bool last = l + 1 == layers_.size();
    a = last ? z : z.unaryExpr([this](double v) { return apply(hidden_, v); }).eval();
  }
  return a;
}

void Mlp::backward(const Cache& cache, const MatX& grad_out, std::vector<Layer>& grads) const {
  MatX delta = grad_out;  // dL/dz for the output layer (linear)
  for (std::size_t k = layers_.size(); k-- > 0;) {
    grads[k].weight.noalias() += delta * cache.inputs[k].transpose();
    grads[k].bias += delta.rowwise().sum();
    if (k == 0) break;
    MatX upstream = layers_[k].weight.transpose() * delta;
    const MatX& z = cache.pre[k - 1];
    delta = upstream.cwiseProduct(z.unaryExpr([this](double v) { return derivative(hidden_, v); }));
  }
}

std::vector<Layer> Mlp::zero_like() const {
  std::vector<Layer> g;
  g.reserve(layers_.size());
  for (const auto& l : layers_)
    g.push_back({MatX::Zero(l.weight.rows(), l.weight.cols()), VecX::Zero(l.bias.size())});
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

VecX Mlp::flatten(const std::vector<Layer>& layers) {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  VecX v(n);
  Eigen::Index off = 0;
  for (const auto& l : layers) {
    v.segment(off, l.weight.size()) = Eigen::Map<const VecX>(l.weight.data(), l.weight.size());
    off += l.weight.size();
    v.segment(off, l.bias.size()) = l.bias;
    off += l.bias.size();
  }
  return v;
}

VecX Mlp::flat() const { return flatten(layers_); }

void Mlp::set_flat(const VecX& v) {
  if (static_cast<std::size_t>(v.size()) != parameter_count())
    throw DomainError("Mlp::set_flat: wrong parameter count");
  Eigen::Index off = 0;
  for (auto& l : layers_) {
    Eigen::Map<VecX>(l.weight.data(), l.weight.size()) = v.segment(off, l.weight.size());
    off += l.weight.size();
    l.bias = v.segment(off, l.bias.size());
    off += l.bias.size();
  }
}

}  // namespace esde::nn
