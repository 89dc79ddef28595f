#include "petra/mlp.hpp"

#include "petra/errors.hpp"
#include "petra/flops.hpp"

#include <cmath>

namespace petra {

Mlp::Mlp(const std::vector<Index>& widths) {
  if (widths.size() < 2) throw ShapeError("an MLP needs at least an input and an output width");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers_.push_back({Mat::Zero(widths[l + 1], widths[l]), RowVec::Zero(widths[l + 1])});
  }
}

Mat Mlp::forward(const Mat& x, Cache* cache) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Mat a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Mat z = a * layer.weight.transpose();
    z.rowwise() += layer.bias;
    flops::add(static_cast<std::uint64_t>(a.rows() * layer.weight.size()));
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    a = l + 1 < layers_.size() ? Mat(z.cwiseMax(0.0)) : std::move(z);
  }
  return a;
}

Mat Mlp::backward(const Cache& cache, const Mat& grad_out, Mlp& grads) const {
  Mat g = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) g = g.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    auto& gl = grads.layers_[l];
    gl.weight.noalias() += g.transpose() * cache.inputs[l];
    gl.bias += g.colwise().sum();
    g = g * layers_[l].weight;
  }
  return g;
}

void Mlp::init_uniform(std::mt19937_64& rng) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = dist(rng);
  }
}

void Mlp::set_zero() {
  for (auto& layer : layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

Index Mlp::parameter_count() const {
  Index n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

}  // namespace petra
