#pragma once

#include "petra/types.hpp"

#include <random>
#include <vector>

namespace petra {

struct Linear {
  Mat weight;   // out x in
  RowVec bias;  // out
};

// Feed-forward stack: ReLU on hidden layers, no nonlinearity on the output.
// Rows of the input matrix are independent examples.
class Mlp {
 public:
  struct Cache {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  // widths = {in, hidden..., out}
  explicit Mlp(const std::vector<Index>& widths);

  Index input_dim() const { return layers_.front().weight.cols(); }
  Index output_dim() const { return layers_.back().weight.rows(); }
  std::size_t depth() const { return layers_.size(); }

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into `grads` and returns d(loss)/d(input).
  Mat backward(const Cache& cache, const Mat& grad_out, Mlp& grads) const;

  void init_uniform(std::mt19937_64& rng);
  void set_zero();
  Index parameter_count() const;

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

}  // namespace petra
