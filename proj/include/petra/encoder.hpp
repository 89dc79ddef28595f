#pragma once

#include "petra/types.hpp"

#include <random>

namespace petra {

// Single-layer unidirectional GRU. Gate blocks are stacked in the order
// update (z), reset (r), candidate (n):
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r * h) + bn)
//   h' = (1 - z) * h + z * n
struct EncoderParams {
  Mat input_weight;   // 3H x D
  Mat hidden_weight;  // 3H x H
  RowVec bias;        // 3H

  EncoderParams() = default;
  EncoderParams(Index input_dim, Index hidden_dim);

  Index input_dim() const { return input_weight.cols(); }
  Index hidden_dim() const { return hidden_weight.cols(); }
  Index parameter_count() const { return input_weight.size() + hidden_weight.size() + bias.size(); }

  // Uniform in [-1/sqrt(H), 1/sqrt(H)].
  void init_uniform(std::mt19937_64& rng);
  void set_zero();
};

struct EncoderCache {
  Mat inputs;   // T x D
  Mat hidden;   // T x H, undropped h_1..h_T
  Mat update;   // z
  Mat reset;    // r
  Mat candidate;
  Mat dropout_scale;  // T x H; empty when dropout was not applied
};

// Returns T x H hidden states h_1..h_T from a zero initial state. In training
// mode each row is multiplied by an inverted-dropout mask drawn from `rng`.
Mat encode(const Mat& inputs, const EncoderParams& params, bool training, double dropout,
           std::mt19937_64& rng, EncoderCache* cache = nullptr);
Mat encode(const EmbeddingMatrix& embeddings, const EncoderParams& params, bool training, double dropout,
           std::mt19937_64& rng, EncoderCache* cache = nullptr);

// Backpropagates d(loss)/d(output rows) into parameter gradients.
void encode_backward(const EncoderCache& cache, const EncoderParams& params, const Mat& grad_output,
                     EncoderParams& grads);

}  // namespace petra
