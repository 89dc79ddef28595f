#include "petra/encoder.hpp"

#include "petra/errors.hpp"
#include "petra/flops.hpp"

#include <cmath>

namespace petra {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EncoderParams::EncoderParams(Index input_dim, Index hidden_dim)
    : input_weight(Mat::Zero(3 * hidden_dim, input_dim)),
      hidden_weight(Mat::Zero(3 * hidden_dim, hidden_dim)),
      bias(RowVec::Zero(3 * hidden_dim)) {}

void EncoderParams::init_uniform(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < input_weight.size(); ++i) input_weight.data()[i] = dist(rng);
  for (Index i = 0; i < hidden_weight.size(); ++i) hidden_weight.data()[i] = dist(rng);
  for (Index i = 0; i < bias.size(); ++i) bias(i) = dist(rng);
}

void EncoderParams::set_zero() {
  input_weight.setZero();
  hidden_weight.setZero();
  bias.setZero();
}

Mat encode(const EmbeddingMatrix& embeddings, const EncoderParams& params, bool training, double dropout,
           std::mt19937_64& rng, EncoderCache* cache) {
  return encode(Mat(embeddings.cast<double>()), params, training, dropout, rng, cache);
}

Mat encode(const Mat& inputs, const EncoderParams& params, bool training, double dropout, std::mt19937_64& rng,
           EncoderCache* cache) {
  if (inputs.cols() != params.input_dim()) {
    throw ShapeError("encoder expects input dimension " + std::to_string(params.input_dim()) + ", got " +
                     std::to_string(inputs.cols()));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
  const Index T = inputs.rows();
  const Index H = params.hidden_dim();

  // Input projections for every step at once.
  Mat projected = inputs * params.input_weight.transpose();
  projected.rowwise() += params.bias;
  flops::add(static_cast<std::uint64_t>(T * params.input_weight.size()));

  Mat hidden(T, H), update(T, H), reset(T, H), candidate(T, H);
  RowVec h = RowVec::Zero(H);
  const auto Uz = params.hidden_weight.topRows(H);
  const auto Ur = params.hidden_weight.middleRows(H, H);
  const auto Un = params.hidden_weight.bottomRows(H);
  for (Index t = 0; t < T; ++t) {
    const auto px = projected.row(t);
    RowVec z = (px.segment(0, H) + h * Uz.transpose()).unaryExpr(&sigmoid);
    RowVec r = (px.segment(H, H) + h * Ur.transpose()).unaryExpr(&sigmoid);
    RowVec n = (px.segment(2 * H, H) + r.cwiseProduct(h) * Un.transpose()).array().tanh().matrix();
    flops::add(static_cast<std::uint64_t>(3 * H * H));
    h = (RowVec::Ones(H) - z).cwiseProduct(h) + z.cwiseProduct(n);
    hidden.row(t) = h;
    update.row(t) = z;
    reset.row(t) = r;
    candidate.row(t) = n;
  }

  Mat output = hidden;
  Mat scale;
  if (training && dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - dropout);
    scale.resize(T, H);
    const double inv = 1.0 / (1.0 - dropout);
    for (Index i = 0; i < scale.size(); ++i) scale.data()[i] = keep(rng) ? inv : 0.0;
    output = output.cwiseProduct(scale);
  }
  if (cache) {
    cache->inputs = inputs;
    cache->hidden = std::move(hidden);
    cache->update = std::move(update);
    cache->reset = std::move(reset);
    cache->candidate = std::move(candidate);
    cache->dropout_scale = std::move(scale);
  }
  return output;
}

void encode_backward(const EncoderCache& cache, const EncoderParams& params, const Mat& grad_output,
                     EncoderParams& grads) {
  const Index T = cache.hidden.rows();
  const Index H = params.hidden_dim();
  const Mat grad_hidden =
      cache.dropout_scale.size() ? Mat(grad_output.cwiseProduct(cache.dropout_scale)) : grad_output;

  // Pre-activation gradients for all three gate blocks, per step.
  Mat grad_pre(T, 3 * H);
  Mat gated_prev(T, H);  // r * h_{t-1}
  RowVec carry = RowVec::Zero(H);
  const auto Uz = params.hidden_weight.topRows(H);
  const auto Ur = params.hidden_weight.middleRows(H, H);
  const auto Un = params.hidden_weight.bottomRows(H);
  for (Index t = T; t-- > 0;) {
    const RowVec prev = t > 0 ? RowVec(cache.hidden.row(t - 1)) : RowVec::Zero(H);
    const auto z = cache.update.row(t);
    const auto r = cache.reset.row(t);
    const auto n = cache.candidate.row(t);
    const RowVec gh = grad_hidden.row(t) + carry;

    const RowVec gz = gh.cwiseProduct(n - prev);
    const RowVec gn = gh.cwiseProduct(z);
    RowVec gprev = gh.cwiseProduct(RowVec::Ones(H) - z);

    const RowVec gan = gn.cwiseProduct(RowVec::Ones(H) - n.cwiseProduct(n));
    const RowVec grh = gan * Un;
    const RowVec gr = grh.cwiseProduct(prev);
    gprev += grh.cwiseProduct(r);

    const RowVec gaz = gz.cwiseProduct(z.cwiseProduct(RowVec::Ones(H) - z));
    const RowVec gar = gr.cwiseProduct(r.cwiseProduct(RowVec::Ones(H) - r));
    gprev += gaz * Uz + gar * Ur;

    grad_pre.row(t) << gaz, gar, gan;
    gated_prev.row(t) = r.cwiseProduct(prev);
    carry = gprev;
  }

  grads.input_weight.noalias() += grad_pre.transpose() * cache.inputs;
  grads.bias += grad_pre.colwise().sum();
  if (T > 1) {
    const auto prev_rows = cache.hidden.topRows(T - 1);
    grads.hidden_weight.topRows(H).noalias() += grad_pre.bottomRows(T - 1).leftCols(H).transpose() * prev_rows;
    grads.hidden_weight.middleRows(H, H).noalias() +=
        grad_pre.bottomRows(T - 1).middleCols(H, H).transpose() * prev_rows;
  }
  grads.hidden_weight.bottomRows(H).noalias() += grad_pre.rightCols(H).transpose() * gated_prev;
}

}  // namespace petra
