#include "petra/objective.hpp"

#include <algorithm>
#include <cmath>

namespace petra {

std::vector<LabeledPair> expand_labels(const CorefInstance& instance, const LossWeights& weights) {
  std::vector<LabeledPair> pairs;
  auto add = [&](Index a, Index b, bool label, PairKind kind) {
    if (a == b) return;
    const double w = kind == PairKind::SelfLink ? weights.self_link
                     : kind == PairKind::Positive ? weights.positive
                                                  : weights.negative;
    pairs.push_back({std::min(a, b), std::max(a, b), label, kind, w});
  };
  for (const Span* s : {&instance.span_a, &instance.span_b, &instance.span_p}) {
    for (Index t = s->first + 1; t <= s->last; ++t) add(s->head(), t, true, PairKind::SelfLink);
  }
  auto cross = [&](const Span& x, const Span& y, bool label) {
    for (Index a = x.first; a <= x.last; ++a) {
      for (Index b = y.first; b <= y.last; ++b) add(a, b, label, label ? PairKind::Positive : PairKind::Negative);
    }
  };
  cross(instance.span_a, instance.span_p, instance.label_a);
  cross(instance.span_b, instance.span_p, instance.label_b);
  cross(instance.span_a, instance.span_b, false);
  return pairs;
}

double coref_loss(const std::vector<LabeledPair>& pairs, const TraceMatrix& traces, Mat* grad_overwrite,
                  Mat* grad_coref) {
  double loss = 0.0;
  for (const auto& pair : pairs) {
    const double raw = link_probability(traces, pair.first, pair.second);
    const double p = std::clamp(raw, kProbabilityEps, 1.0 - kProbabilityEps);
    loss += pair.weight * (pair.label ? -std::log(p) : -std::log1p(-p));
    if (grad_overwrite && grad_coref && raw == p) {
      const double dp = pair.label ? -1.0 / p : 1.0 / (1.0 - p);
      link_probability_backward(traces, pair.first, pair.second, pair.weight * dp, *grad_overwrite, *grad_coref);
    }
  }
  return loss;
}

double entity_loss(const Vec& entity, std::span<const Span> masked_spans, Vec* grad) {
  const Index T = entity.size();
  Vec mask = Vec::Ones(T);
  for (const auto& s : masked_spans) {
    for (Index t = std::max<Index>(s.first, 0); t <= std::min(s.last, T - 1); ++t) mask(t) = 0.0;
  }
  const double count = mask.sum();
  if (count == 0.0) return 0.0;
  if (grad) *grad += mask / count;
  return entity.dot(mask) / count;
}

LossBreakdown total_loss(const CorefInstance& instance, const TraceMatrix& traces, const Vec& entity, double lambda,
                         const LossWeights& weights, LossGradient* grad) {
  if (grad) {
    grad->overwrite = Mat::Zero(traces.length(), traces.cells());
    grad->coref = Mat::Zero(traces.length(), traces.cells());
    grad->entity = Vec::Zero(entity.size());
  }
  LossBreakdown out;
  out.lambda = lambda;
  out.coref = coref_loss(expand_labels(instance, weights), traces, grad ? &grad->overwrite : nullptr,
                         grad ? &grad->coref : nullptr);
  const Span spans[] = {instance.span_a, instance.span_b, instance.span_p};
  Vec entity_grad = Vec::Zero(entity.size());
  out.entity = entity_loss(entity, spans, grad ? &entity_grad : nullptr);
  if (grad) grad->entity = lambda * entity_grad;
  out.total = out.coref + lambda * out.entity;
  return out;
}

}  // namespace petra
