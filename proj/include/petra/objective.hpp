#pragma once

#include "petra/coref_link.hpp"
#include "petra/corpus.hpp"

#include <span>
#include <vector>

namespace petra {

enum class PairKind { SelfLink, Positive, Negative };

struct LossWeights {
  double self_link = 1.0;
  double positive = 5.0;
  double negative = 50.0;
};

struct LabeledPair {
  Index first = 0;   // earlier token
  Index second = 0;  // later token
  bool label = false;
  PairKind kind = PairKind::Negative;
  double weight = 1.0;
};

// Link probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kProbabilityEps = 1e-7;

// Token-level supervision for one instance: head self-links inside each span,
// name-pronoun pairs with the given labels, and name A / name B negatives.
std::vector<LabeledPair> expand_labels(const CorefInstance& instance, const LossWeights& weights = {});

// Weighted binary cross-entropy. Gradients are accumulated when the outputs are non-null.
double coref_loss(const std::vector<LabeledPair>& pairs, const TraceMatrix& traces, Mat* grad_overwrite = nullptr,
                  Mat* grad_coref = nullptr);

// Mean entity probability over tokens outside the given spans (0 when every token is masked).
double entity_loss(const Vec& entity, std::span<const Span> masked_spans, Vec* grad = nullptr);

struct LossBreakdown {
  double coref = 0.0;
  double entity = 0.0;
  double total = 0.0;
  double lambda = 0.1;
};

struct LossGradient {
  Mat overwrite;
  Mat coref;
  Vec entity;
};

LossBreakdown total_loss(const CorefInstance& instance, const TraceMatrix& traces, const Vec& entity, double lambda,
                         const LossWeights& weights = {}, LossGradient* grad = nullptr);

}  // namespace petra
