#pragma once

#include "petra/corpus.hpp"
#include "petra/types.hpp"

#include <utility>
#include <vector>

namespace petra {

// Per-token overwrite and coref probabilities, T x N each.
struct TraceMatrix {
  Mat overwrite;
  Mat coref;

  Index length() const { return overwrite.rows(); }
  Index cells() const { return overwrite.cols(); }
};

// Probability that tokens t1 < t2 refer to the same tracked entity:
//   sum_i (o[t1,i] + c[t1,i]) * prod_{j=t1+1..t2} (1 - o[j,i]) * c[t2,i]
double link_probability(const TraceMatrix& traces, Index t1, Index t2);

// Adds scale * d(link_probability)/d(traces) into the gradient matrices.
void link_probability_backward(const TraceMatrix& traces, Index t1, Index t2, double scale, Mat& grad_overwrite,
                               Mat& grad_coref);

struct TokenPair {
  Index first = 0;
  Index second = 0;
};

// Same values as link_probability for every query, using running per-cell
// survival products. Queries must be sorted by their second token.
std::vector<double> link_probability_all_pairs(const TraceMatrix& traces, const std::vector<TokenPair>& queries);

// Maximum token-level link probability over all token pairs drawn from the
// two spans, each pair oriented earlier token first. Identical tokens are skipped.
double span_link_probability(const TraceMatrix& traces, const Span& x, const Span& y);

}  // namespace petra
