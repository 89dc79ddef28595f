#include "petra/coref_link.hpp"

#include "petra/errors.hpp"

#include <algorithm>

namespace petra {
namespace {

void check_pair(const TraceMatrix& traces, Index t1, Index t2) {
  if (t1 >= t2) {
    throw OrderingError("link probability needs t1 < t2, got (" + std::to_string(t1) + ", " + std::to_string(t2) +
                        ")");
  }
  if (t1 < 0 || t2 >= traces.length()) throw ArgumentError("token index outside the trace");
}

}  // namespace

double link_probability(const TraceMatrix& traces, Index t1, Index t2) {
  check_pair(traces, t1, t2);
  const Index N = traces.cells();
  double total = 0.0;
  for (Index i = 0; i < N; ++i) {
    double survive = 1.0;
    for (Index j = t1 + 1; j <= t2; ++j) survive *= 1.0 - traces.overwrite(j, i);
    total += (traces.overwrite(t1, i) + traces.coref(t1, i)) * survive * traces.coref(t2, i);
  }
  return total;
}

void link_probability_backward(const TraceMatrix& traces, Index t1, Index t2, double scale, Mat& grad_overwrite,
                               Mat& grad_coref) {
  check_pair(traces, t1, t2);
  const Index N = traces.cells();
  const Index L = t2 - t1;
  std::vector<double> prefix(static_cast<std::size_t>(L + 1)), suffix(static_cast<std::size_t>(L + 1));
  for (Index i = 0; i < N; ++i) {
    // prefix[k] = prod of the first k survival factors; suffix[k] = prod from factor k on.
    prefix[0] = 1.0;
    for (Index k = 0; k < L; ++k) prefix[k + 1] = prefix[k] * (1.0 - traces.overwrite(t1 + 1 + k, i));
    suffix[L] = 1.0;
    for (Index k = L; k-- > 0;) suffix[k] = suffix[k + 1] * (1.0 - traces.overwrite(t1 + 1 + k, i));
    const double start = traces.overwrite(t1, i) + traces.coref(t1, i);
    const double end = traces.coref(t2, i);
    const double survive = prefix[L];

    grad_overwrite(t1, i) += scale * survive * end;
    grad_coref(t1, i) += scale * survive * end;
    grad_coref(t2, i) += scale * start * survive;
    for (Index k = 0; k < L; ++k) {
      grad_overwrite(t1 + 1 + k, i) -= scale * start * end * prefix[k] * suffix[k + 1];
    }
  }
}

std::vector<double> link_probability_all_pairs(const TraceMatrix& traces, const std::vector<TokenPair>& queries) {
  const Index N = traces.cells();
  // Running product of the non-zero survival factors, plus a count of exact
  // zeros, so any window (t1, t2] is a ratio of two prefixes.
  std::vector<RowVec> product;
  std::vector<Eigen::RowVectorXi> zeros;
  product.reserve(static_cast<std::size_t>(traces.length()));
  zeros.reserve(static_cast<std::size_t>(traces.length()));
  auto extend_to = [&](Index t) {
    while (static_cast<Index>(product.size()) <= t) {
      const Index j = static_cast<Index>(product.size());
      RowVec p = product.empty() ? RowVec::Ones(N) : product.back();
      Eigen::RowVectorXi z = zeros.empty() ? Eigen::RowVectorXi::Zero(N) : zeros.back();
      if (j > 0) {
        for (Index i = 0; i < N; ++i) {
          const double factor = 1.0 - traces.overwrite(j, i);
          if (factor == 0.0) {
            ++z(i);
          } else {
            p(i) *= factor;
          }
        }
      }
      product.push_back(std::move(p));
      zeros.push_back(std::move(z));
    }
  };

  std::vector<double> out;
  out.reserve(queries.size());
  Index last_second = -1;
  for (const auto& q : queries) {
    check_pair(traces, q.first, q.second);
    if (q.second < last_second) throw OrderingError("queries must be sorted by their second token");
    last_second = q.second;
    extend_to(q.second);
    const auto& p1 = product[static_cast<std::size_t>(q.first)];
    const auto& p2 = product[static_cast<std::size_t>(q.second)];
    const auto& z1 = zeros[static_cast<std::size_t>(q.first)];
    const auto& z2 = zeros[static_cast<std::size_t>(q.second)];
    double total = 0.0;
    for (Index i = 0; i < N; ++i) {
      if (z2(i) != z1(i)) continue;
      const double survive = p2(i) / p1(i);
      total += (traces.overwrite(q.first, i) + traces.coref(q.first, i)) * survive * traces.coref(q.second, i);
    }
    out.push_back(total);
  }
  return out;
}

double span_link_probability(const TraceMatrix& traces, const Span& x, const Span& y) {
  if (x == y) throw ArgumentError("span link probability needs two distinct spans");
  double best = 0.0;
  bool any = false;
  for (Index a = x.first; a <= x.last; ++a) {
    for (Index b = y.first; b <= y.last; ++b) {
      if (a == b) continue;
      best = std::max(best, link_probability(traces, std::min(a, b), std::max(a, b)));
      any = true;
    }
  }
  if (!any) throw ArgumentError("spans share their only token");
  return best;
}

}  // namespace petra
