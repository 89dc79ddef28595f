#include "petra/memory.hpp"

#include "petra/errors.hpp"
#include "petra/flops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace petra {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

Mat sim_inputs(const RowVec& h, const Mat& content, const Vec& usage) {
  const Index N = content.rows();
  const Index H = content.cols();
  Mat a(N, 3 * H + 1);
  for (Index i = 0; i < N; ++i) {
    a.row(i).segment(0, H) = h;
    a.row(i).segment(H, H) = content.row(i);
    a.row(i).segment(2 * H, H) = h.cwiseProduct(content.row(i));
    a(i, 3 * H) = usage(i);
  }
  return a;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla:
      return "vanilla";
    case Variant::LearnedInit:
      return "learned_init";
    case Variant::FixedKey:
      return "fixed_key";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "vanilla") return Variant::Vanilla;
  if (name == "learned_init") return Variant::LearnedInit;
  if (name == "fixed_key") return Variant::FixedKey;
  throw ConfigError("unknown memory variant '" + name + "' (expected vanilla, learned_init or fixed_key)");
}

void MemoryConfig::validate() const {
  if (cells < 1) throw ConfigError("memory needs at least one cell");
  if (hidden < 1) throw ConfigError("hidden size must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (variant == Variant::FixedKey && !(key_dim > 0 && key_dim < hidden)) {
    throw ConfigError("fixed_key needs 0 < key_dim < hidden");
  }
  if (!(coref_usage_threshold >= 0.0 && coref_usage_threshold < 1.0)) {
    throw ConfigError("coref_usage_threshold must lie in [0, 1)");
  }
}

Index ControllerParams::parameter_count() const {
  return entity_mlp.parameter_count() + sim_mlp.parameter_count() + coref_mlp.parameter_count() + cell_init.size();
}

ControllerParams make_controller(const MemoryConfig& config, Index mlp_hidden, int coref_hidden_layers) {
  config.validate();
  const Index H = config.hidden;
  ControllerParams p;
  p.entity_mlp = Mlp({H, mlp_hidden, mlp_hidden, 1});
  p.sim_mlp = Mlp({3 * H + 1, mlp_hidden, mlp_hidden, 1});
  std::vector<Index> coref_widths{2 * H};
  for (int l = 0; l < coref_hidden_layers; ++l) coref_widths.push_back(mlp_hidden);
  coref_widths.push_back(H);
  p.coref_mlp = Mlp(coref_widths);
  switch (config.variant) {
    case Variant::Vanilla:
      break;
    case Variant::LearnedInit:
      p.cell_init = Mat::Zero(config.cells, H);
      break;
    case Variant::FixedKey:
      p.cell_init = Mat::Zero(config.cells, config.key_dim);
      break;
  }
  return p;
}

MemoryState init_memory(const MemoryConfig& config, const ControllerParams& params) {
  MemoryState s{Mat::Zero(config.cells, config.hidden), Vec::Zero(config.cells)};
  switch (config.variant) {
    case Variant::Vanilla:
      break;
    case Variant::LearnedInit:
      s.content = params.cell_init;
      break;
    case Variant::FixedKey:
      s.content.leftCols(config.key_dim) = params.cell_init;
      break;
  }
  return s;
}

double entity_probability(const Mlp& entity_mlp, const RowVec& h) { return sigmoid(entity_mlp.forward(h)(0, 0)); }

double similarity(const Mlp& sim_mlp, const RowVec& h, const RowVec& m, double u) {
  return sim_mlp.forward(sim_inputs(h, m, Vec::Constant(1, u)))(0, 0);
}

Vec coref_scores(const Vec& sims, const Vec& usage_prev, double usage_threshold) {
  Vec cs = sims;
  for (Index i = 0; i < cs.size(); ++i) {
    if (usage_prev(i) <= usage_threshold) cs(i) -= kMaskSentinel;
  }
  return cs;
}

OperationDistribution operation_distribution(double entity, const Vec& scores) {
  const Index N = scores.size();
  Vec logits(N + 1);
  logits << scores, 0.0;
  OperationDistribution d;
  d.softmax = softmax(logits);
  d.coref = entity * d.softmax.head(N);
  d.new_entity = entity * d.softmax(N);
  return d;
}

Vec overwrite_infer(double new_entity, const Vec& usage_prev, std::mt19937_64& rng, const Vec* tie_scores) {
  const double lowest = usage_prev.minCoeff();
  std::vector<Index> tied;
  for (Index i = 0; i < usage_prev.size(); ++i) {
    if (usage_prev(i) == lowest) tied.push_back(i);
  }
  Index chosen = tied.front();
  if (tied.size() > 1) {
    if (tie_scores && lowest == 0.0) {
      for (Index i : tied) {
        if ((*tie_scores)(i) > (*tie_scores)(chosen)) chosen = i;
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
      chosen = tied[pick(rng)];
    }
  }
  Vec o = Vec::Zero(usage_prev.size());
  o(chosen) = new_entity;
  return o;
}

Vec gumbel_noise(Index count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(kGumbelEps, 1.0 - kGumbelEps);
  Vec g(count);
  for (Index i = 0; i < count; ++i) g(i) = -std::log(-std::log(uniform(rng)));
  return g;
}

Vec overwrite_train(double new_entity, const Vec& usage_prev, double tau, const Vec& gumbel) {
  if (!(tau > 0.0)) throw ArgumentError("Gumbel-Softmax temperature must be positive");
  const Vec logits = ((Vec::Ones(usage_prev.size()) - usage_prev + gumbel) / tau).eval();
  return new_entity * softmax(logits);
}

Vec overwrite_train(double new_entity, const Vec& usage_prev, double tau, std::mt19937_64& rng) {
  return overwrite_train(new_entity, usage_prev, tau, gumbel_noise(usage_prev.size(), rng));
}

StepResult memory_step(const MemoryState& state, const RowVec& h, const ControllerParams& params,
                       const MemoryConfig& config, std::mt19937_64& rng, StepCache* cache) {
  const Index N = config.cells;
  const Index H = config.hidden;
  if (h.size() != H) throw ShapeError("hidden state has " + std::to_string(h.size()) + " entries, expected " +
                                      std::to_string(H));
  if (state.content.rows() != N || state.content.cols() != H || state.usage.size() != N) {
    throw ShapeError("memory state does not match the configured cells/hidden size");
  }

  StepCache local;
  StepCache& c = cache ? *cache : local;
  c.h = h;
  c.prev = state;

  StepTrace trace;
  trace.entity = sigmoid(params.entity_mlp.forward(h, &c.entity_cache)(0, 0));
  c.entity = trace.entity;

  c.sim_input = sim_inputs(h, state.content, state.usage);
  trace.sim = params.sim_mlp.forward(c.sim_input, &c.sim_cache).col(0);
  trace.coref_score = coref_scores(trace.sim, state.usage, config.coref_usage_threshold);
  c.masked.assign(static_cast<std::size_t>(N), false);
  for (Index i = 0; i < N; ++i) c.masked[static_cast<std::size_t>(i)] = state.usage(i) <= config.coref_usage_threshold;

  auto dist = operation_distribution(trace.entity, trace.coref_score);
  trace.coref = dist.coref;
  trace.new_entity = dist.new_entity;
  c.softmax = dist.softmax;

  if (config.mode == Mode::Train) {
    c.gumbel_softmax = overwrite_train(1.0, state.usage, config.tau, rng);
    trace.overwrite = trace.new_entity * c.gumbel_softmax;
    c.chosen = -1;
  } else {
    const Vec* ties = config.variant == Variant::Vanilla ? nullptr : &trace.sim;
    const Vec pick = overwrite_infer(1.0, state.usage, rng, ties);
    Index chosen = 0;
    pick.maxCoeff(&chosen);
    c.chosen = chosen;
    trace.overwrite = Vec::Zero(N);
    trace.overwrite(chosen) = trace.new_entity;
  }
  c.new_entity = trace.new_entity;
  c.coref = trace.coref;
  c.overwrite = trace.overwrite;

  c.coref_input.resize(N, 2 * H);
  c.coref_input.leftCols(H) = h.replicate(N, 1);
  c.coref_input.rightCols(H) = state.content;
  c.coref_output = params.coref_mlp.forward(c.coref_input, &c.coref_cache);

  const Index off = config.update_offset();
  const Index W = H - off;
  MemoryState next = state;
  for (Index i = 0; i < N; ++i) {
    const double o = trace.overwrite(i);
    const double cr = trace.coref(i);
    next.content.row(i).tail(W) = (1.0 - (o + cr)) * state.content.row(i).tail(W) + o * h.tail(W) +
                                  cr * c.coref_output.row(i).tail(W);
  }
  flops::add(static_cast<std::uint64_t>(3 * N * W));
  c.usage_pre_clip = trace.overwrite + trace.coref + config.gamma * state.usage;
  next.usage = c.usage_pre_clip.cwiseMin(1.0);
  trace.usage = next.usage;
  return {std::move(next), std::move(trace)};
}

void memory_step_backward(const StepCache& c, const ControllerParams& params, const MemoryConfig& config,
                          const StepUpstream& up, StepDownstream& down, ControllerParams& grads) {
  const Index N = config.cells;
  const Index H = config.hidden;
  const Index off = config.update_offset();
  const Index W = H - off;
  const auto& m_prev = c.prev.content;

  Vec g_o = up.overwrite;
  Vec g_c = up.coref;
  double g_e = up.entity;
  down.content = Mat::Zero(N, H);
  down.usage = Vec::Zero(N);
  down.h = RowVec::Zero(H);

  // u_t = min(1, o + c + gamma * u_{t-1})
  for (Index i = 0; i < N; ++i) {
    const double g = c.usage_pre_clip(i) < 1.0 ? up.usage(i) : 0.0;
    g_o(i) += g;
    g_c(i) += g;
    down.usage(i) += config.gamma * g;
  }

  // m_t = (1 - o - c) m_{t-1} + o h + c f(h, m_{t-1}) on the updated slice.
  Mat g_f = Mat::Zero(N, H);
  if (off > 0) down.content.leftCols(off) = up.content.leftCols(off);
  for (Index i = 0; i < N; ++i) {
    const auto G = up.content.row(i).tail(W);
    const double o = c.overwrite(i);
    const double cr = c.coref(i);
    g_o(i) += G.dot(c.h.tail(W) - m_prev.row(i).tail(W));
    g_c(i) += G.dot(c.coref_output.row(i).tail(W) - m_prev.row(i).tail(W));
    down.content.row(i).tail(W) += (1.0 - o - cr) * G;
    down.h.tail(W) += o * G;
    g_f.row(i).tail(W) = cr * G;
  }
  const Mat g_coref_in = params.coref_mlp.backward(c.coref_cache, g_f, grads.coref_mlp);
  down.h += g_coref_in.leftCols(H).colwise().sum();
  down.content += g_coref_in.rightCols(H);

  // Overwrite distribution.
  double g_n = 0.0;
  if (config.mode == Mode::Train) {
    const Vec& q = c.gumbel_softmax;
    g_n += g_o.dot(q);
    const Vec g_q = c.new_entity * g_o;
    const Vec g_logits = q.cwiseProduct((g_q.array() - q.dot(g_q)).matrix());
    down.usage -= g_logits / config.tau;
  } else {
    g_n += g_o(c.chosen);
  }

  // (c, n) = e * softmax(cs ; 0)
  const Vec& p = c.softmax;
  Vec g_p(N + 1);
  g_p << c.entity * g_c, c.entity * g_n;
  g_e += p.head(N).dot(g_c) + p(N) * g_n;
  const Vec g_logit = p.cwiseProduct((g_p.array() - p.dot(g_p)).matrix());
  Mat g_sim = g_logit.head(N);
  for (Index i = 0; i < N; ++i) {
    if (c.masked[static_cast<std::size_t>(i)]) g_sim(i, 0) = 0.0;
  }

  const Mat g_sim_in = params.sim_mlp.backward(c.sim_cache, g_sim, grads.sim_mlp);
  for (Index i = 0; i < N; ++i) {
    const auto row = g_sim_in.row(i);
    const auto prod = row.segment(2 * H, H);
    down.h += row.segment(0, H) + prod.cwiseProduct(m_prev.row(i));
    down.content.row(i) += row.segment(H, H) + prod.cwiseProduct(c.h);
    down.usage(i) += row(3 * H);
  }

  const double g_z = g_e * c.entity * (1.0 - c.entity);
  down.h += params.entity_mlp.backward(c.entity_cache, Mat::Constant(1, 1, g_z), grads.entity_mlp);
}

}  // namespace petra
