#pragma once

#include "petra/mlp.hpp"
#include "petra/types.hpp"

#include <optional>
#include <random>
#include <string>

namespace petra {

enum class Variant { Vanilla, LearnedInit, FixedKey };
enum class Mode { Train, Infer };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

// Logit offset standing in for "minus infinity" on cells that were never used.
inline constexpr double kMaskSentinel = 1e4;
// Uniform draws for Gumbel noise are taken from [eps, 1 - eps].
inline constexpr double kGumbelEps = 1e-10;

struct MemoryConfig {
  Index cells = 8;
  Index hidden = 300;
  Variant variant = Variant::Vanilla;
  Index key_dim = 20;  // FixedKey only; the remaining hidden - key_dim entries are the value
  double gamma = 0.98;
  double tau = 1.0;
  Mode mode = Mode::Infer;
  // Coreference is only allowed into cells whose usage exceeds this value.
  double coref_usage_threshold = 0.0;

  void validate() const;
  // First content column touched by the update (the key slice is immutable).
  Index update_offset() const { return variant == Variant::FixedKey ? key_dim : 0; }
};

struct ControllerParams {
  Mlp entity_mlp;  // H -> hidden -> hidden -> 1
  Mlp sim_mlp;     // 3H + 1 -> hidden -> hidden -> 1
  Mlp coref_mlp;   // 2H -> H (optionally with hidden layers)
  Mat cell_init;   // LearnedInit: N x H; FixedKey: N x key_dim; Vanilla: empty

  Index parameter_count() const;
};

// Builds zero-valued controller parameters with shapes for `config`.
ControllerParams make_controller(const MemoryConfig& config, Index mlp_hidden, int coref_hidden_layers = 0);

struct MemoryState {
  Mat content;  // N x H
  Vec usage;    // N, each in [0, 1]
};

// Interpretable per-token record of the controller's decisions.
struct StepTrace {
  double entity = 0.0;
  Vec sim;
  Vec coref_score;
  Vec coref;
  Vec overwrite;
  double new_entity = 0.0;
  Vec usage;  // after the step
};

MemoryState init_memory(const MemoryConfig& config, const ControllerParams& params);

double entity_probability(const Mlp& entity_mlp, const RowVec& h);
// Input to the similarity MLP is [h ; m ; h * m ; u].
double similarity(const Mlp& sim_mlp, const RowVec& h, const RowVec& m, double u);
Vec coref_scores(const Vec& sims, const Vec& usage_prev, double usage_threshold = 0.0);

struct OperationDistribution {
  Vec coref;                // c_1..c_N
  double new_entity = 0.0;  // n
  Vec softmax;              // N + 1 probabilities before scaling by e
};
// (c, n) = e * softmax(scores ; 0)
OperationDistribution operation_distribution(double entity, const Vec& scores);

// Hard overwrite into the least-used cell. Ties are broken by the highest
// `tie_scores` entry when given and the tied cells are unused, otherwise
// uniformly at random.
Vec overwrite_infer(double new_entity, const Vec& usage_prev, std::mt19937_64& rng,
                    const Vec* tie_scores = nullptr);

Vec gumbel_noise(Index count, std::mt19937_64& rng);
// n * softmax((1 - u + g) / tau)
Vec overwrite_train(double new_entity, const Vec& usage_prev, double tau, const Vec& gumbel);
Vec overwrite_train(double new_entity, const Vec& usage_prev, double tau, std::mt19937_64& rng);

struct StepCache {
  RowVec h;
  MemoryState prev;
  Mlp::Cache entity_cache;
  double entity = 0.0;
  Mat sim_input;
  Mlp::Cache sim_cache;
  std::vector<bool> masked;
  Vec softmax;  // N + 1
  double new_entity = 0.0;
  Vec coref;
  Vec overwrite;
  Vec gumbel_softmax;  // Train mode
  Index chosen = -1;   // Infer mode
  Mat coref_input;
  Mlp::Cache coref_cache;
  Mat coref_output;
  Vec usage_pre_clip;
};

struct StepResult {
  MemoryState state;
  StepTrace trace;
};

StepResult memory_step(const MemoryState& state, const RowVec& h, const ControllerParams& params,
                       const MemoryConfig& config, std::mt19937_64& rng, StepCache* cache = nullptr);

// Gradients flowing into one step from later steps and from the loss.
struct StepUpstream {
  Mat content;  // d/d m_t
  Vec usage;    // d/d u_t
  Vec overwrite;
  Vec coref;
  double entity = 0.0;
};

struct StepDownstream {
  Mat content;  // d/d m_{t-1}
  Vec usage;    // d/d u_{t-1}
  RowVec h;
};

void memory_step_backward(const StepCache& cache, const ControllerParams& params, const MemoryConfig& config,
                          const StepUpstream& upstream, StepDownstream& downstream, ControllerParams& grads);

}  // namespace petra
