#include "petra/model.hpp"

#include "petra/errors.hpp"

#include <cmath>

namespace petra {

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
  if (coref_hidden_layers < 0) throw ConfigError("coref_hidden_layers must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!std::isfinite(update_gate_bias)) throw ConfigError("update_gate_bias must be finite");
  memory(Mode::Infer).validate();
}

MemoryConfig ModelConfig::memory(Mode mode, double tau) const {
  MemoryConfig m;
  m.cells = cells;
  m.hidden = hidden;
  m.variant = variant;
  m.key_dim = key_dim;
  m.gamma = gamma;
  m.tau = tau;
  m.mode = mode;
  m.coref_usage_threshold = coref_usage_threshold;
  return m;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  return {EncoderParams(config.input_dim, config.hidden),
          make_controller(config.memory(Mode::Infer), config.mlp_hidden, config.coref_hidden_layers)};
}

ModelParams ModelParams::initialized(const ModelConfig& config, std::uint64_t seed) {
  auto p = zeros(config);
  std::mt19937_64 rng(seed);
  p.encoder.init_uniform(rng);
  p.encoder.bias.head(config.hidden).array() += config.update_gate_bias;
  p.controller.entity_mlp.init_uniform(rng);
  p.controller.sim_mlp.init_uniform(rng);
  p.controller.coref_mlp.init_uniform(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < p.controller.cell_init.size(); ++i) p.controller.cell_init.data()[i] = dist(rng);
  return p;
}

namespace {

template <class M>
ParamView view_of(std::string name, M& m) {
  return {std::move(name), std::span<double>(m.data(), static_cast<std::size_t>(m.size())), m.rows(), m.cols()};
}

void add_mlp(std::vector<ParamView>& out, const std::string& prefix, Mlp& mlp) {
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    auto& layer = mlp.layers()[l];
    out.push_back(view_of(prefix + "." + std::to_string(l) + ".weight", layer.weight));
    out.push_back(view_of(prefix + "." + std::to_string(l) + ".bias", layer.bias));
  }
}

}  // namespace

std::vector<ParamView> ModelParams::views() {
  std::vector<ParamView> out;
  out.push_back(view_of("encoder.input_weight", encoder.input_weight));
  out.push_back(view_of("encoder.hidden_weight", encoder.hidden_weight));
  out.push_back(view_of("encoder.bias", encoder.bias));
  add_mlp(out, "entity_mlp", controller.entity_mlp);
  add_mlp(out, "sim_mlp", controller.sim_mlp);
  add_mlp(out, "coref_mlp", controller.coref_mlp);
  if (controller.cell_init.size() > 0) out.push_back(view_of("cell_init", controller.cell_init));
  return out;
}

Index ModelParams::parameter_count() const { return encoder.parameter_count() + controller.parameter_count(); }

std::mt19937_64 document_rng(std::uint64_t seed, const std::string& doc_id, std::uint64_t salt) {
  return std::mt19937_64(mix_seed(mix_seed(seed, fnv1a(doc_id)), salt));
}

DocumentRun run_document(const ModelConfig& config, const ModelParams& params, const Document& doc, Mode mode,
                         double tau, std::mt19937_64& rng, DocumentCache* cache) {
  return run_document(config, params, Mat(doc.embeddings.cast<double>()), mode, tau, rng, cache);
}

DocumentRun run_document(const ModelConfig& config, const ModelParams& params, const Mat& inputs, Mode mode,
                         double tau, std::mt19937_64& rng, DocumentCache* cache) {
  const auto memory_config = config.memory(mode, tau);
  const bool training = mode == Mode::Train;
  const Mat hidden =
      encode(inputs, params.encoder, training, config.dropout, rng, cache ? &cache->encoder : nullptr);
  const Index T = hidden.rows();
  const Index N = config.cells;

  DocumentRun run;
  run.traces.overwrite.resize(T, N);
  run.traces.coref.resize(T, N);
  run.entity.resize(T);
  run.steps.reserve(static_cast<std::size_t>(T));
  if (cache) {
    cache->memory = memory_config;
    cache->steps.assign(static_cast<std::size_t>(T), {});
  }
  MemoryState state = init_memory(memory_config, params.controller);
  for (Index t = 0; t < T; ++t) {
    auto step = memory_step(state, hidden.row(t), params.controller, memory_config, rng,
                            cache ? &cache->steps[static_cast<std::size_t>(t)] : nullptr);
    run.traces.overwrite.row(t) = step.trace.overwrite.transpose();
    run.traces.coref.row(t) = step.trace.coref.transpose();
    run.entity(t) = step.trace.entity;
    run.steps.push_back(std::move(step.trace));
    state = std::move(step.state);
  }
  return run;
}

void backward_document(const ModelConfig& config, const ModelParams& params, const DocumentCache& cache,
                       const LossGradient& loss_grad, ModelParams& grads) {
  const Index T = static_cast<Index>(cache.steps.size());
  const Index N = config.cells;
  const Index H = config.hidden;
  Mat grad_hidden(T, H);
  StepUpstream up;
  up.content = Mat::Zero(N, H);
  up.usage = Vec::Zero(N);
  StepDownstream down;
  for (Index t = T; t-- > 0;) {
    up.overwrite = loss_grad.overwrite.row(t).transpose();
    up.coref = loss_grad.coref.row(t).transpose();
    up.entity = loss_grad.entity(t);
    memory_step_backward(cache.steps[static_cast<std::size_t>(t)], params.controller, cache.memory, up, down,
                         grads.controller);
    grad_hidden.row(t) = down.h;
    up.content = std::move(down.content);
    up.usage = std::move(down.usage);
  }
  switch (config.variant) {
    case Variant::Vanilla:
      break;
    case Variant::LearnedInit:
      grads.controller.cell_init += up.content;
      break;
    case Variant::FixedKey:
      grads.controller.cell_init += up.content.leftCols(config.key_dim);
      break;
  }
  encode_backward(cache.encoder, params.encoder, grad_hidden, grads.encoder);
}

InstanceScores score_instance(const ModelConfig& config, const ModelParams& params, const CorefInstance& instance,
                              std::uint64_t seed) {
  auto rng = document_rng(seed, instance.doc.id, 0x1f);
  InstanceScores s;
  s.run = run_document(config, params, instance.doc, Mode::Infer, 1.0, rng);
  s.score_a = span_link_probability(s.run.traces, instance.span_a, instance.span_p);
  s.score_b = span_link_probability(s.run.traces, instance.span_b, instance.span_p);
  return s;
}

}  // namespace petra
