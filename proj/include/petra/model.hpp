#pragma once

#include "petra/coref_link.hpp"
#include "petra/corpus.hpp"
#include "petra/encoder.hpp"
#include "petra/memory.hpp"
#include "petra/objective.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace petra {

struct ModelConfig {
  Index input_dim = 3072;
  Index hidden = 300;
  Index mlp_hidden = 300;
  int coref_hidden_layers = 0;
  Index cells = 8;
  Variant variant = Variant::Vanilla;
  Index key_dim = 20;
  double gamma = 0.98;
  double dropout = 0.5;
  double coref_usage_threshold = 0.0;
  // Added to the GRU update-gate bias at initialization. Positive values make the
  // state track the current token instead of carrying the previous one forward.
  double update_gate_bias = 0.0;

  void validate() const;
  MemoryConfig memory(Mode mode, double tau = 1.0) const;
};

// Named view of one parameter tensor.
struct ParamView {
  std::string name;
  std::span<double> values;
  Index rows = 0;
  Index cols = 0;
};

struct ModelParams {
  EncoderParams encoder;
  ControllerParams controller;

  static ModelParams zeros(const ModelConfig& config);
  static ModelParams initialized(const ModelConfig& config, std::uint64_t seed);

  // Stable order; identical for parameters and their gradients.
  std::vector<ParamView> views();
  Index parameter_count() const;
};

// RNG stream for one document, derived from the run seed and its id.
std::mt19937_64 document_rng(std::uint64_t seed, const std::string& doc_id, std::uint64_t salt = 0);

struct DocumentRun {
  TraceMatrix traces;
  Vec entity;  // e_t
  std::vector<StepTrace> steps;
};

struct DocumentCache {
  MemoryConfig memory;
  EncoderCache encoder;
  std::vector<StepCache> steps;
};

DocumentRun run_document(const ModelConfig& config, const ModelParams& params, const Mat& inputs, Mode mode,
                         double tau, std::mt19937_64& rng, DocumentCache* cache = nullptr);
DocumentRun run_document(const ModelConfig& config, const ModelParams& params, const Document& doc, Mode mode,
                         double tau, std::mt19937_64& rng, DocumentCache* cache = nullptr);

// Accumulates d(loss)/d(params) given loss gradients w.r.t. the traces.
void backward_document(const ModelConfig& config, const ModelParams& params, const DocumentCache& cache,
                       const LossGradient& loss_grad, ModelParams& grads);

struct InstanceScores {
  double score_a = 0.0;  // link probability (A, pronoun)
  double score_b = 0.0;  // link probability (B, pronoun)
  DocumentRun run;
};

// Inference-mode forward pass with the document's own RNG stream.
InstanceScores score_instance(const ModelConfig& config, const ModelParams& params, const CorefInstance& instance,
                              std::uint64_t seed);

}  // namespace petra
