#pragma once

#include "petra/evaluation.hpp"
#include "petra/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace petra {

struct TrainConfig {
  int max_epochs = 100;
  double lr_init = 1e-3;
  double lr_min = 1e-4;
  int lr_patience = 5;     // halve lr after this many epochs without improvement
  int stop_patience = 15;  // stop after this many epochs without improvement
  double tau_init = 1.0;
  int tau_halve_every = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 0.1;
  LossWeights weights;
  double improvement_tolerance = 1e-6;
  std::uint64_t seed = 7;

  void validate() const;
  double tau_at(int epoch) const;  // tau_init * 2^-floor(epoch / tau_halve_every)
};

// Plateau bookkeeping: learning-rate halving and early stopping.
class PlateauSchedule {
 public:
  PlateauSchedule() = default;
  explicit PlateauSchedule(const TrainConfig& config);

  struct Decision {
    bool improved = false;
    bool stop = false;
  };
  Decision observe(double value);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int epochs_since_best() const { return since_best_; }

  void restore(double lr, double best, int since_best) {
    lr_ = lr;
    best_ = best;
    since_best_ = since_best;
  }

 private:
  double lr_ = 1e-3;
  double lr_min_ = 1e-4;
  int lr_patience_ = 5;
  int stop_patience_ = 15;
  double tolerance_ = 1e-6;
  double best_ = -1.0;
  int since_best_ = 0;
};

struct AdamState {
  ModelParams first;
  ModelParams second;
  long step = 0;

  static AdamState zeros(const ModelConfig& config);
  void update(ModelParams& params, ModelParams& grads, double lr, const TrainConfig& config);
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double lr = 0.0;
  double tau = 0.0;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ModelParams params;
  std::optional<AdamState> adam;
  std::optional<ModelParams> best_params;
  int epoch = 0;  // epochs completed
  double tau = 1.0;
  double lr = 1e-3;
  std::string rng_state;
  double best_f1 = -1.0;
  int best_epoch = 0;
  int epochs_since_best = 0;
  bool finished = false;
  std::vector<EpochRecord> history;

  // Parameters to evaluate with: the best validation snapshot when present.
  const ModelParams& eval_params() const { return best_params ? *best_params : params; }
};

inline constexpr char kCheckpointMagic[4] = {'P', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string history_csv(const std::vector<EpochRecord>& history);

// Validation F1 at the best grid threshold.
double validation_f1(const ModelConfig& config, const ModelParams& params, std::span<const CorefInstance> validation,
                     std::uint64_t seed);

class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, std::span<const CorefInstance> corpus,
          std::span<const CorefInstance> validation);
  // Continues from a full checkpoint.
  Trainer(const Checkpoint& checkpoint, std::span<const CorefInstance> corpus,
          std::span<const CorefInstance> validation);

  bool finished() const { return finished_; }
  EpochRecord run_epoch();
  void run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  const ModelParams& params() const { return params_; }
  const ModelParams& best_params() const { return best_params_; }
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  ModelConfig model_;
  TrainConfig train_;
  std::span<const CorefInstance> corpus_;
  std::span<const CorefInstance> validation_;
  ModelParams params_;
  ModelParams best_params_;
  AdamState adam_;
  PlateauSchedule schedule_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  bool finished_ = false;
  std::vector<EpochRecord> history_;
};

struct GradCheckReport {
  struct Entry {
    std::string name;
    double relative_error = 0.0;
    double analytic_norm = 0.0;
  };
  std::vector<Entry> tensors;
  double max_relative_error = 0.0;
  double loss = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  double tau = 1.0;
  double lambda = 0.1;
  LossWeights weights;
  std::uint64_t seed = 11;
};

// Training-mode loss for one instance with all random draws taken from `seed`.
double instance_loss(const ModelConfig& config, const ModelParams& params, const CorefInstance& instance,
                     const GradCheckOptions& options, ModelParams* grads = nullptr);

// Compares reverse-mode gradients with central differences on every tensor.
GradCheckReport grad_check(const ModelConfig& config, const ModelParams& params, const CorefInstance& instance,
                           const GradCheckOptions& options = {});

}  // namespace petra
