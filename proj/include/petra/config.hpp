#pragma once

#include "petra/corpus.hpp"
#include "petra/model.hpp"
#include "petra/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace petra {

struct DataPaths {
  std::string train_tsv;
  std::string train_embeddings;
  std::string val_tsv;
  std::string val_embeddings;
  std::string test_tsv;
  std::string test_embeddings;
  std::string counts_tsv;
};

struct SynthConfig {
  int train_docs = 500;
  int val_docs = 100;
  int test_docs = 0;
  SyntheticSpec shape;  // num_docs, seed and id_prefix are set per split
};

struct SweepConfig {
  std::vector<int> cells{2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  int runs = 5;
  int jobs = 1;
};

struct GradCheckConfig {
  double tolerance = 1e-4;
  double step = 1e-5;
};

// Everything a command needs, from one declarative file. Grammar:
//   # comment
//   [section]
//   key = value      (integer, float, "string", or [n, n, ...])
// Keys are addressed as section.key; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 7;
  ModelConfig model;  // input_dim 0 means "take it from the data"
  TrainConfig train;
  DataPaths data;
  SynthConfig synth;
  SweepConfig sweep;
  GradCheckConfig grad_check;

  RunConfig();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set_seed(std::uint64_t s);
  // Sorted key = value lines covering every setting.
  std::string canonical() const;
  std::string hash() const;

  SyntheticSpec synthetic_split(const std::string& split, int docs) const;
};

}  // namespace petra
