#pragma once

#include "petra/config.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace petra::cli {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
};

struct TrainArgs {
  std::string resume;
};

struct EvalArgs {
  std::string checkpoint;
  std::string split = "val";
};

struct VisualizeArgs {
  std::string checkpoint;
  std::string split = "val";
  std::string doc_id;  // empty: first document
};

int cmd_train(const Common& common, const TrainArgs& args);
int cmd_eval_gap(const Common& common, const EvalArgs& args);
int cmd_count_people(const Common& common, const EvalArgs& args);
int cmd_visualize(const Common& common, const VisualizeArgs& args);
int cmd_gen_synth(const Common& common);
int cmd_sweep_memory(const Common& common);
int cmd_grad_check(const Common& common);

}  // namespace petra::cli
