#include "CLI11.hpp"
#include "commands.hpp"
#include "petra/errors.hpp"

#include <iostream>

namespace {

enum Exit { kOk = 0, kInvalid = 1, kFailure = 2 };

void add_common(CLI::App* cmd, petra::cli::Common& common) {
  cmd->add_option("--config", common.config_path, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Override the configured seed");
  cmd->add_option("--out", common.out, "Output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace petra::cli;
  CLI::App app{"petra: incremental entity tracking with a bounded memory"};
  app.require_subcommand(1);

  Common common;
  TrainArgs train;
  EvalArgs eval, count;
  VisualizeArgs vis;

  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(c_train, common);
  c_train->add_option("--resume", train.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* c_eval = app.add_subcommand("eval-gap", "Pronoun resolution F1 with the threshold picked on validation");
  add_common(c_eval, common);
  c_eval->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--split", eval.split)->check(CLI::IsMember({"val", "test"}))->capture_default_str();

  auto* c_count = app.add_subcommand("count-people", "Unique-people counting error and overwrite KL");
  add_common(c_count, common);
  c_count->add_option("--checkpoint", count.checkpoint)->required()->check(CLI::ExistingFile);
  c_count->add_option("--split", count.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();

  auto* c_vis = app.add_subcommand("visualize", "Memory log and heatmap for one document");
  add_common(c_vis, common);
  c_vis->add_option("--checkpoint", vis.checkpoint)->required()->check(CLI::ExistingFile);
  c_vis->add_option("--split", vis.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  c_vis->add_option("--doc", vis.doc_id, "Document id (default: first in the split)");

  auto* c_gen = app.add_subcommand("gen-synth", "Write a synthetic corpus as TSV + PTEM");
  add_common(c_gen, common);

  auto* c_sweep = app.add_subcommand("sweep-memory", "Validation F1 across memory sizes and seeds");
  add_common(c_sweep, common);

  auto* c_grad = app.add_subcommand("grad-check", "Compare gradients with finite differences on a tiny model");
  add_common(c_grad, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (c_train->parsed()) return cmd_train(common, train);
    if (c_eval->parsed()) return cmd_eval_gap(common, eval);
    if (c_count->parsed()) return cmd_count_people(common, count);
    if (c_vis->parsed()) return cmd_visualize(common, vis);
    if (c_gen->parsed()) return cmd_gen_synth(common);
    if (c_sweep->parsed()) return cmd_sweep_memory(common);
    if (c_grad->parsed()) return cmd_grad_check(common);
  } catch (const petra::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kInvalid;
  } catch (const petra::ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kInvalid;
}
