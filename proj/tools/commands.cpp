#include "commands.hpp"

#include "json.hpp"
#include "petra/errors.hpp"
#include "petra/evaluation.hpp"
#include "petra/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <iostream>
#include <sstream>

namespace petra::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

RunConfig load_config(const Common& common) {
  RunConfig config;
  if (!common.config_path.empty()) {
    config = RunConfig::load(common.config_path);
    // Data paths in a config file are relative to that file.
    const fs::path base = fs::path(common.config_path).parent_path();
    for (std::string* p : {&config.data.train_tsv, &config.data.train_embeddings, &config.data.val_tsv,
                           &config.data.val_embeddings, &config.data.test_tsv, &config.data.test_embeddings,
                           &config.data.counts_tsv}) {
      if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).string();
    }
  }
  if (common.seed) config.set_seed(*common.seed);
  return config;
}

// Collects produced files and writes manifest.json next to them.
class Outputs {
 public:
  Outputs(const Common& common, std::string command, const RunConfig& config)
      : dir_(common.out), command_(std::move(command)), hash_(config.hash()), seed_(config.seed) {
    fs::create_directories(dir_);
    write("config.toml", config.canonical());
  }

  fs::path path(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
  }
  void write(const std::string& name, const std::string& text) { write_text_file(path(name), text); }

  void finish(json extra = json::object()) {
    std::sort(files_.begin(), files_.end());
    files_.erase(std::unique(files_.begin(), files_.end()), files_.end());
    json m;
    m["command"] = command_;
    m["config_hash"] = hash_;
    m["seed"] = seed_;
    m["files"] = files_;
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_text_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::string command_;
  std::string hash_;
  std::uint64_t seed_;
  std::vector<std::string> files_;
};

const std::string* split_paths(const RunConfig& c, const std::string& split, const std::string** emb) {
  if (split == "train") {
    *emb = &c.data.train_embeddings;
    return &c.data.train_tsv;
  }
  if (split == "val") {
    *emb = &c.data.val_embeddings;
    return &c.data.val_tsv;
  }
  if (split == "test") {
    *emb = &c.data.test_embeddings;
    return &c.data.test_tsv;
  }
  throw ArgumentError("unknown split '" + split + "' (expected train, val or test)");
}

int synth_docs(const RunConfig& c, const std::string& split) {
  if (split == "train") return c.synth.train_docs;
  if (split == "val") return c.synth.val_docs;
  return c.synth.test_docs;
}

// A split comes from files when the config names them, otherwise from the generator.
std::vector<CorefInstance> load_split(const RunConfig& c, const std::string& split) {
  const std::string* emb = nullptr;
  const std::string& tsv = *split_paths(c, split, &emb);
  std::vector<CorefInstance> out;
  if (!tsv.empty()) {
    if (emb->empty()) throw ConfigError("data." + split + "_tsv is set but data." + split + "_embeddings is not");
    out = load_gap(tsv, *emb);
    if (!c.data.counts_tsv.empty()) {
      const auto counts = load_counts(c.data.counts_tsv);
      for (auto& inst : out) {
        if (auto it = counts.find(inst.doc.id); it != counts.end()) inst.people = it->second;
      }
    }
    return out;
  }
  const int docs = synth_docs(c, split);
  if (docs == 0) return out;
  for (auto& d : generate_synthetic(c.synthetic_split(split, docs))) out.push_back(std::move(d.instance));
  return out;
}

ModelConfig resolved_model(ModelConfig m, std::span<const CorefInstance> data) {
  if (m.input_dim == 0) {
    if (data.empty()) throw ConfigError("model.input_dim is 0 and there is no data to infer it from");
    m.input_dim = data.front().doc.dim();
  }
  return m;
}

TrainConfig seeded_train(const RunConfig& c) {
  TrainConfig t = c.train;
  t.seed = c.seed;
  return t;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<InstanceScores> score_all(const ModelConfig& m, const ModelParams& p, std::span<const CorefInstance> data,
                                      std::uint64_t seed) {
  std::vector<InstanceScores> out;
  out.reserve(data.size());
  for (const auto& inst : data) {
    auto s = score_instance(m, p, inst, seed);
    s.run.steps.clear();
    out.push_back(std::move(s));
  }
  return out;
}

std::string sweep_csv(const ThresholdSweep& s, const std::string& value_name) {
  std::string csv = "threshold," + value_name + "\n";
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) csv += fmt(s.thresholds[k], "%.2f") + "," + fmt(s.values[k]) + "\n";
  return csv;
}

double best_f1_of_run(const RunConfig& base, int cells, int run, std::span<const CorefInstance> train,
                      std::span<const CorefInstance> val) {
  ModelConfig m = resolved_model(base.model, train);
  m.cells = cells;
  TrainConfig t = seeded_train(base);
  t.seed = mix_seed(base.seed, static_cast<std::uint64_t>(run));
  Trainer tr(m, t, train, val);
  tr.run();
  double best = 0.0;
  for (const auto& r : tr.history()) best = std::max(best, r.val_f1);
  return best;
}

}  // namespace

int cmd_train(const Common& common, const TrainArgs& args) {
  const RunConfig config = load_config(common);
  const auto train = load_split(config, "train");
  const auto val = load_split(config, "val");
  if (train.empty()) throw ConfigError("training split is empty");

  std::optional<Trainer> trainer;
  if (args.resume.empty()) {
    trainer.emplace(resolved_model(config.model, train), seeded_train(config), train, val);
  } else {
    trainer.emplace(load_checkpoint(args.resume), train, val);
  }

  Outputs out(common, "train", config);
  const fs::path ck_path = out.path("checkpoint.ptck");
  trainer->run([&](const EpochRecord& r) {
    std::printf("epoch %3d  loss %.4f  val_f1 %.4f  lr %.2e  tau %.4g\n", r.epoch, r.train_loss, r.val_f1, r.lr, r.tau);
    std::fflush(stdout);
    save_checkpoint(trainer->checkpoint(), ck_path);
  });
  const auto ck = trainer->checkpoint();
  save_checkpoint(ck, ck_path);
  out.write("history.csv", history_csv(ck.history));
  out.finish({{"epochs", ck.epoch}, {"best_val_f1", ck.best_f1}, {"best_epoch", ck.best_epoch}});
  return 0;
}

int cmd_eval_gap(const Common& common, const EvalArgs& args) {
  const RunConfig config = load_config(common);
  const auto ck = load_checkpoint(args.checkpoint);
  const auto val = load_split(config, "val");
  if (val.empty()) throw ConfigError("validation split is empty; the threshold is chosen on it");

  const auto val_links = scored_links(score_all(ck.model, ck.eval_params(), val, config.seed), val);
  const auto sweep = sweep_threshold_f1(val_links);
  PrfScore score = gap_f1(val_links, sweep.best_threshold);
  if (args.split != "val") {
    const auto data = load_split(config, args.split);
    if (data.empty()) throw ConfigError(args.split + " split is empty");
    score = gap_f1(scored_links(score_all(ck.model, ck.eval_params(), data, config.seed), data), sweep.best_threshold);
  }

  Outputs out(common, "eval-gap", config);
  out.write("threshold_sweep.csv", sweep_csv(sweep, "val_f1"));
  json metrics;
  metrics["split"] = args.split;
  metrics["threshold"] = sweep.best_threshold;
  metrics["precision"] = score.precision;
  metrics["recall"] = score.recall;
  metrics["f1"] = score.f1;
  out.write("metrics.json", metrics.dump(2) + "\n");
  out.finish();
  std::printf("%s F1 %.4f (P %.4f R %.4f) at threshold %.2f\n", args.split.c_str(), score.f1, score.precision,
              score.recall, sweep.best_threshold);
  return 0;
}

int cmd_count_people(const Common& common, const EvalArgs& args) {
  const RunConfig config = load_config(common);
  const auto ck = load_checkpoint(args.checkpoint);
  const auto data = load_split(config, args.split);
  std::vector<MemoryLog> logs;
  std::vector<int> gold;
  for (const auto& inst : data) {
    if (inst.people < 0) continue;  // only annotated documents take part
    const auto s = score_instance(ck.model, ck.eval_params(), inst, config.seed);
    logs.push_back(make_memory_log(inst.doc, s.run));
    gold.push_back(inst.people);
  }
  if (logs.empty()) throw ConfigError("no documents in the " + args.split + " split carry a people count");

  const auto sweep = sweep_threshold_count(logs, gold);
  const auto kl = overwrite_kl(logs);
  std::string per_doc = "doc_id,gold,predicted\n";
  for (std::size_t k = 0; k < logs.size(); ++k) {
    per_doc += logs[k].doc_id + "," + std::to_string(gold[k]) + "," +
               std::to_string(count_people(logs[k], sweep.best_threshold)) + "\n";
  }

  Outputs out(common, "count-people", config);
  out.write("alpha_sweep.csv", sweep_csv(sweep, "total_abs_error"));
  out.write("counts.csv", per_doc);
  json metrics;
  metrics["split"] = args.split;
  metrics["documents"] = logs.size();
  metrics["alpha"] = sweep.best_threshold;
  metrics["total_abs_error"] = sweep.best_value;
  metrics["mean_abs_error"] = sweep.best_value / static_cast<double>(logs.size());
  metrics["overwrite_kl"] = kl ? json(*kl) : json("no overwrites");
  out.write("metrics.json", metrics.dump(2) + "\n");
  out.finish();
  std::printf("alpha %.2f  mean abs error %.4f over %zu documents  KL %s\n", sweep.best_threshold,
              sweep.best_value / static_cast<double>(logs.size()), logs.size(),
              kl ? fmt(*kl, "%.4f").c_str() : "n/a (no overwrites)");
  return 0;
}

int cmd_visualize(const Common& common, const VisualizeArgs& args) {
  const RunConfig config = load_config(common);
  const auto ck = load_checkpoint(args.checkpoint);
  const auto data = load_split(config, args.split);
  if (data.empty()) throw ConfigError(args.split + " split is empty");
  auto it = data.begin();
  if (!args.doc_id.empty()) {
    it = std::find_if(data.begin(), data.end(), [&](const CorefInstance& i) { return i.doc.id == args.doc_id; });
    if (it == data.end()) throw ArgumentError("document '" + args.doc_id + "' is not in the " + args.split + " split");
  }
  const auto s = score_instance(ck.model, ck.eval_params(), *it, config.seed);
  const auto log = make_memory_log(it->doc, s.run);

  Outputs out(common, "visualize", config);
  export_memory_log(log, out.path(log.doc_id + ".jsonl"));
  render_heatmap(log, out.path(log.doc_id + ".svg"));
  out.finish({{"doc_id", log.doc_id}});
  std::printf("wrote %s.svg (%ld tokens, %ld cells)\n", log.doc_id.c_str(), static_cast<long>(log.length()),
              static_cast<long>(log.cells()));
  return 0;
}

int cmd_gen_synth(const Common& common) {
  const RunConfig config = load_config(common);
  Outputs out(common, "gen-synth", config);
  json sizes = json::object();
  for (const std::string split : {"train", "val", "test"}) {
    const int docs = synth_docs(config, split);
    if (docs == 0) continue;
    std::vector<CorefInstance> instances;
    for (auto& d : generate_synthetic(config.synthetic_split(split, docs))) instances.push_back(std::move(d.instance));
    write_corpus(common.out / split, instances);
    for (const char* ext : {".tsv", ".ptem", ".ptem.manifest.json", ".counts.tsv"}) out.path(split + ext);
    sizes[split] = docs;
  }
  out.finish({{"documents", sizes}});
  std::printf("wrote synthetic corpus to %s\n", common.out.string().c_str());
  return 0;
}

int cmd_sweep_memory(const Common& common) {
  const RunConfig config = load_config(common);
  const auto train = load_split(config, "train");
  const auto val = load_split(config, "val");
  if (train.empty() || val.empty()) throw ConfigError("memory sweep needs both a training and a validation split");

  struct Cell {
    int cells;
    int run;
  };
  std::vector<Cell> grid;
  for (int n : config.sweep.cells) {
    for (int r = 0; r < config.sweep.runs; ++r) grid.push_back({n, r});
  }
  // Every grid cell is self-contained, so jobs only change wall time.
  std::vector<double> f1(grid.size());
  const std::size_t jobs = static_cast<std::size_t>(config.sweep.jobs);
  for (std::size_t start = 0; start < grid.size(); start += jobs) {
    std::vector<std::future<double>> batch;
    for (std::size_t k = start; k < std::min(grid.size(), start + jobs); ++k) {
      batch.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async,
                                 [&, k] { return best_f1_of_run(config, grid[k].cells, grid[k].run, train, val); }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      f1[start + k] = batch[k].get();
      std::printf("cells %2d  run %d  val_f1 %.4f\n", grid[start + k].cells, grid[start + k].run, f1[start + k]);
      std::fflush(stdout);
    }
  }

  std::string runs_csv = "cells,run,val_f1\n";
  std::string summary = "cells,mean_f1,std_f1,runs\n";
  PlotSeries series{"validation F1", {}, {}, {}};
  for (int n : config.sweep.cells) {
    std::vector<double> v;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (grid[k].cells != n) continue;
      v.push_back(f1[k]);
      runs_csv += std::to_string(n) + "," + std::to_string(grid[k].run) + "," + fmt(f1[k]) + "\n";
    }
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    summary += std::to_string(n) + "," + fmt(mean) + "," + fmt(sd) + "," + std::to_string(v.size()) + "\n";
    series.x.push_back(n);
    series.mean.push_back(mean);
    series.stddev.push_back(sd);
  }

  Outputs out(common, "sweep-memory", config);
  out.write("sweep_runs.csv", runs_csv);
  out.write("sweep.csv", summary);
  out.write("sweep.svg", line_plot_svg({series}, "memory cells", "validation F1"));
  out.finish();
  std::fputs(summary.c_str(), stdout);
  return 0;
}

int cmd_grad_check(const Common& common) {
  const RunConfig config = load_config(common);
  SyntheticSpec spec;
  spec.num_docs = 3;
  spec.doc_length = {5, 5};
  spec.num_entities = {2, 2};
  spec.mentions_per_entity = {2, 2};
  spec.name_tokens = {1, 1};
  spec.embedding_dim = 4;
  spec.seed = config.seed;
  spec.id_prefix = "gc";
  std::vector<CorefInstance> docs;
  for (auto& d : generate_synthetic(spec)) docs.push_back(std::move(d.instance));

  GradCheckOptions opt;
  opt.tolerance = config.grad_check.tolerance;
  opt.step = config.grad_check.step;
  opt.lambda = config.train.lambda;
  opt.weights = config.train.weights;

  std::string csv = "variant,coref_hidden_layers,doc_id,max_relative_error,passed\n";
  bool all = true;
  double worst = 0.0;
  for (Variant v : {Variant::Vanilla, Variant::LearnedInit, Variant::FixedKey}) {
    for (int layers : {0, 1}) {
      ModelConfig m;
      m.input_dim = 4;
      m.hidden = 6;
      m.mlp_hidden = 5;
      m.cells = 3;
      m.key_dim = 2;
      m.dropout = 0.2;
      m.variant = v;
      m.coref_hidden_layers = layers;
      const auto params = ModelParams::initialized(m, mix_seed(config.seed, static_cast<std::uint64_t>(v) * 2 + layers));
      double cell_worst = 0.0;
      for (const auto& inst : docs) {
        const auto r = grad_check(m, params, inst, opt);
        all = all && r.passed;
        cell_worst = std::max(cell_worst, r.max_relative_error);
        csv += to_string(v) + "," + std::to_string(layers) + "," + inst.doc.id + "," + fmt(r.max_relative_error, "%.3e") +
               "," + (r.passed ? "true" : "false") + "\n";
      }
      worst = std::max(worst, cell_worst);
      std::printf("%-12s layers %d  max relative error %.3e\n", to_string(v).c_str(), layers, cell_worst);
    }
  }

  Outputs out(common, "grad-check", config);
  out.write("grad_check.csv", csv);
  out.finish({{"max_relative_error", worst}, {"tolerance", opt.tolerance}, {"passed", all}});
  std::printf("%s: max relative error %.3e (tolerance %.0e)\n", all ? "passed" : "FAILED", worst, opt.tolerance);
  if (!all) throw NumericError("gradient check exceeded tolerance");
  return 0;
}

}  // namespace petra::cli
