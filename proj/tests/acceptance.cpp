// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include "commands.hpp"
#include "json.hpp"
#include "petra/config.hpp"
#include "petra/coref_link.hpp"
#include "petra/evaluation.hpp"
#include "petra/memory.hpp"
#include "petra/model.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace petra;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("petra_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

Vec random_vec(Index n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// Controller with uniform init, then every weight multiplied by `scale` so that
// large scales push the MLP outputs into saturation.
ControllerParams random_controller(const MemoryConfig& mc, Index mlp_hidden, std::mt19937_64& rng, double scale) {
  auto p = make_controller(mc, mlp_hidden);
  for (Mlp* m : {&p.entity_mlp, &p.sim_mlp, &p.coref_mlp}) {
    m->init_uniform(rng);
    for (auto& l : m->layers()) {
      l.weight *= scale;
      l.bias *= scale;
    }
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index i = 0; i < p.cell_init.size(); ++i) p.cell_init.data()[i] = u(rng);
  return p;
}

Outcome gradient_check() {
  const auto dir = scratch("grad");
  cli::Common common;
  common.out = dir;
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  try {
    cli::cmd_grad_check(common);
  } catch (const std::exception&) {
    ok = false;
  }
  const double secs = seconds_since(t0);
  const auto m = read_json(dir / "manifest.json");
  const double worst = m.at("max_relative_error").get<double>();
  fs::remove_all(dir);
  return {ok && worst < 1e-4 && secs < 30.0, fmt("max relative error %.3e, %.2f s", worst, secs)};
}

Outcome simplex_invariants() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> cells(1, 10), hidden(2, 8), variant(0, 2), len(1, 30);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_sum = 0.0, worst_over = 0.0, worst_masked = 0.0;
  long steps[2] = {0, 0}, masked = 0;
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    const int m = mode == Mode::Train ? 0 : 1;
    while (steps[m] < 10000) {
      MemoryConfig mc;
      mc.cells = cells(rng);
      mc.hidden = hidden(rng);
      mc.variant = static_cast<Variant>(variant(rng));
      mc.key_dim = 1 + static_cast<Index>(unit(rng) * static_cast<double>(mc.hidden - 1));
      mc.tau = 0.05 + 2.0 * unit(rng);
      mc.mode = mode;
      const double scale = std::pow(10.0, 2.0 * unit(rng) - 0.5);
      const auto params = random_controller(mc, 4, rng, scale);
      auto state = init_memory(mc, params);
      const int T = len(rng);
      for (int t = 0; t < T; ++t, ++steps[m]) {
        const RowVec h = random_vec(mc.hidden, rng, 1.0 + 3.0 * unit(rng)).transpose();
        const auto r = memory_step(state, h, params, mc, rng);
        const auto& tr = r.trace;
        worst_sum = std::max(worst_sum, std::abs(tr.coref.sum() + tr.new_entity - tr.entity));
        worst_over = std::max(worst_over, std::abs(tr.overwrite.sum() - tr.new_entity));
        for (Index i = 0; i < mc.cells; ++i) {
          if (state.usage(i) == 0.0) {
            ++masked;
            worst_masked = std::max(worst_masked, tr.coref(i));
          }
        }
        state = r.state;
      }
    }
  }
  const bool ok = worst_sum < 1e-6 && worst_over < 1e-6 && worst_masked < 1e-30 && masked > 0;
  return {ok, fmt("%ld train + %ld infer steps; |sum c + n - e| %.1e, |sum o - n| %.1e, "
                  "max coref on %ld masked cells %.1e",
                  steps[0], steps[1], worst_sum, worst_over, masked, worst_masked)};
}

// Direct evaluation of the link probability, written out independently.
double link_direct(const Mat& o, const Mat& c, Index t1, Index t2) {
  double total = 0.0;
  for (Index i = 0; i < o.cols(); ++i) {
    double keep = 1.0;
    for (Index j = t1 + 1; j <= t2; ++j) keep *= 1.0 - o(j, i);
    total += (o(t1, i) + c(t1, i)) * keep * c(t2, i);
  }
  return total;
}

Outcome link_oracle() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> len(1, 12), cells(1, 5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  long pairs = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const Index T = len(rng), N = cells(rng);
    TraceMatrix tm{Mat(T, N), Mat(T, N)};
    for (Index t = 0; t < T; ++t) {
      // A valid step: e * softmax over (c_1..c_N, n), n spread over the cells.
      const Vec logits = random_vec(N + 1, rng, 2.0);
      const Vec p = (logits.array() - logits.maxCoeff()).exp().matrix();
      const double e = unit(rng);
      const Vec dist = e * p / p.sum();
      const Vec spread = random_vec(N, rng, 2.0).array().exp().matrix();
      tm.coref.row(t) = dist.head(N).transpose();
      tm.overwrite.row(t) = (dist(N) * spread / spread.sum()).transpose();
    }
    std::vector<TokenPair> queries;
    for (Index b = 1; b < T; ++b)
      for (Index a = 0; a < b; ++a) queries.push_back({a, b});
    const auto fast = link_probability_all_pairs(tm, queries);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const double direct = link_direct(tm.overwrite, tm.coref, queries[q].first, queries[q].second);
      worst = std::max(worst, std::abs(fast[q] - direct));
      worst = std::max(worst, std::abs(link_probability(tm, queries[q].first, queries[q].second) - direct));
      ++pairs;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10.0, fmt("%ld pairs, max abs diff %.2e, %.2f s", pairs, worst, secs)};
}

Outcome usage_dynamics() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool exact = true;
  double worst_pow = 0.0;
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    for (int trial = 0; trial < 20; ++trial) {
      MemoryConfig mc;
      mc.cells = 6;
      mc.hidden = 5;
      mc.mode = mode;
      auto params = random_controller(mc, 4, rng, 1.0);
      // Entity probability underflows to exactly zero, so nothing fires.
      params.entity_mlp.layers().back().bias(0) = -1000.0;
      MemoryState state = init_memory(mc, params);
      for (Index i = 0; i < mc.cells; ++i) state.usage(i) = unit(rng);
      state.content = Mat::Random(mc.cells, mc.hidden);
      const Vec u0 = state.usage;
      Vec expected = u0;
      for (int k = 1; k <= 200; ++k) {
        const RowVec h = random_vec(mc.hidden, rng, 1.0).transpose();
        state = memory_step(state, h, params, mc, rng).state;
        expected *= mc.gamma;
        exact = exact && (state.usage.array() == expected.array()).all();
        const Vec closed = std::pow(mc.gamma, k) * u0;
        worst_pow = std::max(worst_pow, ((state.usage - closed).array().abs() / closed.array()).maxCoeff());
      }
    }
  }

  // Fuzzed operations: saturated and ordinary controllers, every variant and mode.
  std::uniform_int_distribution<int> cells(1, 8), variant(0, 2);
  double lo = 1.0, hi = 0.0;
  long steps = 0;
  for (int run = 0; run < 400; ++run) {
    MemoryConfig mc;
    mc.cells = cells(rng);
    mc.hidden = 4;
    mc.key_dim = 2;
    mc.variant = static_cast<Variant>(variant(rng));
    mc.mode = run % 2 ? Mode::Train : Mode::Infer;
    mc.tau = 0.05 + unit(rng);
    const auto params = random_controller(mc, 4, rng, std::pow(10.0, 2.0 * unit(rng) - 0.5));
    auto state = init_memory(mc, params);
    for (int t = 0; t < 50; ++t, ++steps) {
      state = memory_step(state, random_vec(4, rng, 3.0).transpose(), params, mc, rng).state;
      lo = std::min(lo, state.usage.minCoeff());
      hi = std::max(hi, state.usage.maxCoeff());
    }
  }
  // Closed form and iterated products differ only by rounding.
  const bool ok = exact && worst_pow < 1e-12 && lo >= 0.0 && hi <= 1.0;
  return {ok, fmt("gamma^k decay %s over 200 idle steps (rel. diff to pow %.1e); "
                  "usage range [%.3g, %.3g] over %ld fuzzed steps",
                  exact ? "exact" : "NOT exact", worst_pow, lo, hi, steps)};
}

Outcome parameter_counts() {
  auto count = [](Variant v, Index cells) {
    ModelConfig m;
    m.variant = v;
    m.cells = cells;
    return ModelParams::zeros(m).parameter_count();
  };
  const ModelConfig base;
  const Index v2 = count(Variant::Vanilla, 2), v20 = count(Variant::Vanilla, 20);
  bool ok = v2 == v20;
  for (Index n : {2, 20}) {
    ok = ok && count(Variant::LearnedInit, n) - count(Variant::Vanilla, n) == n * base.hidden;
    ok = ok && count(Variant::FixedKey, n) - count(Variant::Vanilla, n) == n * 20;
  }
  return {ok, fmt("vanilla %ld (N=2) vs %ld (N=20); learned_init +%ld, fixed_key +%ld at N=20",
                  static_cast<long>(v2), static_cast<long>(v20),
                  static_cast<long>(count(Variant::LearnedInit, 20) - v20),
                  static_cast<long>(count(Variant::FixedKey, 20) - v20))};
}

struct TrainRun {
  fs::path dir;
  double seconds = 0.0;
};

TrainRun train_synthetic(const std::string& name) {
  TrainRun run{scratch(name)};
  cli::Common common;
  common.config_path = PETRA_SYNTHETIC_CONFIG;
  common.out = run.dir;
  const auto t0 = std::chrono::steady_clock::now();
  cli::cmd_train(common, {});
  run.seconds = seconds_since(t0);
  return run;
}

Outcome learnability(const TrainRun& run) {
  const auto config = RunConfig::load(PETRA_SYNTHETIC_CONFIG);
  bool shape = config.synth.train_docs == 500 && config.synth.val_docs == 100 && config.model.hidden == 64 &&
               config.model.cells == 8 && config.train.max_epochs <= 50;
  for (const char* split : {"train", "val"}) {
    const int n = split[0] == 't' ? config.synth.train_docs : config.synth.val_docs;
    for (const auto& d : generate_synthetic(config.synthetic_split(split, n))) {
      const auto& doc = d.instance.doc;
      const auto T = static_cast<Index>(doc.tokens.size());
      const auto K = d.chains.size();
      shape = shape && doc.dim() == 32 && T >= 36 && T <= 44 && K >= 2 && K <= 4;
    }
  }

  const auto manifest = read_json(run.dir / "manifest.json");
  const double f1 = manifest.at("best_val_f1").get<double>();
  const int epochs = manifest.at("epochs").get<int>();

  const auto count_dir = scratch("count");
  cli::Common common;
  common.config_path = PETRA_SYNTHETIC_CONFIG;
  common.out = count_dir;
  cli::cmd_count_people(common, {(run.dir / "checkpoint.ptck").string(), "val"});
  const auto metrics = read_json(count_dir / "metrics.json");
  const double count_error = metrics.at("mean_abs_error").get<double>();
  const double alpha = metrics.at("alpha").get<double>();
  fs::remove_all(count_dir);

  const bool ok = shape && f1 >= 0.90 && epochs <= 50 && run.seconds < 300.0 && count_error <= 0.3;
  return {ok, fmt("corpus shape %s; best val F1 %.4f at epoch %d of %d, %.1f s; "
                  "people count error %.3f per document at alpha %.2f",
                  shape ? "ok" : "WRONG", f1, manifest.at("best_epoch").get<int>(), epochs, run.seconds, count_error,
                  alpha)};
}

Outcome threshold_sweeps() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> size(0, 60), cells(1, 6), len(1, 15), people(0, 8);
  int mismatches = 0, trials = 0;
  for (int trial = 0; trial < 500; ++trial, ++trials) {
    // Scores often sit exactly on grid points to exercise the >= boundary.
    std::vector<ScoredLink> links(static_cast<std::size_t>(size(rng)));
    for (auto& l : links) {
      l.score = unit(rng) < 0.3 ? std::round(unit(rng) * 100.0) / 100.0 : unit(rng);
      l.label = unit(rng) < 0.4;
    }
    double best = -1.0, best_th = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double th = k / 100.0;
      long tp = 0, fp = 0, fn = 0;
      for (const auto& l : links) {
        const bool pred = l.score >= th;
        tp += pred && l.label;
        fp += pred && !l.label;
        fn += !pred && l.label;
      }
      const double f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
      if (f1 > best) best = f1, best_th = th;
    }
    const auto s = sweep_threshold_f1(links);
    if (s.best_threshold != best_th || std::abs(s.best_value - best) > 1e-12 || s.values.size() != 100) ++mismatches;

    std::vector<MemoryLog> logs(static_cast<std::size_t>(1 + size(rng) % 10));
    std::vector<int> gold;
    for (auto& log : logs) {
      log.overwrite = Mat(len(rng), cells(rng));
      for (Index i = 0; i < log.overwrite.size(); ++i) {
        log.overwrite.data()[i] = unit(rng) < 0.3 ? std::round(unit(rng) * 100.0) / 100.0 : unit(rng);
      }
      gold.push_back(people(rng));
    }
    double best_err = 0.0, best_alpha = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double alpha = k / 100.0;
      double err = 0.0;
      for (std::size_t d = 0; d < logs.size(); ++d) {
        int n = 0;
        for (Index t = 0; t < logs[d].overwrite.rows(); ++t)
          for (Index i = 0; i < logs[d].overwrite.cols(); ++i) n += logs[d].overwrite(t, i) >= alpha;
        err += std::abs(n - gold[d]);
      }
      if (k == 1 || err < best_err) best_err = err, best_alpha = alpha;
    }
    const auto c = sweep_threshold_count(logs, gold);
    if (c.best_threshold != best_alpha || c.best_value != best_err) ++mismatches;
  }
  return {mismatches == 0, fmt("%d random F1 and count sweeps, %d mismatches", trials, mismatches)};
}

MemoryLog overwrite_log(const Mat& o) {
  MemoryLog log;
  log.overwrite = o;
  log.coref = Mat::Zero(o.rows(), o.cols());
  log.usage = Mat::Zero(o.rows(), o.cols());
  log.entity = Vec::Zero(o.rows());
  return log;
}

Outcome kl_diagnostic() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  std::uniform_int_distribution<int> cells(1, 20), len(1, 50), docs(1, 8);
  double worst_uniform = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index N = cells(rng);
    std::vector<MemoryLog> logs;
    for (int d = docs(rng); d > 0; --d) {
      Mat o(len(rng), N);
      for (Index t = 0; t < o.rows(); ++t) o.row(t).setConstant(unit(rng) / static_cast<double>(N));
      logs.push_back(overwrite_log(o));
    }
    worst_uniform = std::max(worst_uniform, *overwrite_kl(logs));
  }
  double worst_onehot = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index hot = trial % 2;
    std::vector<MemoryLog> logs;
    for (int d = docs(rng); d > 0; --d) {
      Mat o = Mat::Zero(len(rng), 2);
      for (Index t = 0; t < o.rows(); ++t) o(t, hot) = unit(rng);
      logs.push_back(overwrite_log(o));
    }
    worst_onehot = std::max(worst_onehot, std::abs(*overwrite_kl(logs) - std::log(2.0)));
  }
  return {worst_uniform < 1e-12 && worst_onehot < 1e-9,
          fmt("uniform logs KL <= %.1e; one-hot N=2 |KL - ln 2| <= %.1e", worst_uniform, worst_onehot)};
}

Outcome determinism(const TrainRun& first) {
  const auto second = train_synthetic("train_repeat");
  int compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(first.dir)) {
    const auto name = entry.path().filename();
    ++compared;
    if (!fs::exists(second.dir / name) || slurp(entry.path()) != slurp(second.dir / name)) ++differing;
  }
  const bool core = fs::exists(first.dir / "checkpoint.ptck") && fs::exists(first.dir / "history.csv");
  fs::remove_all(second.dir);
  return {core && differing == 0, fmt("%d output files compared across two training runs, %d differ", compared, differing)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };

  report("gradient check", gradient_check);
  report("simplex invariants", simplex_invariants);
  report("incremental link probability", link_oracle);
  report("usage dynamics", usage_dynamics);
  report("parameter counts", parameter_counts);
  report("threshold sweeps", threshold_sweeps);
  report("overwrite KL", kl_diagnostic);

  TrainRun run;
  std::string train_error;
  try {
    run = train_synthetic("train");
  } catch (const std::exception& e) {
    train_error = e.what();
  }
  auto needs_run = [&](std::function<Outcome()> f) {
    return [&, f]() -> Outcome {
      if (!train_error.empty()) return {false, "training failed: " + train_error};
      return f();
    };
  };
  report("synthetic learnability", needs_run([&] { return learnability(run); }));
  report("determinism", needs_run([&] { return determinism(run); }));
  fs::remove_all(run.dir);

  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
