#include "doctest.h"

#include "petra/errors.hpp"
#include "petra/trainer.hpp"
#include "test_util.hpp"

#include <cmath>
#include <cstring>

using namespace petra;
using petra::testing::TempDir;

namespace {

std::vector<CorefInstance> tiny_corpus(int docs, std::uint64_t seed, int T = 5, int D = 4) {
  SyntheticSpec spec;
  spec.num_docs = docs;
  spec.doc_length = {T, T};
  spec.num_entities = {2, 2};
  spec.mentions_per_entity = {2, 2};
  spec.name_tokens = {1, 1};
  spec.embedding_dim = D;
  spec.seed = seed;
  std::vector<CorefInstance> out;
  for (auto& d : generate_synthetic(spec)) out.push_back(d.instance);
  return out;
}

ModelConfig tiny_model(Variant v = Variant::Vanilla) {
  ModelConfig c;
  c.input_dim = 4;
  c.hidden = 6;
  c.mlp_hidden = 5;
  c.cells = 3;
  c.variant = v;
  c.key_dim = 2;
  c.dropout = 0.2;
  return c;
}

TrainConfig quick_train(int epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.lr_init = 5e-3;
  return t;
}

bool same_params(ModelParams a, ModelParams b) {
  auto va = a.views(), vb = b.views();
  if (va.size() != vb.size()) return false;
  for (std::size_t k = 0; k < va.size(); ++k) {
    if (va[k].values.size() != vb[k].values.size()) return false;
    if (std::memcmp(va[k].values.data(), vb[k].values.data(), va[k].values.size_bytes()) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("plateau schedule keeps lr while improving") {
  PlateauSchedule s(TrainConfig{});
  for (int e = 0; e < 40; ++e) {
    const auto d = s.observe(0.01 * e);
    CHECK(d.improved);
    CHECK_FALSE(d.stop);
    CHECK(s.lr() == 1e-3);
  }
}

TEST_CASE("plateau schedule halves lr and stops after fifteen flat epochs") {
  PlateauSchedule s(TrainConfig{});
  CHECK(s.observe(0.5).improved);
  std::vector<double> lrs;
  int stopped_at = -1;
  for (int k = 1; k <= 20; ++k) {
    // Gains below the tolerance do not count as improvement.
    const auto d = s.observe(0.5 + 1e-7 * (k % 3));
    CHECK_FALSE(d.improved);
    lrs.push_back(s.lr());
    if (d.stop) {
      stopped_at = k;
      break;
    }
  }
  CHECK(stopped_at == 15);
  CHECK(lrs[3] == 1e-3);
  CHECK(lrs[4] == 5e-4);
  CHECK(lrs[9] == 2.5e-4);
  CHECK(lrs[14] == 1.25e-4);
  for (std::size_t k = 1; k < lrs.size(); ++k) CHECK(lrs[k] <= lrs[k - 1]);

  TrainConfig floor;
  floor.lr_min = 4e-4;
  PlateauSchedule f(floor);
  f.observe(1.0);
  for (int k = 0; k < 14; ++k) f.observe(0.0);
  CHECK(f.lr() == 4e-4);
}

TEST_CASE("temperature halves every ten epochs") {
  const TrainConfig t;
  CHECK(t.tau_at(0) == 1.0);
  CHECK(t.tau_at(9) == 1.0);
  CHECK(t.tau_at(10) == 0.5);
  CHECK(t.tau_at(19) == 0.5);
  CHECK(t.tau_at(20) == 0.25);
  CHECK(t.tau_at(45) == 0.0625);
}

TEST_CASE("gradients match finite differences for every variant") {
  const auto corpus = tiny_corpus(3, 5);
  for (Variant v : {Variant::Vanilla, Variant::LearnedInit, Variant::FixedKey}) {
    for (int layers : {0, 1}) {
      auto cfg = tiny_model(v);
      cfg.coref_hidden_layers = layers;
      const auto params = ModelParams::initialized(cfg, 100 + static_cast<int>(v));
      for (const auto& inst : corpus) {
        const auto report = grad_check(cfg, params, inst);
        INFO(to_string(v), " layers=", layers, " max=", report.max_relative_error);
        CHECK(report.passed);
        CHECK(std::isfinite(report.loss));
      }
    }
  }
}

TEST_CASE("entity output bias gradient equals the masked mean of e(1 - e)") {
  const auto corpus = tiny_corpus(1, 9, 8);
  const auto cfg = tiny_model();
  const auto params = ModelParams::initialized(cfg, 3);
  GradCheckOptions opt;
  opt.lambda = 1.0;
  opt.weights = {0.0, 0.0, 0.0};
  ModelParams grads = ModelParams::zeros(cfg);
  instance_loss(cfg, params, corpus[0], opt, &grads);

  std::mt19937_64 rng(opt.seed);
  const auto run = run_document(cfg, params, corpus[0].doc, Mode::Train, opt.tau, rng);
  const auto& in = corpus[0];
  double sum = 0.0;
  int count = 0;
  for (Index t = 0; t < run.entity.size(); ++t) {
    if (in.span_a.contains(t) || in.span_b.contains(t) || in.span_p.contains(t)) continue;
    sum += run.entity(t) * (1.0 - run.entity(t));
    ++count;
  }
  CHECK(grads.controller.entity_mlp.layers().back().bias(0) == doctest::Approx(sum / count).epsilon(1e-12));
}

TEST_CASE("finite-difference error is smallest at moderate step sizes") {
  const auto corpus = tiny_corpus(1, 2);
  const auto cfg = tiny_model();
  const auto params = ModelParams::initialized(cfg, 8);
  auto error_at = [&](double step) {
    GradCheckOptions opt;
    opt.step = step;
    return grad_check(cfg, params, corpus[0], opt).max_relative_error;
  };
  const double coarse = error_at(1e-1), mid = error_at(1e-5), fine = error_at(1e-11);
  CHECK(mid < coarse);
  CHECK(mid < fine);
}

TEST_CASE("update-gate bias offset shifts only the first H bias entries") {
  auto plain = tiny_model();
  auto shifted = plain;
  shifted.update_gate_bias = 3.0;
  const auto a = ModelParams::initialized(plain, 5);
  const auto b = ModelParams::initialized(shifted, 5);
  const Index H = plain.hidden;
  CHECK((b.encoder.bias.head(H).array() - a.encoder.bias.head(H).array() - 3.0).abs().maxCoeff() < 1e-15);
  CHECK(b.encoder.bias.tail(2 * H) == a.encoder.bias.tail(2 * H));
  CHECK(b.encoder.input_weight == a.encoder.input_weight);
  CHECK(b.parameter_count() == a.parameter_count());

  shifted.update_gate_bias = std::nan("");
  CHECK_THROWS_AS(shifted.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip preserves every field") {
  TempDir dir;
  const auto corpus = tiny_corpus(4, 1);
  const auto val = tiny_corpus(2, 2);
  Trainer tr(tiny_model(Variant::LearnedInit), quick_train(3), corpus, val);
  tr.run_epoch();
  tr.run_epoch();
  const auto ck = tr.checkpoint();
  save_checkpoint(ck, dir / "c.ptck");
  const auto back = load_checkpoint(dir / "c.ptck");
  CHECK(same_params(back.params, ck.params));
  CHECK(same_params(back.adam->first, ck.adam->first));
  CHECK(same_params(back.adam->second, ck.adam->second));
  CHECK(same_params(*back.best_params, *ck.best_params));
  CHECK(back.adam->step == ck.adam->step);
  CHECK(back.epoch == 2);
  CHECK(back.lr == ck.lr);
  CHECK(back.tau == ck.tau);
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.best_f1 == ck.best_f1);
  CHECK(back.model.variant == Variant::LearnedInit);
  CHECK(back.model.update_gate_bias == ck.model.update_gate_bias);
  CHECK(back.history.size() == 2);
  CHECK(history_csv(back.history) == history_csv(ck.history));

  // Saving the reloaded checkpoint reproduces the file byte for byte.
  save_checkpoint(back, dir / "d.ptck");
  CHECK(petra::testing::slurp(dir / "c.ptck") == petra::testing::slurp(dir / "d.ptck"));
}

TEST_CASE("damaged checkpoints are rejected") {
  TempDir dir;
  const auto corpus = tiny_corpus(2, 1);
  Trainer tr(tiny_model(), quick_train(1), corpus, {});
  save_checkpoint(tr.checkpoint(), dir / "c.ptck");
  const auto good = petra::testing::slurp(dir / "c.ptck");
  write_text_file(dir / "t.ptck", good.substr(0, good.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "t.ptck"), ConsistencyError);
  write_text_file(dir / "m.ptck", "XTCK" + good.substr(4));
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ptck"), FormatError);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  TempDir dir;
  const auto corpus = tiny_corpus(6, 3);
  const auto val = tiny_corpus(3, 4);
  Trainer straight(tiny_model(), quick_train(4), corpus, val);
  straight.run();

  Trainer first(tiny_model(), quick_train(4), corpus, val);
  first.run_epoch();
  first.run_epoch();
  save_checkpoint(first.checkpoint(), dir / "mid.ptck");
  Trainer second(load_checkpoint(dir / "mid.ptck"), corpus, val);
  second.run();

  CHECK(same_params(second.params(), straight.params()));
  CHECK(history_csv(second.history()) == history_csv(straight.history()));
}

TEST_CASE("training is bitwise deterministic for a seed") {
  TempDir dir;
  const auto corpus = tiny_corpus(5, 3);
  const auto val = tiny_corpus(3, 4);
  Trainer a(tiny_model(), quick_train(3), corpus, val);
  Trainer b(tiny_model(), quick_train(3), corpus, val);
  a.run();
  b.run();
  save_checkpoint(a.checkpoint(), dir / "a.ptck");
  save_checkpoint(b.checkpoint(), dir / "b.ptck");
  CHECK(petra::testing::slurp(dir / "a.ptck") == petra::testing::slurp(dir / "b.ptck"));
  CHECK(history_csv(a.history()) == history_csv(b.history()));

  auto other = quick_train(3);
  other.seed = 8;
  Trainer c(tiny_model(), other, corpus, val);
  c.run();
  CHECK_FALSE(same_params(a.params(), c.params()));
}

TEST_CASE("history follows the schedules") {
  const auto corpus = tiny_corpus(4, 3);
  const auto val = tiny_corpus(3, 4);
  auto t = quick_train(12);
  t.tau_halve_every = 4;
  Trainer tr(tiny_model(), t, corpus, val);
  tr.run();
  const auto& h = tr.history();
  REQUIRE_FALSE(h.empty());
  for (std::size_t k = 0; k < h.size(); ++k) {
    CHECK(h[k].epoch == static_cast<int>(k) + 1);
    CHECK(h[k].tau == t.tau_at(static_cast<int>(k)));
    CHECK(std::isfinite(h[k].train_loss));
    CHECK(h[k].val_f1 >= 0.0);
    CHECK(h[k].val_f1 <= 1.0);
    if (k) CHECK(h[k].lr <= h[k - 1].lr);
  }
  const auto csv = history_csv(h);
  CHECK(csv.rfind("epoch,train_loss,val_f1,lr,tau\n", 0) == 0);
}

TEST_CASE("zero epochs leaves the initial parameters") {
  const auto corpus = tiny_corpus(2, 3);
  Trainer tr(tiny_model(), quick_train(0), corpus, {});
  CHECK(tr.finished());
  CHECK(same_params(tr.params(), ModelParams::initialized(tiny_model(), mix_seed(7, 0x9a7a))));
}

TEST_CASE("non-finite loss names the document") {
  const auto corpus = tiny_corpus(2, 3);
  Trainer tr(tiny_model(), quick_train(1), corpus, {});
  auto ck = tr.checkpoint();
  ck.params.controller.entity_mlp.layers().back().bias(0) = std::nan("");
  Trainer broken(ck, corpus, {});
  try {
    broken.run_epoch();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("synth-000") != std::string::npos);
    CHECK(msg.find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("wrong embedding dimension is a shape error") {
  const auto corpus = tiny_corpus(2, 3, 5, 6);
  CHECK_THROWS_AS(Trainer(tiny_model(), quick_train(1), corpus, {}), ShapeError);
}
