#include "petra/trainer.hpp"

#include "petra/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>

namespace petra {

using nlohmann::json;

void TrainConfig::validate() const {
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (!(lr_init > 0.0) || !(lr_min > 0.0) || lr_min > lr_init) throw ConfigError("need 0 < lr_min <= lr_init");
  if (lr_patience < 1 || stop_patience < 1) throw ConfigError("patience values must be at least 1");
  if (!(tau_init > 0.0)) throw ConfigError("tau_init must be positive");
  if (tau_halve_every < 1) throw ConfigError("tau_halve_every must be at least 1");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

double TrainConfig::tau_at(int epoch) const { return std::ldexp(tau_init, -(epoch / tau_halve_every)); }

PlateauSchedule::PlateauSchedule(const TrainConfig& config)
    : lr_(config.lr_init),
      lr_min_(config.lr_min),
      lr_patience_(config.lr_patience),
      stop_patience_(config.stop_patience),
      tolerance_(config.improvement_tolerance) {}

PlateauSchedule::Decision PlateauSchedule::observe(double value) {
  Decision d;
  if (value > best_ + tolerance_) {
    best_ = value;
    since_best_ = 0;
    d.improved = true;
    return d;
  }
  ++since_best_;
  if (since_best_ % lr_patience_ == 0) lr_ = std::max(lr_ * 0.5, lr_min_);
  d.stop = since_best_ >= stop_patience_;
  return d;
}

AdamState AdamState::zeros(const ModelConfig& config) {
  return {ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

void AdamState::update(ModelParams& params, ModelParams& grads, double lr, const TrainConfig& config) {
  ++step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  auto p = params.views();
  auto g = grads.views();
  auto m = first.views();
  auto v = second.views();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].values.size(); ++i) {
      const double gi = g[k].values[i];
      double& mi = m[k].values[i];
      double& vi = v[k].values[i];
      mi = b1 * mi + (1.0 - b1) * gi;
      vi = b2 * vi + (1.0 - b2) * gi * gi;
      p[k].values[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + config.adam_eps);
    }
  }
}

// ---- checkpoint container -------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::uint32_t kDtypeF64 = 2;

json model_to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden", c.hidden},
          {"mlp_hidden", c.mlp_hidden},
          {"coref_hidden_layers", c.coref_hidden_layers},
          {"cells", c.cells},
          {"variant", to_string(c.variant)},
          {"key_dim", c.key_dim},
          {"gamma", c.gamma},
          {"dropout", c.dropout},
          {"coref_usage_threshold", c.coref_usage_threshold},
          {"update_gate_bias", c.update_gate_bias}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<Index>();
  c.hidden = j.at("hidden").get<Index>();
  c.mlp_hidden = j.at("mlp_hidden").get<Index>();
  c.coref_hidden_layers = j.at("coref_hidden_layers").get<int>();
  c.cells = j.at("cells").get<Index>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.key_dim = j.at("key_dim").get<Index>();
  c.gamma = j.at("gamma").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.coref_usage_threshold = j.at("coref_usage_threshold").get<double>();
  c.update_gate_bias = j.value("update_gate_bias", 0.0);
  return c;
}

json train_to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs},
          {"lr_init", c.lr_init},
          {"lr_min", c.lr_min},
          {"lr_patience", c.lr_patience},
          {"stop_patience", c.stop_patience},
          {"tau_init", c.tau_init},
          {"tau_halve_every", c.tau_halve_every},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"lambda", c.lambda},
          {"self_link_weight", c.weights.self_link},
          {"positive_weight", c.weights.positive},
          {"negative_weight", c.weights.negative},
          {"improvement_tolerance", c.improvement_tolerance},
          {"seed", c.seed}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.max_epochs = j.at("max_epochs").get<int>();
  c.lr_init = j.at("lr_init").get<double>();
  c.lr_min = j.at("lr_min").get<double>();
  c.lr_patience = j.at("lr_patience").get<int>();
  c.stop_patience = j.at("stop_patience").get<int>();
  c.tau_init = j.at("tau_init").get<double>();
  c.tau_halve_every = j.at("tau_halve_every").get<int>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.weights.self_link = j.at("self_link_weight").get<double>();
  c.weights.positive = j.at("positive_weight").get<double>();
  c.weights.negative = j.at("negative_weight").get<double>();
  c.improvement_tolerance = j.at("improvement_tolerance").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_tensors(std::ostream& out, const std::string& prefix, ModelParams params) {
  for (const auto& view : params.views()) {
    const std::string name = prefix + view.name;
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, kDtypeF64);
    put_u32(out, static_cast<std::uint32_t>(view.rows));
    put_u32(out, static_cast<std::uint32_t>(view.cols));
    out.write(reinterpret_cast<const char*>(view.values.data()),
              static_cast<std::streamsize>(view.values.size_bytes()));
  }
}

struct RawTensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}
  void read(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw ConsistencyError(source_ + ": truncated checkpoint");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    if (n > remaining()) throw ConsistencyError(source_ + ": truncated checkpoint");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void fill_params(ModelParams& params, const std::string& prefix, const std::map<std::string, RawTensor>& tensors,
                 const std::string& source) {
  for (auto& view : params.views()) {
    auto it = tensors.find(prefix + view.name);
    if (it == tensors.end()) throw ConsistencyError(source + ": missing tensor " + prefix + view.name);
    if (it->second.rows != view.rows || it->second.cols != view.cols) {
      throw ConsistencyError(source + ": tensor " + prefix + view.name + " has the wrong shape");
    }
    std::copy(it->second.values.begin(), it->second.values.end(), view.values.begin());
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json meta{{"model", model_to_json(ck.model)},
            {"train", train_to_json(ck.train)},
            {"epoch", ck.epoch},
            {"tau", ck.tau},
            {"lr", ck.lr},
            {"rng_state", ck.rng_state},
            {"best_f1", ck.best_f1},
            {"best_epoch", ck.best_epoch},
            {"epochs_since_best", ck.epochs_since_best},
            {"finished", ck.finished},
            {"adam_step", ck.adam ? ck.adam->step : 0}};
  json hist = json::array();
  for (const auto& r : ck.history) {
    hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_f1", r.val_f1}, {"lr", r.lr}, {"tau", r.tau}});
  }
  meta["history"] = hist;

  std::ostringstream out;
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::uint32_t groups = 1 + (ck.adam ? 2 : 0) + (ck.best_params ? 1 : 0);
  put_u32(out, groups * static_cast<std::uint32_t>(ModelParams(ck.params).views().size()));
  put_tensors(out, "param/", ck.params);
  if (ck.adam) {
    put_tensors(out, "adam_m/", ck.adam->first);
    put_tensors(out, "adam_v/", ck.adam->second);
  }
  if (ck.best_params) put_tensors(out, "best/", *ck.best_params);
  const std::string blob = meta.dump();
  put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out << blob;
  write_text_file(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Reader reader(bytes, path.string());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad checkpoint magic");
  }
  reader.str(4);
  const auto version = reader.u32();
  if (version != kCheckpointVersion) throw FormatError(path.string() + ": unsupported checkpoint version");
  const auto count = reader.u32();
  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = reader.str(reader.u32());
    const auto dtype = reader.u32();
    RawTensor t;
    t.rows = reader.u32();
    t.cols = reader.u32();
    const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
    if (dtype == kDtypeF64) {
      if (n * sizeof(double) > reader.remaining()) throw ConsistencyError(path.string() + ": truncated checkpoint");
      t.values.resize(n);
      reader.read(t.values.data(), n * sizeof(double));
    } else if (dtype == kDtypeF32) {
      if (n * sizeof(float) > reader.remaining()) throw ConsistencyError(path.string() + ": truncated checkpoint");
      std::vector<float> f(n);
      reader.read(f.data(), n * sizeof(float));
      t.values.assign(f.begin(), f.end());
    } else {
      throw FormatError(path.string() + ": unknown tensor dtype " + std::to_string(dtype));
    }
    tensors.emplace(name, std::move(t));
  }
  const auto blob = reader.str(reader.u32());
  Checkpoint ck;
  try {
    const auto meta = json::parse(blob);
    ck.model = model_from_json(meta.at("model"));
    ck.train = train_from_json(meta.at("train"));
    ck.epoch = meta.at("epoch").get<int>();
    ck.tau = meta.at("tau").get<double>();
    ck.lr = meta.at("lr").get<double>();
    ck.rng_state = meta.at("rng_state").get<std::string>();
    ck.best_f1 = meta.at("best_f1").get<double>();
    ck.best_epoch = meta.at("best_epoch").get<int>();
    ck.epochs_since_best = meta.at("epochs_since_best").get<int>();
    ck.finished = meta.at("finished").get<bool>();
    for (const auto& r : meta.at("history")) {
      ck.history.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(), r.at("val_f1").get<double>(),
                            r.at("lr").get<double>(), r.at("tau").get<double>()});
    }
    ck.params = ModelParams::zeros(ck.model);
    fill_params(ck.params, "param/", tensors, path.string());
    if (tensors.count("adam_m/encoder.bias")) {
      ck.adam = AdamState::zeros(ck.model);
      fill_params(ck.adam->first, "adam_m/", tensors, path.string());
      fill_params(ck.adam->second, "adam_v/", tensors, path.string());
      ck.adam->step = meta.at("adam_step").get<long>();
    }
    if (tensors.count("best/encoder.bias")) {
      ck.best_params = ModelParams::zeros(ck.model);
      fill_params(*ck.best_params, "best/", tensors, path.string());
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  return ck;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_f1,lr,tau\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_f1, r.lr, r.tau);
    out << buf;
  }
  return out.str();
}

double validation_f1(const ModelConfig& config, const ModelParams& params, std::span<const CorefInstance> validation,
                     std::uint64_t seed) {
  std::vector<InstanceScores> scores;
  scores.reserve(validation.size());
  for (const auto& inst : validation) {
    auto s = score_instance(config, params, inst, seed);
    s.run = {};
    scores.push_back(std::move(s));
  }
  const auto links = scored_links(scores, validation);
  return sweep_threshold_f1(links).best_value;
}

// ---- trainer ----------------------------------------------------------------

Trainer::Trainer(ModelConfig model, TrainConfig train, std::span<const CorefInstance> corpus,
                 std::span<const CorefInstance> validation)
    : model_(std::move(model)),
      train_(std::move(train)),
      corpus_(corpus),
      validation_(validation),
      params_(ModelParams::initialized(model_, mix_seed(train_.seed, 0x9a7a))),
      best_params_(params_),
      adam_(AdamState::zeros(model_)),
      schedule_(train_),
      rng_(mix_seed(train_.seed, 0x5eed)) {
  train_.validate();
  if (corpus_.empty()) throw ArgumentError("training corpus is empty");
  for (const auto& inst : corpus_) {
    if (inst.doc.dim() != model_.input_dim) throw ShapeError("document '" + inst.doc.id + "' has the wrong embedding dimension");
  }
  finished_ = train_.max_epochs == 0;
}

Trainer::Trainer(const Checkpoint& ck, std::span<const CorefInstance> corpus,
                 std::span<const CorefInstance> validation)
    : model_(ck.model),
      train_(ck.train),
      corpus_(corpus),
      validation_(validation),
      params_(ck.params),
      best_params_(ck.best_params ? *ck.best_params : ck.params),
      adam_(ck.adam ? *ck.adam : AdamState::zeros(ck.model)),
      schedule_(ck.train),
      epoch_(ck.epoch),
      best_epoch_(ck.best_epoch),
      finished_(ck.finished),
      history_(ck.history) {
  schedule_.restore(ck.lr, ck.best_f1, ck.epochs_since_best);
  std::istringstream state(ck.rng_state);
  state >> rng_;
  if (!state) throw FormatError("checkpoint RNG state is unreadable");
}

EpochRecord Trainer::run_epoch() {
  if (finished_) throw ArgumentError("training already finished");
  const double tau = train_.tau_at(epoch_);
  const double lr = schedule_.lr();

  std::vector<std::size_t> order(corpus_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  double loss_sum = 0.0;
  for (std::size_t step = 0; step < order.size(); ++step) {
    const auto& inst = corpus_[order[step]];
    auto doc_rng = document_rng(train_.seed, inst.doc.id, static_cast<std::uint64_t>(epoch_) + 1);
    DocumentCache cache;
    const auto run = run_document(model_, params_, inst.doc, Mode::Train, tau, doc_rng, &cache);
    LossGradient loss_grad;
    const auto loss = total_loss(inst, run.traces, run.entity, train_.lambda, train_.weights, &loss_grad);
    if (!std::isfinite(loss.total)) {
      throw NumericError("non-finite loss on document '" + inst.doc.id + "' at epoch " + std::to_string(epoch_ + 1) +
                         ", step " + std::to_string(step + 1));
    }
    loss_sum += loss.total;
    ModelParams grads = ModelParams::zeros(model_);
    backward_document(model_, params_, cache, loss_grad, grads);
    adam_.update(params_, grads, lr, train_);
  }

  EpochRecord record;
  record.epoch = epoch_ + 1;
  record.train_loss = loss_sum / static_cast<double>(corpus_.size());
  record.val_f1 = validation_.empty() ? 0.0 : validation_f1(model_, params_, validation_, train_.seed);
  record.lr = lr;
  record.tau = tau;
  history_.push_back(record);

  const auto decision = schedule_.observe(record.val_f1);
  if (decision.improved) {
    best_params_ = params_;
    best_epoch_ = record.epoch;
  }
  ++epoch_;
  finished_ = decision.stop || epoch_ >= train_.max_epochs;
  return record;
}

void Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  while (!finished_) {
    const auto r = run_epoch();
    if (on_epoch) on_epoch(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.model = model_;
  ck.train = train_;
  ck.params = params_;
  ck.adam = adam_;
  ck.best_params = best_params_;
  ck.epoch = epoch_;
  ck.tau = train_.tau_at(epoch_);
  ck.lr = schedule_.lr();
  std::ostringstream state;
  state << rng_;
  ck.rng_state = state.str();
  ck.best_f1 = schedule_.best();
  ck.best_epoch = best_epoch_;
  ck.epochs_since_best = schedule_.epochs_since_best();
  ck.finished = finished_;
  ck.history = history_;
  return ck;
}

// ---- gradient check -----------------------------------------------------------

double instance_loss(const ModelConfig& config, const ModelParams& params, const CorefInstance& instance,
                     const GradCheckOptions& options, ModelParams* grads) {
  std::mt19937_64 rng(options.seed);
  DocumentCache cache;
  const auto run =
      run_document(config, params, instance.doc, Mode::Train, options.tau, rng, grads ? &cache : nullptr);
  LossGradient loss_grad;
  const auto loss =
      total_loss(instance, run.traces, run.entity, options.lambda, options.weights, grads ? &loss_grad : nullptr);
  if (grads) backward_document(config, params, cache, loss_grad, *grads);
  return loss.total;
}

GradCheckReport grad_check(const ModelConfig& config, const ModelParams& params, const CorefInstance& instance,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  ModelParams analytic = ModelParams::zeros(config);
  report.loss = instance_loss(config, params, instance, options, &analytic);

  ModelParams probe = params;
  auto probe_views = probe.views();
  auto analytic_views = analytic.views();
  for (std::size_t k = 0; k < probe_views.size(); ++k) {
    auto values = probe_views[k].values;
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = instance_loss(config, probe, instance, options);
      values[i] = saved - options.step;
      const double down = instance_loss(config, probe, instance, options);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic_views[k].values[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      f2 += numeric * numeric;
    }
    const double denom = std::sqrt(a2) + std::sqrt(f2);
    GradCheckReport::Entry e;
    e.name = probe_views[k].name;
    e.analytic_norm = std::sqrt(a2);
    e.relative_error = denom < 1e-10 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    report.tensors.push_back(std::move(e));
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace petra
