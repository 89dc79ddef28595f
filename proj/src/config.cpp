#include "petra/config.hpp"

#include "petra/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>

namespace petra {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

long long parse_int(const std::string& raw) {
  std::size_t used = 0;
  long long v = std::stoll(raw, &used);
  if (used != raw.size()) throw std::invalid_argument("trailing characters");
  return v;
}

double parse_double(const std::string& raw) {
  std::size_t used = 0;
  double v = std::stod(raw, &used);
  if (used != raw.size()) throw std::invalid_argument("trailing characters");
  return v;
}

std::string parse_string(const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
  if (raw.find_first_of("\" ") != std::string::npos) throw std::invalid_argument("unterminated string");
  return raw;
}

std::vector<int> parse_int_list(const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') throw std::invalid_argument("expected [n, n, ...]");
  std::vector<int> out;
  std::stringstream ss(raw.substr(1, raw.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(parse_int(item)));
  }
  return out;
}

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <class T>
Field int_field(T& ref) {
  return {[&ref](const std::string& raw) { ref = static_cast<T>(parse_int(raw)); },
          [&ref] { return std::to_string(ref); }};
}

Field double_field(double& ref) {
  return {[&ref](const std::string& raw) { ref = parse_double(raw); }, [&ref] { return format_double(ref); }};
}

Field string_field(std::string& ref) {
  return {[&ref](const std::string& raw) { ref = parse_string(raw); }, [&ref] { return "\"" + ref + "\""; }};
}

std::map<std::string, Field> fields_of(RunConfig& c) {
  std::map<std::string, Field> f;
  f["seed"] = {[&c](const std::string& raw) { c.set_seed(static_cast<std::uint64_t>(parse_int(raw))); },
               [&c] { return std::to_string(c.seed); }};

  f["model.input_dim"] = int_field(c.model.input_dim);
  f["model.hidden"] = int_field(c.model.hidden);
  f["model.mlp_hidden"] = int_field(c.model.mlp_hidden);
  f["model.coref_hidden_layers"] = int_field(c.model.coref_hidden_layers);
  f["model.cells"] = int_field(c.model.cells);
  f["model.variant"] = {[&c](const std::string& raw) { c.model.variant = parse_variant(parse_string(raw)); },
                        [&c] { return "\"" + to_string(c.model.variant) + "\""; }};
  f["model.key_dim"] = int_field(c.model.key_dim);
  f["model.gamma"] = double_field(c.model.gamma);
  f["model.dropout"] = double_field(c.model.dropout);
  f["model.coref_usage_threshold"] = double_field(c.model.coref_usage_threshold);
  f["model.update_gate_bias"] = double_field(c.model.update_gate_bias);

  f["train.max_epochs"] = int_field(c.train.max_epochs);
  f["train.lr_init"] = double_field(c.train.lr_init);
  f["train.lr_min"] = double_field(c.train.lr_min);
  f["train.lr_patience"] = int_field(c.train.lr_patience);
  f["train.stop_patience"] = int_field(c.train.stop_patience);
  f["train.tau_init"] = double_field(c.train.tau_init);
  f["train.tau_halve_every"] = int_field(c.train.tau_halve_every);
  f["train.adam_beta1"] = double_field(c.train.adam_beta1);
  f["train.adam_beta2"] = double_field(c.train.adam_beta2);
  f["train.adam_eps"] = double_field(c.train.adam_eps);
  f["train.lambda"] = double_field(c.train.lambda);
  f["train.self_link_weight"] = double_field(c.train.weights.self_link);
  f["train.positive_weight"] = double_field(c.train.weights.positive);
  f["train.negative_weight"] = double_field(c.train.weights.negative);
  f["train.improvement_tolerance"] = double_field(c.train.improvement_tolerance);

  f["data.train_tsv"] = string_field(c.data.train_tsv);
  f["data.train_embeddings"] = string_field(c.data.train_embeddings);
  f["data.val_tsv"] = string_field(c.data.val_tsv);
  f["data.val_embeddings"] = string_field(c.data.val_embeddings);
  f["data.test_tsv"] = string_field(c.data.test_tsv);
  f["data.test_embeddings"] = string_field(c.data.test_embeddings);
  f["data.counts_tsv"] = string_field(c.data.counts_tsv);

  auto& shape = c.synth.shape;
  f["synth.train_docs"] = int_field(c.synth.train_docs);
  f["synth.val_docs"] = int_field(c.synth.val_docs);
  f["synth.test_docs"] = int_field(c.synth.test_docs);
  f["synth.doc_length_min"] = int_field(shape.doc_length.min);
  f["synth.doc_length_max"] = int_field(shape.doc_length.max);
  f["synth.entities_min"] = int_field(shape.num_entities.min);
  f["synth.entities_max"] = int_field(shape.num_entities.max);
  f["synth.mentions_min"] = int_field(shape.mentions_per_entity.min);
  f["synth.mentions_max"] = int_field(shape.mentions_per_entity.max);
  f["synth.name_tokens_min"] = int_field(shape.name_tokens.min);
  f["synth.name_tokens_max"] = int_field(shape.name_tokens.max);
  f["synth.embedding_dim"] = int_field(shape.embedding_dim);
  f["synth.noise"] = double_field(shape.noise);
  f["synth.entity_pool"] = int_field(shape.entity_pool);

  f["sweep.cells"] = {[&c](const std::string& raw) { c.sweep.cells = parse_int_list(raw); },
                      [&c] {
                        std::string s = "[";
                        for (std::size_t i = 0; i < c.sweep.cells.size(); ++i) {
                          s += (i ? ", " : "") + std::to_string(c.sweep.cells[i]);
                        }
                        return s + "]";
                      }};
  f["sweep.runs"] = int_field(c.sweep.runs);
  f["sweep.jobs"] = int_field(c.sweep.jobs);

  f["grad_check.tolerance"] = double_field(c.grad_check.tolerance);
  f["grad_check.step"] = double_field(c.grad_check.step);
  return f;
}

}  // namespace

RunConfig::RunConfig() {
  model.input_dim = 0;
  set_seed(seed);
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  auto fields = fields_of(config);
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back(where + ": malformed section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected key = value");
      continue;
    }
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = fields.find(key);
    if (it == fields.end()) {
      problems.push_back(where + ": unknown key '" + key + "'");
      continue;
    }
    try {
      it->second.set(value);
    } catch (const std::exception& e) {
      problems.push_back(where + ": bad value for '" + key + "': " + e.what());
    }
  }

  auto check = [&](const char* what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.push_back(std::string(what) + ": " + e.what());
    }
  };
  check("model", [&] {
    ModelConfig m = config.model;
    if (m.input_dim == 0) m.input_dim = 1;
    m.validate();
  });
  check("train", [&] { config.train.validate(); });
  check("synth", [&] { config.synthetic_split("check", 1).validate(); });
  if (config.sweep.cells.empty() || config.sweep.runs < 1 || config.sweep.jobs < 1) {
    problems.push_back("sweep: cells must be non-empty and runs/jobs at least 1");
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

std::string RunConfig::canonical() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& [key, field] : fields_of(copy)) out += key + " = " + field.get() + "\n";
  return out;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
  return buf;
}

SyntheticSpec RunConfig::synthetic_split(const std::string& split, int docs) const {
  SyntheticSpec s = synth.shape;
  s.num_docs = docs;
  s.seed = mix_seed(seed, fnv1a(split));
  s.pool_seed = mix_seed(seed, fnv1a("entities"));
  s.id_prefix = split;
  return s;
}

}  // namespace petra
