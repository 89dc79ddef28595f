#include "petra/corpus.hpp"

#include "petra/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

namespace petra {
namespace {

static_assert(std::endian::native == std::endian::little,
              "PTEM reader/writer assumes a little-endian host");

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void read(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ConsistencyError(source_ + ": truncated payload while reading " + what + " at byte " +
                             std::to_string(pos_));
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, sizeof v, what);
    return v;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "TRUE" || s == "True" || s == "true") return true;
  if (s == "FALSE" || s == "False" || s == "false") return false;
  throw FormatError(where + ": expected TRUE/FALSE, got '" + s + "'");
}

std::int64_t parse_offset(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": bad offset '" + s + "'");
  }
  if (used != s.size() || v < 0) throw FormatError(where + ": bad offset '" + s + "'");
  return v;
}

const std::vector<std::string> kGapColumns = {"ID",       "Text",    "Pronoun", "Pronoun-offset",
                                              "A",        "A-offset", "A-coref", "B",
                                              "B-offset", "B-coref",  "URL"};

}  // namespace

void Document::validate() const {
  const auto T = length();
  if (T < 1) throw ConsistencyError("document '" + id + "' has no tokens");
  if (static_cast<Index>(char_offsets.size()) != T) {
    throw ConsistencyError("document '" + id + "': offset count differs from token count");
  }
  if (embeddings.rows() != T) {
    throw ConsistencyError("document '" + id + "': " + std::to_string(embeddings.rows()) +
                           " embedding rows for " + std::to_string(T) + " tokens");
  }
  for (Index t = 0; t < T; ++t) {
    const auto& r = char_offsets[static_cast<std::size_t>(t)];
    if (r.end <= r.start) throw ConsistencyError("document '" + id + "': empty token offset range");
    if (t > 0 && r.start < char_offsets[static_cast<std::size_t>(t - 1)].end) {
      throw ConsistencyError("document '" + id + "': token offsets overlap or are out of order");
    }
  }
}

void CorefInstance::validate() const {
  doc.validate();
  const auto T = doc.length();
  for (const Span* s : {&span_a, &span_b, &span_p}) {
    if (s->first < 0 || s->last < s->first || s->last >= T) {
      throw ConsistencyError("instance '" + doc.id + "': span out of range");
    }
  }
  if (span_a.overlaps(span_b)) throw ConsistencyError("instance '" + doc.id + "': name spans overlap");
}

std::filesystem::path manifest_path_for(const std::filesystem::path& embed_path) {
  auto p = embed_path;
  p += ".manifest.json";
  return p;
}

EmbeddingTable load_embeddings(const std::filesystem::path& embed_path) {
  const std::string bytes = read_file(embed_path);
  ByteReader reader(bytes, embed_path.string());
  char magic[4];
  if (bytes.size() < 4) throw FormatError(embed_path.string() + ": too short for PTEM header");
  reader.read(magic, 4, "magic");
  if (std::memcmp(magic, kPtemMagic, 4) != 0) throw FormatError(embed_path.string() + ": bad magic");
  const auto version = reader.u32("version");
  if (version != kPtemVersion) {
    throw FormatError(embed_path.string() + ": unsupported PTEM version " + std::to_string(version));
  }
  const auto doc_count = reader.u32("doc_count");
  EmbeddingTable table;
  for (std::uint32_t d = 0; d < doc_count; ++d) {
    const auto id_len = reader.u32("id length");
    std::string id(id_len, '\0');
    reader.read(id.data(), id_len, "id");
    const auto rows = reader.u32("T");
    const auto cols = reader.u32("D");
    const auto payload = static_cast<std::uint64_t>(rows) * cols * sizeof(float);
    if (payload > reader.remaining()) {
      throw ConsistencyError(embed_path.string() + ": truncated payload for document '" + id + "'");
    }
    EmbeddingMatrix m(rows, cols);
    reader.read(m.data(), static_cast<std::size_t>(payload), "embedding rows");
    if (!table.emplace(std::move(id), std::move(m)).second) {
      throw ConsistencyError(embed_path.string() + ": duplicate document id");
    }
  }
  if (!reader.at_end()) throw ConsistencyError(embed_path.string() + ": trailing bytes after last document");
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& embed_path, const Manifest& manifest) {
  auto table = load_embeddings(embed_path);
  for (const auto& [id, m] : table) {
    auto it = manifest.find(id);
    if (it == manifest.end()) continue;
    if (static_cast<std::size_t>(m.rows()) != it->second.tokens.size()) {
      throw ConsistencyError("document '" + id + "': payload has " + std::to_string(m.rows()) +
                             " rows, manifest lists " + std::to_string(it->second.tokens.size()) + " tokens");
    }
  }
  return table;
}

void write_embeddings(const std::filesystem::path& embed_path,
                      const std::vector<std::pair<std::string, EmbeddingMatrix>>& docs) {
  std::ofstream out(embed_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + embed_path.string());
  out.write(kPtemMagic, 4);
  put_u32(out, kPtemVersion);
  put_u32(out, static_cast<std::uint32_t>(docs.size()));
  for (const auto& [id, m] : docs) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for " + embed_path.string());
}

Manifest load_manifest(const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  Manifest manifest;
  try {
    for (const auto& [id, entry] : j.items()) {
      ManifestEntry e;
      e.tokens = entry.at("tokens").get<std::vector<std::string>>();
      for (const auto& pair : entry.at("char_offsets")) {
        e.char_offsets.push_back({pair.at(0).get<std::int64_t>(), pair.at(1).get<std::int64_t>()});
      }
      if (e.tokens.size() != e.char_offsets.size()) {
        throw ConsistencyError(manifest_path.string() + ": '" + id + "' token/offset count mismatch");
      }
      manifest.emplace(id, std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& manifest_path, const Manifest& manifest) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, e] : manifest) {
    nlohmann::json offsets = nlohmann::json::array();
    for (const auto& r : e.char_offsets) offsets.push_back({r.start, r.end});
    j[id] = {{"tokens", e.tokens}, {"char_offsets", offsets}};
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << j.dump() << '\n';
}

std::vector<GapRow> read_gap_tsv(const std::filesystem::path& tsv_path) {
  std::ifstream in(tsv_path);
  if (!in) throw IoError("cannot open " + tsv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(tsv_path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split_tabs(line) != kGapColumns) throw FormatError(tsv_path.string() + ": unexpected header row");

  std::vector<GapRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    const std::string where = tsv_path.string() + ":" + std::to_string(line_no);
    if (f.size() != kGapColumns.size()) {
      throw FormatError(where + ": expected " + std::to_string(kGapColumns.size()) + " columns, got " +
                        std::to_string(f.size()));
    }
    GapRow r;
    r.id = f[0];
    r.text = f[1];
    r.pronoun = f[2];
    r.pronoun_offset = parse_offset(f[3], where);
    r.a = f[4];
    r.a_offset = parse_offset(f[5], where);
    r.a_coref = parse_bool(f[6], where);
    r.b = f[7];
    r.b_offset = parse_offset(f[8], where);
    r.b_coref = parse_bool(f[9], where);
    r.url = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_gap_tsv(const std::filesystem::path& tsv_path, const std::vector<GapRow>& rows) {
  std::ofstream out(tsv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + tsv_path.string());
  for (std::size_t i = 0; i < kGapColumns.size(); ++i) out << (i ? "\t" : "") << kGapColumns[i];
  out << '\n';
  auto b = [](bool v) { return v ? "TRUE" : "FALSE"; };
  for (const auto& r : rows) {
    out << r.id << '\t' << r.text << '\t' << r.pronoun << '\t' << r.pronoun_offset << '\t' << r.a << '\t'
        << r.a_offset << '\t' << b(r.a_coref) << '\t' << r.b << '\t' << r.b_offset << '\t' << b(r.b_coref)
        << '\t' << r.url << '\n';
  }
}

std::int64_t codepoint_length(std::string_view utf8) {
  std::int64_t n = 0;
  for (unsigned char ch : utf8) {
    if ((ch & 0xC0) != 0x80) ++n;
  }
  return n;
}

Span align_span(const std::vector<CharRange>& offsets, CharRange range) {
  if (range.end <= range.start) {
    throw AlignmentError("empty character range [" + std::to_string(range.start) + ", " +
                         std::to_string(range.end) + ")");
  }
  // Offsets are strictly increasing, so overlapping tokens form a contiguous run.
  auto first = std::partition_point(offsets.begin(), offsets.end(),
                                    [&](const CharRange& r) { return r.end <= range.start; });
  auto last = std::partition_point(first, offsets.end(), [&](const CharRange& r) { return r.start < range.end; });
  if (first == last) {
    throw AlignmentError("character range [" + std::to_string(range.start) + ", " + std::to_string(range.end) +
                         ") does not overlap any token");
  }
  return {static_cast<Index>(first - offsets.begin()), static_cast<Index>(last - offsets.begin()) - 1};
}

std::vector<CorefInstance> load_gap(const std::filesystem::path& tsv_path, const std::filesystem::path& embed_path) {
  const auto rows = read_gap_tsv(tsv_path);
  const auto manifest = load_manifest(manifest_path_for(embed_path));
  auto table = load_embeddings(embed_path, manifest);

  std::vector<CorefInstance> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    auto mit = manifest.find(r.id);
    if (mit == manifest.end()) throw IngestError("document '" + r.id + "' missing from embedding manifest");
    auto eit = table.find(r.id);
    if (eit == table.end()) throw IngestError("document '" + r.id + "' missing from embedding payload");

    CorefInstance inst;
    inst.doc.id = r.id;
    inst.doc.tokens = mit->second.tokens;
    inst.doc.char_offsets = mit->second.char_offsets;
    inst.doc.embeddings = eit->second;
    try {
      inst.doc.validate();
      const auto& offs = inst.doc.char_offsets;
      inst.span_a = align_span(offs, {r.a_offset, r.a_offset + codepoint_length(r.a)});
      inst.span_b = align_span(offs, {r.b_offset, r.b_offset + codepoint_length(r.b)});
      inst.span_p = align_span(offs, {r.pronoun_offset, r.pronoun_offset + codepoint_length(r.pronoun)});
      inst.validate();
    } catch (const AlignmentError& e) {
      throw AlignmentError("document '" + r.id + "': " + e.what());
    } catch (const ConsistencyError& e) {
      throw IngestError(e.what());
    }
    inst.label_a = r.a_coref;
    inst.label_b = r.b_coref;
    out.push_back(std::move(inst));
  }
  return out;
}

std::map<std::string, int> load_counts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, int> counts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != 2) throw FormatError(where + ": expected doc_id<TAB>count");
    if (line_no == 1 && f[0] == "doc_id") continue;
    counts[f[0]] = static_cast<int>(parse_offset(f[1], where));
  }
  return counts;
}

void write_counts(const std::filesystem::path& path, const std::map<std::string, int>& counts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "doc_id\tunique_people_count\n";
  for (const auto& [id, c] : counts) out << id << '\t' << c << '\n';
}

// ---- synthetic ------------------------------------------------------------

void SyntheticSpec::validate() const {
  auto check = [](const IntRange& r, int lo, const char* name) {
    if (r.min < lo || r.max < r.min) {
      throw GenerationError(std::string("invalid range for ") + name + ": [" + std::to_string(r.min) + ", " +
                            std::to_string(r.max) + "]");
    }
  };
  if (num_docs < 0) throw GenerationError("num_docs must be non-negative");
  check(doc_length, 1, "doc_length");
  check(num_entities, 2, "num_entities");
  check(mentions_per_entity, 1, "mentions_per_entity");
  check(name_tokens, 1, "name_tokens");
  if (mentions_per_entity.max < 2) throw GenerationError("at least one entity needs two mentions for a pronoun");
  if (embedding_dim < 2) throw GenerationError("embedding_dim must be at least 2");
  if (!(noise >= 0.0)) throw GenerationError("noise scale must be non-negative");
  if (entity_pool != 0 && entity_pool < num_entities.max) {
    throw GenerationError("entity_pool must be 0 or at least the largest entity count");
  }
  const int worst = num_entities.max * (name_tokens.max + mentions_per_entity.max - 1);
  if (worst > doc_length.min) {
    throw GenerationError("infeasible spec: up to " + std::to_string(worst) + " mention tokens but documents may have only " +
                          std::to_string(doc_length.min) + " tokens");
  }
}

std::vector<SyntheticDocument> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int D = spec.embedding_dim;

  // Dimension 0 marks mentions (+1) versus distractors (-1); the rest encode identity.
  auto draw_base = [D](std::mt19937_64& g) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec b(D);
    b(0) = 1.0;
    for (int k = 1; k < D; ++k) b(k) = n(g);
    return b;
  };
  std::vector<Vec> pool;
  {
    std::mt19937_64 pool_rng(spec.pool_seed);
    for (int k = 0; k < spec.entity_pool; ++k) pool.push_back(draw_base(pool_rng));
  }
  std::vector<int> pool_order(pool.size());

  std::vector<SyntheticDocument> docs;
  docs.reserve(static_cast<std::size_t>(spec.num_docs));
  for (int d = 0; d < spec.num_docs; ++d) {
    const int T = uniform_int(spec.doc_length.min, spec.doc_length.max);
    const int K = uniform_int(spec.num_entities.min, spec.num_entities.max);

    std::vector<Vec> base;
    std::vector<int> identity;
    if (pool.empty()) {
      for (int e = 0; e < K; ++e) {
        base.push_back(draw_base(rng));
        identity.push_back(e);
      }
    } else {
      std::iota(pool_order.begin(), pool_order.end(), 0);
      std::shuffle(pool_order.begin(), pool_order.end(), rng);
      for (int e = 0; e < K; ++e) {
        identity.push_back(pool_order[static_cast<std::size_t>(e)]);
        base.push_back(pool[static_cast<std::size_t>(identity.back())]);
      }
    }

    std::vector<int> events;
    for (int e = 0; e < K; ++e) {
      const int m = uniform_int(spec.mentions_per_entity.min, spec.mentions_per_entity.max);
      events.insert(events.end(), static_cast<std::size_t>(m), e);
    }

    // Pick an event order in which some later mention can serve as the pronoun.
    std::vector<int> first_event(static_cast<std::size_t>(K));
    std::vector<std::size_t> pronoun_choices;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw GenerationError("could not place a pronoun in document " + std::to_string(d));
      std::shuffle(events.begin(), events.end(), rng);
      std::fill(first_event.begin(), first_event.end(), -1);
      pronoun_choices.clear();
      int firsts_seen = 0;
      for (std::size_t i = 0; i < events.size(); ++i) {
        auto& fe = first_event[static_cast<std::size_t>(events[i])];
        if (fe < 0) {
          fe = static_cast<int>(i);
          ++firsts_seen;
        } else if (firsts_seen >= 2) {
          pronoun_choices.push_back(i);
        }
      }
      if (!pronoun_choices.empty()) break;
    }
    const std::size_t pronoun_event =
        pronoun_choices[static_cast<std::size_t>(uniform_int(0, static_cast<int>(pronoun_choices.size()) - 1))];
    const int pronoun_entity = events[pronoun_event];
    std::vector<int> others;
    for (int e = 0; e < K; ++e) {
      if (e != pronoun_entity && first_event[static_cast<std::size_t>(e)] < static_cast<int>(pronoun_event)) {
        others.push_back(e);
      }
    }
    const int distractor_entity = others[static_cast<std::size_t>(uniform_int(0, static_cast<int>(others.size()) - 1))];

    std::vector<int> lengths(events.size(), 1);
    for (int e = 0; e < K; ++e) {
      lengths[static_cast<std::size_t>(first_event[static_cast<std::size_t>(e)])] =
          uniform_int(spec.name_tokens.min, spec.name_tokens.max);
    }
    int mention_tokens = 0;
    for (int l : lengths) mention_tokens += l;
    const int fillers = T - mention_tokens;

    std::vector<bool> slot_is_event(events.size() + static_cast<std::size_t>(fillers), false);
    std::fill(slot_is_event.begin(), slot_is_event.begin() + static_cast<std::ptrdiff_t>(events.size()), true);
    std::shuffle(slot_is_event.begin(), slot_is_event.end(), rng);

    SyntheticDocument sd;
    auto& inst = sd.instance;
    auto& doc = inst.doc;
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "%04d", d);
    doc.id = spec.id_prefix + "-" + id_buf;
    doc.embeddings.resize(T, D);
    sd.chains.resize(static_cast<std::size_t>(K));
    for (int e = 0; e < K; ++e) sd.chains[static_cast<std::size_t>(e)].entity = e;
    sd.pronoun_entity = pronoun_entity;

    std::int64_t cursor = 0;
    auto push_token = [&](std::string tok, const Vec& row) {
      const auto len = codepoint_length(tok);
      doc.char_offsets.push_back({cursor, cursor + len});
      cursor += len + 1;
      doc.embeddings.row(doc.length()) = row.cast<float>().transpose();
      doc.tokens.push_back(std::move(tok));
    };

    std::size_t next_event = 0;
    Span span_first[2]{};
    for (bool is_event : slot_is_event) {
      if (!is_event) {
        Vec row(D);
        // Distractors sit near the origin of the identity dims so they never resemble an entity.
        row(0) = -1.0 + spec.noise * gauss(rng);
        for (int k = 1; k < D; ++k) row(k) = spec.noise * gauss(rng);
        push_token("w" + std::to_string(uniform_int(0, 999)), row);
        continue;
      }
      const std::size_t ev = next_event++;
      const int e = events[ev];
      const Index start = doc.length();
      for (int k = 0; k < lengths[ev]; ++k) {
        Vec row = base[static_cast<std::size_t>(e)];
        for (int j = 0; j < D; ++j) row(j) += spec.noise * gauss(rng);
        const std::string who = std::to_string(identity[static_cast<std::size_t>(e)]);
        std::string tok = ev == pronoun_event ? "pron" + who : k == 0 ? "Name" + who : "Sur" + who;
        push_token(std::move(tok), row);
      }
      const Span s{start, doc.length() - 1};
      sd.chains[static_cast<std::size_t>(e)].mentions.push_back(s);
      if (ev == pronoun_event) inst.span_p = s;
      if (static_cast<int>(ev) == first_event[static_cast<std::size_t>(pronoun_entity)]) span_first[0] = s;
      if (static_cast<int>(ev) == first_event[static_cast<std::size_t>(distractor_entity)]) span_first[1] = s;
    }

    // A is whichever candidate appears first in the text.
    const bool pronoun_candidate_first = span_first[0].first < span_first[1].first;
    inst.span_a = pronoun_candidate_first ? span_first[0] : span_first[1];
    inst.span_b = pronoun_candidate_first ? span_first[1] : span_first[0];
    inst.label_a = pronoun_candidate_first;
    inst.label_b = !pronoun_candidate_first;
    inst.people = K;
    inst.validate();
    docs.push_back(std::move(sd));
  }
  return docs;
}

void write_corpus(const std::filesystem::path& stem, const std::vector<CorefInstance>& instances) {
  std::vector<GapRow> rows;
  std::vector<std::pair<std::string, EmbeddingMatrix>> payload;
  Manifest manifest;
  std::map<std::string, int> counts;
  for (const auto& inst : instances) {
    const auto& doc = inst.doc;
    // Rebuild the text from the offsets, padding gaps with spaces.
    std::string text;
    std::int64_t cp = 0;
    for (Index t = 0; t < doc.length(); ++t) {
      const auto& r = doc.char_offsets[static_cast<std::size_t>(t)];
      const auto& tok = doc.tokens[static_cast<std::size_t>(t)];
      if (codepoint_length(tok) != r.end - r.start) {
        throw ConsistencyError("document '" + doc.id + "': token text does not match its offsets");
      }
      text.append(static_cast<std::size_t>(r.start - cp), ' ');
      text += tok;
      cp = r.end;
    }
    auto span_text = [&](const Span& s) {
      const auto a = doc.char_offsets[static_cast<std::size_t>(s.first)].start;
      const auto b = doc.char_offsets[static_cast<std::size_t>(s.last)].end;
      // Synthetic texts are ASCII, so codepoints and bytes coincide.
      return std::pair{text.substr(static_cast<std::size_t>(a), static_cast<std::size_t>(b - a)), a};
    };
    GapRow row;
    row.id = doc.id;
    row.text = text;
    std::tie(row.pronoun, row.pronoun_offset) = span_text(inst.span_p);
    std::tie(row.a, row.a_offset) = span_text(inst.span_a);
    std::tie(row.b, row.b_offset) = span_text(inst.span_b);
    row.a_coref = inst.label_a;
    row.b_coref = inst.label_b;
    row.url = "synthetic://" + doc.id;
    rows.push_back(std::move(row));
    payload.emplace_back(doc.id, doc.embeddings);
    manifest[doc.id] = {doc.tokens, doc.char_offsets};
    if (inst.people >= 0) counts[doc.id] = inst.people;
  }
  auto with_suffix = [&](const char* suffix) {
    auto p = stem;
    p += suffix;
    return p;
  };
  write_gap_tsv(with_suffix(".tsv"), rows);
  write_embeddings(with_suffix(".ptem"), payload);
  write_manifest(manifest_path_for(with_suffix(".ptem")), manifest);
  if (!counts.empty()) write_counts(with_suffix(".counts.tsv"), counts);
}

}  // namespace petra
