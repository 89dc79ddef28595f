#pragma once

#include "petra/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace petra {

// Half-open character range [start, end) in codepoints.
struct CharRange {
  std::int64_t start = 0;
  std::int64_t end = 0;

  friend bool operator==(const CharRange&, const CharRange&) = default;
};

// Inclusive token range [first, last]. The first token is the span's head.
struct Span {
  Index first = 0;
  Index last = 0;

  Index head() const { return first; }
  Index size() const { return last - first + 1; }
  bool contains(Index t) const { return t >= first && t <= last; }
  bool overlaps(const Span& other) const { return first <= other.last && other.first <= last; }

  friend bool operator==(const Span&, const Span&) = default;
};

struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<CharRange> char_offsets;
  EmbeddingMatrix embeddings;  // T x D

  Index length() const { return static_cast<Index>(tokens.size()); }
  Index dim() const { return embeddings.cols(); }

  // Throws ConsistencyError when the document invariants do not hold.
  void validate() const;
};

struct CorefInstance {
  Document doc;
  Span span_a;
  Span span_b;
  Span span_p;
  bool label_a = false;
  bool label_b = false;
  // Number of distinct people in the text when known (synthetic data, counts file).
  int people = -1;

  void validate() const;
};

// Token list and offsets recorded by the embedding exporter for one document.
struct ManifestEntry {
  std::vector<std::string> tokens;
  std::vector<CharRange> char_offsets;
};

using Manifest = std::map<std::string, ManifestEntry>;
using EmbeddingTable = std::map<std::string, EmbeddingMatrix>;

// ---- PTEM binary embedding container -------------------------------------

inline constexpr char kPtemMagic[4] = {'P', 'T', 'E', 'M'};
inline constexpr std::uint32_t kPtemVersion = 1;

// The sidecar manifest lives next to the payload: "<embeddings>.manifest.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& embed_path);

EmbeddingTable load_embeddings(const std::filesystem::path& embed_path);
// Cross-checks payload row counts against the manifest token counts.
EmbeddingTable load_embeddings(const std::filesystem::path& embed_path, const Manifest& manifest);
void write_embeddings(const std::filesystem::path& embed_path,
                      const std::vector<std::pair<std::string, EmbeddingMatrix>>& docs);

Manifest load_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const Manifest& manifest);

// ---- GAP TSV --------------------------------------------------------------

struct GapRow {
  std::string id;
  std::string text;
  std::string pronoun;
  std::int64_t pronoun_offset = 0;
  std::string a;
  std::int64_t a_offset = 0;
  bool a_coref = false;
  std::string b;
  std::int64_t b_offset = 0;
  bool b_coref = false;
  std::string url;
};

std::vector<GapRow> read_gap_tsv(const std::filesystem::path& tsv_path);
void write_gap_tsv(const std::filesystem::path& tsv_path, const std::vector<GapRow>& rows);

// Number of Unicode codepoints in a UTF-8 string.
std::int64_t codepoint_length(std::string_view utf8);

// Minimal token range covering every token that overlaps `range`.
// Throws AlignmentError when no token overlaps it.
Span align_span(const std::vector<CharRange>& offsets, CharRange range);

std::vector<CorefInstance> load_gap(const std::filesystem::path& tsv_path,
                                    const std::filesystem::path& embed_path);

// Counts annotation: "doc_id<TAB>unique_people_count" per line.
std::map<std::string, int> load_counts(const std::filesystem::path& path);
void write_counts(const std::filesystem::path& path, const std::map<std::string, int>& counts);

// ---- Synthetic corpora ----------------------------------------------------

struct IntRange {
  int min = 0;
  int max = 0;
};

struct SyntheticSpec {
  int num_docs = 100;
  IntRange doc_length{36, 44};
  IntRange num_entities{2, 4};
  IntRange mentions_per_entity{2, 3};
  IntRange name_tokens{1, 2};
  int embedding_dim = 32;
  double noise = 0.2;
  // Entities are drawn from a corpus-wide inventory of this many base vectors,
  // seeded by pool_seed so that separate splits share it. 0 gives every entity a fresh vector.
  int entity_pool = 20;
  std::uint64_t pool_seed = 7;
  std::uint64_t seed = 7;
  std::string id_prefix = "synth";

  void validate() const;
};

// Entity chain bookkeeping kept next to each generated instance.
struct SyntheticChain {
  int entity = 0;
  std::vector<Span> mentions;
};

struct SyntheticDocument {
  CorefInstance instance;
  std::vector<SyntheticChain> chains;
  int pronoun_entity = 0;
};

std::vector<SyntheticDocument> generate_synthetic(const SyntheticSpec& spec);

// Writes `<stem>.tsv`, `<stem>.ptem`, `<stem>.ptem.manifest.json`, `<stem>.counts.tsv`.
void write_corpus(const std::filesystem::path& stem, const std::vector<CorefInstance>& instances);

}  // namespace petra
