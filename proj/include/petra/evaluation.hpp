#pragma once

#include "petra/corpus.hpp"
#include "petra/model.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace petra {

// Threshold grid {0.01, 0.02, ..., 1.00}.
inline constexpr int kThresholdGridSize = 100;
inline double grid_threshold(int k) { return static_cast<double>(k) / 100.0; }  // k in [1, 100]

struct ScoredLink {
  double score = 0.0;
  bool label = false;
};

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long true_positive = 0;
  long false_positive = 0;
  long false_negative = 0;
};

// Two binary decisions per instance: (A, pronoun) and (B, pronoun).
std::vector<ScoredLink> scored_links(std::span<const InstanceScores> predictions,
                                     std::span<const CorefInstance> instances);

// Micro-averaged over all links; a link is predicted positive when score >= threshold.
PrfScore gap_f1(std::span<const ScoredLink> links, double threshold);

struct ThresholdSweep {
  std::vector<double> thresholds;
  std::vector<double> values;
  double best_threshold = 0.0;
  double best_value = 0.0;
};

// Maximizes F1 over the grid; ties go to the smallest threshold.
ThresholdSweep sweep_threshold_f1(std::span<const ScoredLink> links);

// Per-document record of the controller outputs.
struct MemoryLog {
  std::string doc_id;
  std::vector<std::string> tokens;
  Vec entity;     // T
  Mat overwrite;  // T x N
  Mat coref;      // T x N
  Mat usage;      // T x N

  Index length() const { return entity.size(); }
  Index cells() const { return overwrite.cols(); }
};

MemoryLog make_memory_log(const Document& doc, const DocumentRun& run);

// Number of (t, i) entries with overwrite >= alpha.
int count_people(const MemoryLog& log, double alpha);

// Minimizes sum_docs |count_people(doc, alpha) - gold|; ties go to the smallest threshold.
ThresholdSweep sweep_threshold_count(std::span<const MemoryLog> logs, std::span<const int> gold_counts);

// KL(average overwrite distribution || uniform) in nats. Overwrite mass is
// summed over tokens per document, averaged over documents, then normalized.
// Returns nullopt when the corpus has no overwrite mass at all.
std::optional<double> overwrite_kl(std::span<const MemoryLog> logs);

// JSON lines: a {"doc_id","N","T"} header, then one {"token","e","o","c","u"} object per token.
void export_memory_log(const MemoryLog& log, const std::filesystem::path& path);
MemoryLog parse_memory_log(const std::filesystem::path& path);

// Runs of at least this many tokens with e below the cutoff collapse to an ellipsis.
inline constexpr double kHeatmapQuietEntity = 0.05;
inline constexpr int kHeatmapQuietRun = 10;

std::string heatmap_svg(const MemoryLog& log);
void render_heatmap(const MemoryLog& log, const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> stddev;
};

std::string line_plot_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                          const std::string& y_label);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace petra
