#include "petra/evaluation.hpp"

#include "petra/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace petra {
namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += ch;
    }
  }
  return out;
}

std::vector<double> row_vector(const Mat& m, Index t) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.cols(); ++i) v[static_cast<std::size_t>(i)] = m(t, i);
  return v;
}

}  // namespace

std::vector<ScoredLink> scored_links(std::span<const InstanceScores> predictions,
                                     std::span<const CorefInstance> instances) {
  if (predictions.size() != instances.size()) throw ArgumentError("one prediction per instance is required");
  std::vector<ScoredLink> links;
  links.reserve(2 * instances.size());
  for (std::size_t k = 0; k < instances.size(); ++k) {
    links.push_back({predictions[k].score_a, instances[k].label_a});
    links.push_back({predictions[k].score_b, instances[k].label_b});
  }
  return links;
}

PrfScore gap_f1(std::span<const ScoredLink> links, double threshold) {
  PrfScore s;
  for (const auto& l : links) {
    const bool predicted = l.score >= threshold;
    if (predicted && l.label) ++s.true_positive;
    if (predicted && !l.label) ++s.false_positive;
    if (!predicted && l.label) ++s.false_negative;
  }
  const double tp = static_cast<double>(s.true_positive);
  if (s.true_positive + s.false_positive > 0) s.precision = tp / static_cast<double>(s.true_positive + s.false_positive);
  if (s.true_positive + s.false_negative > 0) s.recall = tp / static_cast<double>(s.true_positive + s.false_negative);
  // Same ratio as 2PR / (P + R), but equal ratios round to the same double so ties are exact.
  if (s.true_positive > 0) {
    s.f1 = 2.0 * tp / static_cast<double>(2 * s.true_positive + s.false_positive + s.false_negative);
  }
  return s;
}

ThresholdSweep sweep_threshold_f1(std::span<const ScoredLink> links) {
  ThresholdSweep sweep;
  sweep.best_value = -1.0;
  for (int k = 1; k <= kThresholdGridSize; ++k) {
    const double th = grid_threshold(k);
    const double f1 = gap_f1(links, th).f1;
    sweep.thresholds.push_back(th);
    sweep.values.push_back(f1);
    if (f1 > sweep.best_value) {
      sweep.best_value = f1;
      sweep.best_threshold = th;
    }
  }
  return sweep;
}

MemoryLog make_memory_log(const Document& doc, const DocumentRun& run) {
  const Index T = run.traces.length();
  const Index N = run.traces.cells();
  MemoryLog log;
  log.doc_id = doc.id;
  log.tokens = doc.tokens;
  log.entity = run.entity;
  log.overwrite = run.traces.overwrite;
  log.coref = run.traces.coref;
  log.usage.resize(T, N);
  for (Index t = 0; t < T; ++t) log.usage.row(t) = run.steps[static_cast<std::size_t>(t)].usage.transpose();
  return log;
}

int count_people(const MemoryLog& log, double alpha) {
  return static_cast<int>((log.overwrite.array() >= alpha).count());
}

ThresholdSweep sweep_threshold_count(std::span<const MemoryLog> logs, std::span<const int> gold_counts) {
  if (logs.size() != gold_counts.size()) throw ArgumentError("one gold count per memory log is required");
  ThresholdSweep sweep;
  for (int k = 1; k <= kThresholdGridSize; ++k) {
    const double alpha = grid_threshold(k);
    double error = 0.0;
    for (std::size_t d = 0; d < logs.size(); ++d) error += std::abs(count_people(logs[d], alpha) - gold_counts[d]);
    sweep.thresholds.push_back(alpha);
    sweep.values.push_back(error);
    if (k == 1 || error < sweep.best_value) {
      sweep.best_value = error;
      sweep.best_threshold = alpha;
    }
  }
  return sweep;
}

std::optional<double> overwrite_kl(std::span<const MemoryLog> logs) {
  if (logs.empty()) return std::nullopt;
  const Index N = logs.front().cells();
  Vec mass = Vec::Zero(N);
  for (const auto& log : logs) {
    if (log.cells() != N) throw ShapeError("memory logs disagree on the number of cells");
    mass += log.overwrite.colwise().sum().transpose();
  }
  mass /= static_cast<double>(logs.size());
  const double total = mass.sum();
  if (!(total > 0.0)) return std::nullopt;
  double kl = 0.0;
  for (Index i = 0; i < N; ++i) {
    const double p = mass(i) / total;
    if (p > 0.0) kl += p * std::log(p * static_cast<double>(N));
  }
  return std::max(kl, 0.0);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void export_memory_log(const MemoryLog& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out << nlohmann::json{{"doc_id", log.doc_id}, {"N", log.cells()}, {"T", log.length()}}.dump() << '\n';
  for (Index t = 0; t < log.length(); ++t) {
    nlohmann::json line{{"token", log.tokens[static_cast<std::size_t>(t)]},
                        {"e", log.entity(t)},
                        {"o", row_vector(log.overwrite, t)},
                        {"c", row_vector(log.coref, t)},
                        {"u", row_vector(log.usage, t)}};
    out << line.dump() << '\n';
  }
  write_text_file(path, out.str());
}

MemoryLog parse_memory_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty memory log");
  MemoryLog log;
  try {
    const auto header = nlohmann::json::parse(line);
    log.doc_id = header.at("doc_id").get<std::string>();
    const Index N = header.at("N").get<Index>();
    const Index T = header.at("T").get<Index>();
    log.entity.resize(T);
    log.overwrite.resize(T, N);
    log.coref.resize(T, N);
    log.usage.resize(T, N);
    for (Index t = 0; t < T; ++t) {
      if (!std::getline(in, line)) throw FormatError(path.string() + ": fewer token lines than T");
      const auto j = nlohmann::json::parse(line);
      log.tokens.push_back(j.at("token").get<std::string>());
      log.entity(t) = j.at("e").get<double>();
      for (auto [key, mat] : {std::pair{"o", &log.overwrite}, {"c", &log.coref}, {"u", &log.usage}}) {
        const auto values = j.at(key).get<std::vector<double>>();
        if (static_cast<Index>(values.size()) != N) throw FormatError(path.string() + ": row width differs from N");
        for (Index i = 0; i < N; ++i) (*mat)(t, i) = values[static_cast<std::size_t>(i)];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return log;
}

std::string heatmap_svg(const MemoryLog& log) {
  const Index T = log.length();
  const Index N = log.cells();

  // Columns: either a token index or -1 for a collapsed quiet run.
  std::vector<Index> columns;
  for (Index t = 0; t < T;) {
    Index end = t;
    while (end < T && log.entity(end) < kHeatmapQuietEntity) ++end;
    if (end - t >= kHeatmapQuietRun) {
      columns.push_back(-1);
      t = end;
    } else if (end > t) {
      for (Index k = t; k < end; ++k) columns.push_back(k);
      t = end;
    } else {
      columns.push_back(t++);
    }
  }

  constexpr int cell = 16;
  constexpr int left = 56;
  constexpr int top = 8;
  const int width = left + static_cast<int>(columns.size()) * cell + 8;
  const int grid_height = static_cast<int>(2 * N) * cell;
  const int height = top + grid_height + 90;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"10\">\n";
  svg << "<title>" << xml_escape(log.doc_id) << "</title>\n";
  for (Index i = 0; i < N; ++i) {
    for (int r = 0; r < 2; ++r) {
      const int y = top + static_cast<int>(2 * i + r) * cell;
      svg << "<text x=\"2\" y=\"" << y + 12 << "\">" << (r == 0 ? "OW " : "CR ") << i << "</text>\n";
    }
  }
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const int x = left + static_cast<int>(k) * cell;
    const Index t = columns[k];
    if (t < 0) {
      svg << "<text class=\"ellipsis\" x=\"" << x + 2 << "\" y=\"" << top + grid_height / 2 + 4
          << "\">&#8230;</text>\n";
      continue;
    }
    for (Index i = 0; i < N; ++i) {
      for (int r = 0; r < 2; ++r) {
        const double v = std::clamp(r == 0 ? log.overwrite(t, i) : log.coref(t, i), 0.0, 1.0);
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
        const int y = top + static_cast<int>(2 * i + r) * cell;
        svg << "<rect class=\"" << (r == 0 ? "ow" : "cr") << "\" data-t=\"" << t << "\" data-cell=\"" << i
            << "\" data-v=\"" << fmt("%.4f", v) << "\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
            << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << "," << shade
            << ")\" stroke=\"#ddd\"/>\n";
      }
    }
    const int ty = top + grid_height + 6;
    svg << "<text class=\"token\" transform=\"translate(" << x + 11 << "," << ty << ") rotate(90)\">"
        << xml_escape(log.tokens[static_cast<std::size_t>(t)]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_heatmap(const MemoryLog& log, const std::filesystem::path& path) { write_text_file(path, heatmap_svg(log)); }

std::string line_plot_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                          const std::string& y_label) {
  constexpr double W = 480, Hh = 320, L = 60, R = 20, Tm = 20, B = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double sd = k < s.stddev.size() ? s.stddev[k] : 0.0;
      xmin = std::min(xmin, s.x[k]);
      xmax = std::max(xmax, s.x[k]);
      ymin = std::min(ymin, s.mean[k] - sd);
      ymax = std::max(ymax, s.mean[k] + sd);
    }
  }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return Hh - B - (y - ymin) / (ymax - ymin) * (Hh - Tm - B); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << Hh - B << "\" x2=\"" << W - R << "\" y2=\"" << Hh - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << Hh - B
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (W + L) / 2 << "\" y=\"" << Hh - 12 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
      << "</text>\n";
  svg << "<text transform=\"translate(14," << (Hh - B + Tm) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(y_label) << "</text>\n";
  svg << "<text x=\"" << L - 4 << "\" y=\"" << py(ymin) << "\" text-anchor=\"end\">" << fmt("%.3f", ymin)
      << "</text>\n";
  svg << "<text x=\"" << L - 4 << "\" y=\"" << py(ymax) + 8 << "\" text-anchor=\"end\">" << fmt("%.3f", ymax)
      << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 5];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      svg << (k ? " " : "") << fmt("%.2f", px(s.x[k])) << "," << fmt("%.2f", py(s.mean[k]));
    }
    svg << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double sd = k < s.stddev.size() ? s.stddev[k] : 0.0;
      svg << "<line stroke=\"" << color << "\" x1=\"" << fmt("%.2f", px(s.x[k])) << "\" y1=\""
          << fmt("%.2f", py(s.mean[k] - sd)) << "\" x2=\"" << fmt("%.2f", px(s.x[k])) << "\" y2=\""
          << fmt("%.2f", py(s.mean[k] + sd)) << "\"/>\n";
      svg << "<text x=\"" << fmt("%.2f", px(s.x[k])) << "\" y=\"" << Hh - B + 14 << "\" text-anchor=\"middle\">"
          << fmt("%g", s.x[k]) << "</text>\n";
    }
    svg << "<text x=\"" << W - R - 4 << "\" y=\"" << Tm + 14 * (si + 1) << "\" text-anchor=\"end\" fill=\""
        << color << "\">" << xml_escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace petra
