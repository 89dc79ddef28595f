#include "doctest.h"

#include "petra/errors.hpp"
#include "petra/evaluation.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

using namespace petra;
using petra::testing::TempDir;

namespace {

// Independent F1 with an explicit confusion table.
double oracle_f1(const std::vector<ScoredLink>& links, double th) {
  double tp = 0, fp = 0, fn = 0;
  for (const auto& l : links) {
    const bool y = l.score >= th;
    tp += y && l.label;
    fp += y && !l.label;
    fn += !y && l.label;
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

MemoryLog log_with(const Mat& overwrite, Vec entity = {}) {
  MemoryLog log;
  log.doc_id = "d";
  const Index T = overwrite.rows();
  for (Index t = 0; t < T; ++t) log.tokens.push_back("tok" + std::to_string(t));
  log.entity = entity.size() ? entity : Vec::Constant(T, 0.5);
  log.overwrite = overwrite;
  log.coref = Mat::Zero(T, overwrite.cols());
  log.usage = Mat::Zero(T, overwrite.cols());
  return log;
}

std::vector<ScoredLink> random_links(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredLink> links;
  for (int k = 0; k < n; ++k) links.push_back({std::round(u(rng) * 1000) / 1000, u(rng) < 0.4});
  return links;
}

}  // namespace

TEST_CASE("f1 from a small confusion table") {
  // 4 true positives, 1 false positive, 1 false negative, 2 true negatives.
  const std::vector<ScoredLink> links{{0.9, true}, {0.8, true}, {0.7, true}, {0.6, true},
                                      {0.9, false}, {0.2, true}, {0.1, false}, {0.3, false}};
  const auto s = gap_f1(links, 0.5);
  CHECK(s.true_positive == 4);
  CHECK(s.false_positive == 1);
  CHECK(s.false_negative == 1);
  CHECK(s.precision == doctest::Approx(0.8));
  CHECK(s.recall == doctest::Approx(0.8));
  CHECK(s.f1 == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("scores on the threshold count as positive") {
  const std::vector<ScoredLink> links{{0.5, true}, {0.49, false}};
  CHECK(gap_f1(links, 0.5).f1 == 1.0);
  const std::vector<ScoredLink> none{{0.1, true}};
  CHECK(gap_f1(none, 0.5).f1 == 0.0);
}

TEST_CASE("threshold sweep agrees with the oracle and prefers the smallest best threshold") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto links = random_links(rng, 40);
    const auto sweep = sweep_threshold_f1(links);
    REQUIRE(sweep.thresholds.size() == 100);
    CHECK(sweep.thresholds.front() == 0.01);
    CHECK(sweep.thresholds.back() == 1.0);
    double best = -1, best_th = 0;
    for (int k = 1; k <= 100; ++k) {
      const double f = oracle_f1(links, k / 100.0);
      CHECK(sweep.values[static_cast<std::size_t>(k - 1)] == doctest::Approx(f).epsilon(1e-12));
      if (f > best + 1e-12) best = f, best_th = k / 100.0;
    }
    CHECK(sweep.best_value == doctest::Approx(best).epsilon(1e-12));
    CHECK(sweep.best_threshold == best_th);
  }
}

TEST_CASE("sweep is invariant to link order") {
  std::mt19937_64 rng(4);
  auto links = random_links(rng, 30);
  const auto before = sweep_threshold_f1(links);
  std::shuffle(links.begin(), links.end(), rng);
  const auto after = sweep_threshold_f1(links);
  CHECK(before.values == after.values);
  CHECK(before.best_threshold == after.best_threshold);
}

TEST_CASE("raising a positive score never lowers recall") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto links = random_links(rng, 20);
    const double th = 0.5;
    const auto before = gap_f1(links, th);
    for (auto& l : links) {
      if (l.label) l.score = std::min(1.0, l.score + 0.2);
    }
    CHECK(gap_f1(links, th).recall >= before.recall);
  }
}

TEST_CASE("all-positive prediction on balanced pairs scores two thirds") {
  std::vector<ScoredLink> links;
  for (int k = 0; k < 50; ++k) {
    links.push_back({0.9, true});
    links.push_back({0.9, false});
  }
  CHECK(gap_f1(links, 0.01).f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("scored links pair each instance with both labels") {
  CorefInstance a, b;
  a.label_a = true;
  b.label_b = true;
  std::vector<InstanceScores> preds(2);
  preds[0].score_a = 0.7;
  preds[0].score_b = 0.1;
  preds[1].score_a = 0.3;
  preds[1].score_b = 0.6;
  const std::vector<CorefInstance> insts{a, b};
  const auto links = scored_links(preds, insts);
  REQUIRE(links.size() == 4);
  CHECK(links[0].score == 0.7);
  CHECK(links[0].label);
  CHECK_FALSE(links[1].label);
  CHECK(links[3].label);
  CHECK_THROWS_AS(scored_links(std::span<const InstanceScores>(preds).first(1), insts), ArgumentError);
}

TEST_CASE("people count is the number of strong overwrites") {
  Mat o = Mat::Zero(6, 3);
  o(0, 0) = 0.9;
  o(2, 1) = 0.55;
  o(4, 2) = 0.2;
  o(5, 0) = 0.5;
  const auto log = log_with(o);
  CHECK(count_people(log, 0.5) == 3);
  CHECK(count_people(log, 0.56) == 1);
  CHECK(count_people(log, 0.1) == 4);
  CHECK(count_people(log, 1.0) == 0);
}

TEST_CASE("count threshold sweep minimizes total absolute error") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<MemoryLog> logs;
    std::vector<int> gold;
    for (int d = 0; d < 8; ++d) {
      Mat o(10, 4);
      for (Index k = 0; k < o.size(); ++k) o.data()[k] = u(rng) < 0.15 ? u(rng) : 0.0;
      logs.push_back(log_with(o));
      gold.push_back(static_cast<int>(u(rng) * 4));
    }
    const auto sweep = sweep_threshold_count(logs, gold);
    double best = 1e300, best_alpha = 0;
    for (int k = 1; k <= 100; ++k) {
      double err = 0;
      for (std::size_t d = 0; d < logs.size(); ++d) {
        int n = 0;
        for (Index i = 0; i < logs[d].overwrite.size(); ++i) n += logs[d].overwrite.data()[i] >= k / 100.0;
        err += std::abs(n - gold[d]);
      }
      CHECK(sweep.values[static_cast<std::size_t>(k - 1)] == err);
      if (err < best) best = err, best_alpha = k / 100.0;
    }
    CHECK(sweep.best_value == best);
    CHECK(sweep.best_threshold == best_alpha);
  }
}

TEST_CASE("overwrite KL examples") {
  SUBCASE("uniform usage has zero divergence") {
    const auto kl = overwrite_kl(std::vector{log_with(Mat::Identity(4, 4))});
    REQUIRE(kl);
    CHECK(*kl == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("one cell out of two gives ln 2") {
    Mat o = Mat::Zero(3, 2);
    o.col(0).setConstant(0.7);
    const auto kl = overwrite_kl(std::vector{log_with(o)});
    CHECK(*kl == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("no overwrite mass") {
    CHECK_FALSE(overwrite_kl(std::vector{log_with(Mat::Zero(3, 2))}));
    CHECK_FALSE(overwrite_kl(std::vector<MemoryLog>{}));
  }
  SUBCASE("formula on two documents") {
    Mat a = Mat::Zero(2, 3), b = Mat::Zero(2, 3);
    a(0, 0) = 0.6;
    a(1, 1) = 0.2;
    b(0, 0) = 0.4;
    b(1, 2) = 0.8;
    // Average per-document sums: (0.5, 0.1, 0.4); normalized by 1.0.
    const double expect = 0.5 * std::log(1.5) + 0.1 * std::log(0.3) + 0.4 * std::log(1.2);
    const auto kl = overwrite_kl(std::vector{log_with(a), log_with(b)});
    CHECK(*kl == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("KL is non-negative and bounded by ln N") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index N = 2 + trial % 6;
    Mat o(5, N);
    for (Index k = 0; k < o.size(); ++k) o.data()[k] = u(rng) < 0.3 ? u(rng) : 0.0;
    o(0, 0) = 0.1;
    const auto kl = overwrite_kl(std::vector{log_with(o)});
    REQUIRE(kl);
    CHECK(*kl >= 0.0);
    CHECK(*kl <= std::log(static_cast<double>(N)) + 1e-12);
  }
}

TEST_CASE("memory log export round trip") {
  TempDir dir;
  std::mt19937_64 rng(8);
  MemoryLog log = log_with(petra::testing::random_mat(5, 3, rng));
  log.coref = petra::testing::random_mat(5, 3, rng);
  log.usage = petra::testing::random_mat(5, 3, rng);
  log.entity = petra::testing::random_mat(5, 1, rng).col(0);
  log.tokens[2] = "quote\"tab\t";
  export_memory_log(log, dir / "m.jsonl");
  const auto back = parse_memory_log(dir / "m.jsonl");
  CHECK(back.doc_id == log.doc_id);
  CHECK(back.tokens == log.tokens);
  CHECK(back.entity == log.entity);
  CHECK(back.overwrite == log.overwrite);
  CHECK(back.coref == log.coref);
  CHECK(back.usage == log.usage);

  write_text_file(dir / "bad.jsonl", "{\"doc_id\":\"d\",\"N\":2,\"T\":3}\n{\"token\":\"a\"}\n");
  CHECK_THROWS_AS(parse_memory_log(dir / "bad.jsonl"), FormatError);
}

TEST_CASE("heatmap collapses quiet stretches") {
  const auto log = log_with(Mat::Zero(25, 3), Vec::Zero(25));
  const auto svg = heatmap_svg(log);
  CHECK(svg.find("class=\"ellipsis\"") != std::string::npos);
  CHECK(svg.find("<rect") == std::string::npos);

  // Short quiet runs stay visible.
  const auto short_log = log_with(Mat::Zero(5, 2), Vec::Zero(5));
  const auto s2 = heatmap_svg(short_log);
  CHECK(s2.find("ellipsis") == std::string::npos);
  CHECK(std::count(s2.begin(), s2.end(), '\n') > 5);
}

TEST_CASE("heatmap shows one dark overwrite per introduced entity") {
  // Three entities introduced into cells 0, 1, 2 and later referred back to.
  const Index T = 12;
  Mat o = Mat::Zero(T, 4), c = Mat::Zero(T, 4);
  o(1, 0) = 1.0;
  o(4, 1) = 1.0;
  o(7, 2) = 1.0;
  c(9, 0) = 0.8;
  c(11, 2) = 0.9;
  auto log = log_with(o, Vec::Constant(T, 0.5));
  log.coref = c;
  const auto svg = heatmap_svg(log);
  const std::regex dark_ow("class=\"ow\" data-t=\"(\\d+)\" data-cell=\"(\\d+)\" data-v=\"1\\.0000\"[^>]*fill=\"rgb\\(0,0,0\\)\"");
  std::vector<std::pair<int, int>> hits;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), dark_ow); it != std::sregex_iterator(); ++it) {
    hits.emplace_back(std::stoi((*it)[1]), std::stoi((*it)[2]));
  }
  CHECK(hits == std::vector<std::pair<int, int>>{{1, 0}, {4, 1}, {7, 2}});
  CHECK(svg.find("data-t=\"9\" data-cell=\"0\" data-v=\"0.8000\"") != std::string::npos);
  const std::regex token("class=\"token\"");
  CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), token), std::sregex_iterator()) == T);
}

TEST_CASE("line plot lists every series") {
  const auto svg = line_plot_svg({{"vanilla", {2, 4}, {0.5, 0.6}, {0.01, 0.02}}, {"fixed", {2, 4}, {0.4, 0.7}, {}}},
                                 "cells", "F1");
  CHECK(svg.find(">vanilla<") != std::string::npos);
  CHECK(svg.find(">fixed<") != std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 10);
}
