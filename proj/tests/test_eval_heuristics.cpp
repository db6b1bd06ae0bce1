#include <cmath>

#include "doctest.h"
#include "glance/errors.hpp"
#include "glance/eval.hpp"
#include "glance/heuristics.hpp"
#include "glance/metrics.hpp"
#include "oracles.hpp"

using namespace glance;

namespace {

std::vector<NodeId> iota_ids(std::size_t n) {
  std::vector<NodeId> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

TextAttributedGraph star(std::size_t leaves) {
  std::vector<NodeRecord> nodes(leaves + 1);
  for (auto& n : nodes) n.feature = {1.0};
  std::vector<Edge> e;
  for (std::size_t i = 1; i <= leaves; ++i) e.push_back({0, i});
  return TextAttributedGraph::build(nodes, e, 1);
}

}  // namespace

TEST_CASE("ncs examples and oracle") {
  std::vector<bool> gnn(10, false), post(10, true);
  auto r = iota_ids(10);
  CHECK(ncs(gnn, post, r).value == 1.0);
  CHECK(ncs(post, gnn, r).value == -1.0);
  std::vector<bool> g2(10, true), p2(10, true);
  for (int i = 0; i < 4; ++i) g2[static_cast<std::size_t>(i)] = false;
  p2[9] = false;
  auto res = ncs(g2, p2, r);
  CHECK(res.wrong_to_correct == 4);
  CHECK(res.correct_to_wrong == 1);
  CHECK(res.value == doctest::Approx(0.3));
  CHECK_THROWS(ncs(g2, p2, std::vector<NodeId>{}));

  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    std::vector<bool> a(50), b(50);
    for (std::size_t i = 0; i < 50; ++i) {
      a[i] = rng.uniform() < 0.5;
      b[i] = rng.uniform() < 0.5;
    }
    std::vector<NodeId> routed;
    for (std::size_t i = 0; i < 50; ++i)
      if (rng.uniform() < 0.3) routed.push_back(i);
    if (routed.empty()) routed.push_back(0);
    auto o = oracle::ncs_count(a, b, routed);
    auto got = ncs(a, b, routed);
    CHECK(got.value == doctest::Approx(static_cast<double>(o.wc - o.cw) / static_cast<double>(o.r)));
    CHECK((got.value >= -1.0 && got.value <= 1.0));
    // nodes outside R do not matter
    auto a2 = a;
    for (std::size_t i = 0; i < 50; ++i)
      if (std::find(routed.begin(), routed.end(), i) == routed.end()) a2[i] = !a2[i];
    CHECK(ncs(a2, b, routed).value == got.value);
  }
}

TEST_CASE("stratified accuracy") {
  std::vector<double> h{0.1, 0.3, 0.6, 0.8, 1.0, 0.9};
  std::vector<int> labels{0, 1, 2, 0, 1, 2};
  auto all = stratified_accuracy(labels, labels, h);
  REQUIRE(all.size() == 4);
  for (const auto& b : all) CHECK(*b.accuracy == 1.0);
  std::vector<int> pred{1, 0, 0, 0, 1, 2};
  auto part = stratified_accuracy(pred, labels, h);
  CHECK(*part[0].accuracy == 0.0);
  CHECK(*part[1].accuracy == 0.0);
  CHECK(*part[2].accuracy == 0.0);
  CHECK(*part[3].accuracy == 1.0);
  CHECK(part[3].population == 3);
  std::vector<double> high{0.9, 0.95};
  std::vector<int> two{0, 0};
  auto sparse = stratified_accuracy(two, two, high);
  CHECK_FALSE(sparse[0].accuracy.has_value());
  CHECK(sparse[3].population == 2);
  CHECK_THROWS(stratified_accuracy(two, labels, h));

  Rng rng(3);
  std::vector<int> p(200), y(200);
  std::vector<double> hv(200);
  for (std::size_t i = 0; i < 200; ++i) {
    p[i] = static_cast<int>(rng.uniform() * 3);
    y[i] = static_cast<int>(rng.uniform() * 3);
    hv[i] = std::round(rng.uniform() * 8.0) / 8.0;
  }
  auto got = stratified_accuracy(p, y, hv);
  auto ref = oracle::stratified(p, y, hv);
  std::size_t total = 0;
  for (int b = 0; b < 4; ++b) {
    const auto& cell = got[static_cast<std::size_t>(b)];
    total += cell.population;
    CHECK(static_cast<long>(cell.population) == ref[b].second);
    CHECK(static_cast<long>(cell.correct) == ref[b].first);
  }
  CHECK(total == 200);
}

TEST_CASE("average rank") {
  ScoreTable two{{0.9, 0.8}, {0.1, 0.2}};
  auto r = average_rank(two);
  CHECK(*r[0] == 1.0);
  CHECK(*r[1] == 2.0);
  ScoreTable tie{{0.5}, {0.5}};
  CHECK(*average_rank(tie)[0] == 1.5);
  CHECK(*average_rank(tie)[1] == 1.5);
  CHECK_THROWS(average_rank(ScoreTable{}));

  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    std::vector<std::vector<double>> raw(3, std::vector<double>(3));
    ScoreTable table(3, std::vector<std::optional<double>>(3));
    ScoreTable squashed = table;
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t s = 0; s < 3; ++s) {
        raw[m][s] = std::round(rng.uniform() * 3.0);
        table[m][s] = raw[m][s];
        squashed[m][s] = std::tanh(raw[m][s]) * 5.0 + 1.0;
      }
    auto want = oracle::average_rank(raw);
    auto got = average_rank(table);
    auto inv = average_rank(squashed);
    for (std::size_t m = 0; m < 3; ++m) {
      CHECK(*got[m] == doctest::Approx(want[m]));
      CHECK(*inv[m] == doctest::Approx(want[m]));
    }
  }
  // absent cells drop out of the setting
  ScoreTable holes{{1.0, std::nullopt}, {0.0, 0.3}, {0.5, 0.1}};
  auto hr = average_rank(holes);
  CHECK(*hr[0] == 1.0);
  CHECK(*hr[1] == doctest::Approx(2.0));
  CHECK(*hr[2] == doctest::Approx(2.0));
}

TEST_CASE("median and routed homophily summary") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> v(static_cast<std::size_t>(5 + t));
    for (auto& x : v) x = rng.uniform();
    CHECK(median(v) == oracle::median(v));
  }
  std::vector<NodeId> routed{1, 2, 3};
  std::vector<double> flat(3, 0.1);
  auto s = routed_homophily_summary(routed, {true, false, true}, flat);
  CHECK(s.benefited->median == doctest::Approx(0.1));
  CHECK(s.rest->median == doctest::Approx(0.1));
  CHECK(s.benefited->histogram[1] == 2);
  auto none = routed_homophily_summary(routed, {false, false, false}, flat);
  CHECK_FALSE(none.benefited.has_value());
  CHECK(none.rest->count == 3);
  std::vector<double> hv{0.0, 1.0, 0.4};
  auto mixed = routed_homophily_summary(routed, {true, true, false}, hv);
  CHECK(mixed.benefited->median == oracle::median({0.0, 1.0}));
  CHECK(mixed.benefited->histogram[9] == 1);
  CHECK(mixed.benefited->histogram[0] == 1);
}

TEST_CASE("eval report over a graph") {
  auto g = oracle::random_graph(60, 0.1, 3, 3, 8);
  EvalInputs in;
  in.nodes = iota_ids(60);
  in.gnn_predictions.assign(60, 0);
  in.final_predictions = g.labels();
  in.routed.assign(60, false);
  for (std::size_t i = 0; i < 60; i += 3) in.routed[i] = true;
  in.provider_calls = 60;
  in.k_test = 12;
  auto rep = build_eval_report(g, in);
  std::size_t pop = 0;
  for (const auto& b : rep.bins) pop += b.population;
  CHECK(pop + rep.isolated_excluded == 60);
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.routed == 20);
  REQUIRE(rep.routed_ncs.has_value());
  CHECK((rep.routed_ncs->value >= -1.0 && rep.routed_ncs->value <= 1.0));
  auto j = rep.to_json();
  CHECK(j.at("provider_calls") == 60);
  CHECK(j.at("bins").size() == 4);
  CHECK(rep.to_text().find("0.75-1.00") != std::string::npos);
}

TEST_CASE("heuristic routing rules") {
  auto g = star(6);
  auto m = heuristic_metrics(g, nullptr, false, true, 1);
  CHECK_FALSE(m.uncertainty.has_value());
  auto ids = iota_ids(7);
  HeuristicRouter deg{HeuristicKind::degree, default_direction(HeuristicKind::degree), 1.0 / 7.0};
  CHECK(heuristic_route(m, ids, deg, 0) == std::vector<NodeId>{1});
  HeuristicRouter hub{HeuristicKind::degree, RouteDirection::highest, 0.15};
  CHECK(heuristic_route(m, ids, hub, 0) == std::vector<NodeId>{0});

  // single-class star: every h is 1, so selection is by id
  HeuristicRouter th{HeuristicKind::true_h, RouteDirection::lowest, 0.5};
  CHECK(heuristic_route(m, ids, th, 0) == std::vector<NodeId>{0, 1, 2});

  auto big = oracle::random_graph(100, 0.05, 3, 3, 1);
  auto bm = heuristic_metrics(big, nullptr, true, false, 3);
  auto all = iota_ids(100);
  HeuristicRouter rnd{HeuristicKind::random, RouteDirection::lowest, 0.15};
  auto a = heuristic_route(bm, all, rnd, 42);
  CHECK(a.size() == 15);
  CHECK(a == heuristic_route(bm, all, rnd, 42));
  CHECK(a != heuristic_route(bm, all, rnd, 43));
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(route_count(0.1, 70) == 7);
  CHECK(route_count(0.15, 100) == 15);
  HeuristicRouter unc{HeuristicKind::uncertainty, RouteDirection::highest, 0.1};
  CHECK_THROWS_AS(heuristic_route(bm, all, unc, 0), ConfigError);
  HeuristicRouter oracle_only{HeuristicKind::true_h, RouteDirection::lowest, 0.1};
  CHECK_THROWS_AS(heuristic_route(bm, all, oracle_only, 0), ConfigError);
  for (auto k : all_heuristics()) CHECK(parse_heuristic(heuristic_name(k)) == k);
  CHECK(default_direction(HeuristicKind::uncertainty) == RouteDirection::highest);
}

TEST_CASE("c_density properties") {
  Rng rng(5);
  Matrix x(41, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    x(i, 0) = -5.0 + 0.1 * rng.normal();
    x(i, 1) = 0.1 * rng.normal();
    x(20 + i, 0) = 5.0 + 0.1 * rng.normal();
    x(20 + i, 1) = 0.1 * rng.normal();
  }
  x(40, 0) = 0.0;
  x(40, 1) = 0.0;
  auto d = c_density(x, 2, 1);
  double blob = 0.0;
  for (std::size_t i = 0; i < 40; ++i) blob += d[i] / 40.0;
  CHECK(blob > d[40]);
  for (double v : d) CHECK((v > 0.0 && v <= 1.0));

  // exact centroid -> 1; further -> lower
  Matrix pts{{0.0}, {0.0}, {10.0}, {10.0}, {1.0}};
  auto e = c_density(pts, 2, 3);
  CHECK(e[2] == doctest::Approx(1.0));
  CHECK(e[0] > e[4]);

  Matrix same(5, 2, 1.0);
  std::vector<std::string> warnings;
  auto u = c_density(same, 2, 1, 50, &warnings);
  for (double v : u) CHECK(v == 1.0);
  CHECK(warnings.size() == 1);
  CHECK(c_density(x, 2, 1) == d);
}

TEST_CASE("heuristic grid shape and ranks") {
  auto g = oracle::random_graph(80, 0.06, 3, 3, 2);
  auto m = heuristic_metrics(g, nullptr, true, true, 3);
  auto ids = iota_ids(80);
  std::vector<bool> gnn_ok(80), post_ok(80);
  auto h = local_homophily_all(g);
  for (std::size_t i = 0; i < 80; ++i) {
    gnn_ok[i] = i % 3 != 0;
    post_ok[i] = true;
  }
  auto grid = heuristic_grid(m, ids, gnn_ok, post_ok, {0.1, 0.2}, 9);
  CHECK(grid.kinds.size() == grid.cells.size());
  for (const auto& row : grid.cells) CHECK(row.size() == 2);
  CHECK(grid.average_ranks.size() == grid.kinds.size());
  for (std::size_t k = 0; k < grid.kinds.size(); ++k) {
    const bool available = grid.kinds[k] != HeuristicKind::uncertainty && grid.kinds[k] != HeuristicKind::soft_h;
    CHECK(grid.cells[k][0].has_value() == available);
    if (available) {
      CHECK(grid.cells[k][0]->routed == 8);
      CHECK(grid.cells[k][1]->routed == 16);
      CHECK(grid.cells[k][0]->correct_to_wrong == 0);
    }
  }
  auto j = grid.to_json();
  CHECK(j.dump() == heuristic_grid(m, ids, gnn_ok, post_ok, {0.1, 0.2}, 9).to_json().dump());
  CHECK_FALSE(grid.to_text().empty());
}
