#include <cmath>

#include "doctest.h"
#include "glance/checkpoint.hpp"
#include "glance/errors.hpp"
#include "glance/gcn.hpp"
#include "glance/homophily.hpp"
#include "glance/loss.hpp"
#include "glance/metrics.hpp"
#include "glance/synth.hpp"
#include "oracles.hpp"

using namespace glance;

namespace {

std::vector<NodeRecord> nodes_with_dim(std::size_t n, std::size_t d) {
  std::vector<NodeRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].label = static_cast<int>(i % 2);
    out[i].feature.assign(d, 0.0);
    out[i].feature[i % d] = 1.0;
  }
  return out;
}

Matrix probs_from(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

}  // namespace

TEST_CASE("normalized adjacency: hand examples and dense oracle") {
  auto iso = TextAttributedGraph::build(nodes_with_dim(1, 1), std::vector<Edge>{}, 2);
  CHECK(normalize_adjacency(iso).to_dense() == Matrix{{1.0}});
  std::vector<Edge> e{{0, 1}};
  auto pair = TextAttributedGraph::build(nodes_with_dim(2, 1), e, 2);
  auto d = normalize_adjacency(pair).to_dense();
  for (double v : d.values()) CHECK(v == doctest::Approx(0.5));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto g = oracle::random_graph(50, 0.1, 2, 3, seed);
    auto adj = normalize_adjacency(g);
    auto ref = oracle::dense_norm_adj(g.num_nodes(), g.edges());
    auto dense = adj.to_dense();
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t j = 0; j < 50; ++j) {
        CHECK(std::fabs(dense(i, j) - ref[i][j]) <= 1e-12);
        CHECK(dense(i, j) == dense(j, i));
      }
    auto x = feature_matrix(g);
    auto sparse = adj.multiply(x);
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < 50; ++j) s += ref[i][j] * x(j, c);
        CHECK(std::fabs(sparse(i, c) - s) <= 1e-6);
      }
  }
}

TEST_CASE("gcn_forward: identity on isolated nodes, deterministic") {
  auto g = TextAttributedGraph::build(nodes_with_dim(4, 3), std::vector<Edge>{}, 2);
  Rng rng(1);
  auto model = GcnModel::create(3, 3, 1, 2, rng);
  model.weights[0] = Matrix::identity(3);
  auto adj = normalize_adjacency(g);
  auto x = feature_matrix(g);
  auto f = gcn_forward(model, adj, x);
  CHECK(f.z == x);
  CHECK(gcn_forward(model, adj, x).logits == f.logits);
  CHECK_THROWS(gcn_forward(model, adj, Matrix(4, 2)));
}

TEST_CASE("gcn backward matches finite differences (2 and 3 layers)") {
  for (int layers : {2, 3}) {
    auto g = oracle::random_graph(20, 0.2, 3, 4, 10 + static_cast<std::uint64_t>(layers));
    Rng rng(2);
    auto model = GcnModel::create(4, 5, layers, 3, rng);
    auto adj = normalize_adjacency(g);
    auto x = feature_matrix(g);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < 20; ++i) rows.push_back(i);
    auto loss = [&] {
      return mean_cross_entropy(gcn_forward(model, adj, x).logits, rows, g.labels()).mean_loss;
    };
    auto f = gcn_forward(model, adj, x);
    auto ce = mean_cross_entropy(f.logits, rows, g.labels());
    auto grads = gcn_backward(model, adj, f.cache, ce.grad);
    auto params = model.parameters();
    auto gv = grads.views();
    REQUIRE(params.size() == gv.size());
    for (int t = 0; t < 25; ++t) {
      const std::size_t p = rng.index(params.size());
      const std::size_t i = rng.index(params[p].size());
      const double fd = oracle::central_difference(loss, params[p][i]);
      CHECK(oracle::grad_close(gv[p][i], fd));
    }
  }
}

TEST_CASE("head_predict rows are distributions; zero head is uniform") {
  Rng rng(3);
  auto model = GcnModel::create(4, 6, 2, 3, rng);
  Matrix z(10, 6);
  for (auto& v : z.values()) v = rng.normal();
  auto p = head_predict(model, z);
  for (std::size_t i = 0; i < 10; ++i) {
    double s = 0.0;
    for (double v : p.row(i)) s += v;
    CHECK(std::fabs(s - 1.0) <= 1e-6);
    auto logits = mlp_forward(model.head, z).output;
    CHECK(argmax(p.row(i)) == argmax(logits.row(i)));
  }
  for (auto& layer : model.head.layers()) {
    for (auto& w : layer.weight.values()) w = 0.0;
    for (auto& b : layer.bias) b = 0.0;
  }
  auto u = head_predict(model, z);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("gnn_train: separable graph, determinism, best checkpoint") {
  SynthConfig cfg;
  cfg.num_nodes = 300;
  cfg.feature_noise = 0.0;
  cfg.seed = 4;
  auto g = synth_generate(cfg).graph;
  GnnConfig gc;
  gc.train.max_epochs = 200;
  auto r = gnn_train(g, gc);
  auto adj = normalize_adjacency(g);
  auto logits = gcn_forward(r.model, adj, feature_matrix(g)).logits;
  CHECK(accuracy(logits, g.labels(), g.nodes_in(Split::train)) == 1.0);
  auto r2 = gnn_train(g, gc);
  CHECK(r2.best_val_accuracy == r.best_val_accuracy);
  CHECK(r2.model == r.model);
  for (const auto& e : r.history) CHECK(r.best_val_accuracy >= e.val_accuracy);
  auto j = gcn_to_json(r.model);
  CHECK(j.at("kind") == "gcn");
  CHECK(gcn_from_json(j) == r.model);
}

TEST_CASE("mc-dropout uncertainty: bounds, rate zero, determinism") {
  auto g = oracle::random_graph(30, 0.15, 3, 4, 6);
  Rng rng(5);
  auto model = GcnModel::create(4, 8, 2, 3, rng);
  auto adj = normalize_adjacency(g);
  auto x = feature_matrix(g);
  auto u0 = mc_dropout_uncertainty(model, adj, x, 5, 0.0, 1);
  auto p = softmax_rows(gcn_forward(model, adj, x).logits);
  for (std::size_t v = 0; v < 30; ++v) CHECK(u0[v] == doctest::Approx(entropy(p.row(v)) / std::log(3.0)));
  auto u = mc_dropout_uncertainty(model, adj, x, 5, 0.3, 9);
  CHECK(u == mc_dropout_uncertainty(model, adj, x, 5, 0.3, 9));
  for (double v : u) CHECK((v >= 0.0 && v <= 1.0));
  auto dis = mc_dropout_uncertainty(model, adj, x, 5, 0.3, 9, UncertaintyKind::disagreement);
  for (double v : dis) CHECK((v >= 0.0 && v <= 0.8 + 1e-12));
  // zero head: every pass uniform -> uncertainty 1
  for (auto& layer : model.head.layers()) {
    for (auto& w : layer.weight.values()) w = 0.0;
    for (auto& b : layer.bias) b = 0.0;
  }
  for (double v : mc_dropout_uncertainty(model, adj, x, 5, 0.3, 2)) CHECK(v == doctest::Approx(1.0));
  CHECK_THROWS_AS(mc_dropout_uncertainty(model, adj, x, 1, 0.3, 2), ConfigError);
}

TEST_CASE("Q: separable features, determinism, independent of edges") {
  SynthConfig cfg;
  cfg.num_nodes = 300;
  cfg.feature_noise = 0.0;
  cfg.seed = 12;
  auto g = synth_generate(cfg).graph;
  QConfig qc;
  qc.train.max_epochs = 200;
  auto q = train_q(g, qc);
  CHECK(q.val_accuracy == 1.0);
  auto q2 = train_q(g.without_edges(), qc);
  CHECK(q2.q == q.q);
  CHECK(estimator_from_json(estimator_to_json(q)).q == q.q);
}

TEST_CASE("hard and soft homophily estimates") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = oracle::random_graph(50, 0.08, 3, 2, 100 + seed);
    Rng rng(seed);
    std::vector<std::vector<double>> rows(50, std::vector<double>(3));
    for (auto& r : rows) {
      double s = 0.0;
      for (auto& v : r) s += (v = rng.uniform() + 1e-3);
      for (auto& v : r) v /= s;
    }
    auto probs = probs_from(rows);
    auto soft = soft_homophily(g, probs);
    auto hard = hard_homophily_estimate(g, probs);
    std::vector<int> pred(50);
    for (std::size_t v = 0; v < 50; ++v) pred[v] = static_cast<int>(argmax(probs.row(v)));
    for (NodeId v = 0; v < 50; ++v) {
      auto s = oracle::soft_h(v, g.edges(), rows);
      auto h = oracle::hard_h(v, g.edges(), pred);
      CHECK(soft[v] == doctest::Approx(s.value_or(kIsolatedSentinel)).epsilon(1e-12));
      CHECK(hard[v] == h.value_or(kIsolatedSentinel));
      CHECK((soft[v] >= 0.0 && soft[v] <= 1.0));
    }
    // one-hot collapse and perfect oracle
    std::vector<std::vector<double>> onehot(50, std::vector<double>(3, 0.0));
    for (std::size_t v = 0; v < 50; ++v) onehot[v][static_cast<std::size_t>(g.label(v))] = 1.0;
    auto oh = probs_from(onehot);
    auto s1 = soft_homophily(g, oh);
    auto h1 = hard_homophily_estimate(g, oh);
    for (NodeId v = 0; v < 50; ++v) {
      CHECK(s1[v] == h1[v]);
      if (!g.is_isolated(v)) CHECK(h1[v] == local_homophily(g, v));
    }
    // uniform Q
    auto uni = soft_homophily(g, Matrix(50, 3, 1.0 / 3.0));
    for (NodeId v = 0; v < 50; ++v)
      if (!g.is_isolated(v)) CHECK(uni[v] == doctest::Approx(1.0 / 3.0));
    // constant argmax
    auto cst = hard_homophily_estimate(g, probs_from(std::vector<std::vector<double>>(50, {0.9, 0.05, 0.05})));
    for (NodeId v = 0; v < 50; ++v) CHECK(cst[v] == 1.0);
  }
}
