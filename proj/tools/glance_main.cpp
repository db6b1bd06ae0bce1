#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glance/errors.hpp"
#include "glance/pipeline.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

glance::RunConfig resolve(const Common& c) {
  json j = json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw glance::MissingArtifactError("config file not found: " + c.config);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw glance::ConfigError("config " + c.config + " is not valid JSON: " + e.what());
    }
  }
  if (!c.out.empty()) j["out"] = c.out;
  if (c.seed) j["seed"] = *c.seed;
  return glance::parse_run_config(j);
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)");
  cmd->add_option("--out", c.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
}

std::vector<double> parse_edges(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw glance::ConfigError("--bins: not a number: '" + item + "'");
    }
  }
  return out;
}

void print_mixture(const glance::SynthResult& r, const glance::SynthConfig& cfg) {
  std::printf("nodes %zu  edges %zu  classes %d  attempts %d\n", r.graph.num_nodes(),
              r.graph.num_edges(), r.graph.num_classes(), r.attempts);
  for (std::size_t i = 0; i < cfg.homophily_mixture.size(); ++i) {
    std::printf("group %zu: target h %.3f  realized mean %.3f  mean |error| %.3f\n", i,
                cfg.homophily_mixture[i].target, r.group_mean_realized[i], r.group_mean_abs_error[i]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned routing between a graph expert and a text-embedding expert"};
  app.require_subcommand(1);

  Common c_gen, c_gnn, c_q, c_embed, c_train, c_eval, c_heur, c_ablate, c_sweep_gnn, c_sweep_beta, c_run;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic text-attributed graph");
  add_common(gen, c_gen);
  auto* tgnn = app.add_subcommand("train-gnn", "Train the GCN expert");
  add_common(tgnn, c_gnn);
  auto* tq = app.add_subcommand("train-q", "Train the homophily estimator");
  add_common(tq, c_q);

  auto* embed = app.add_subcommand("embed", "Precompute node embeddings into the cache");
  add_common(embed, c_embed);
  std::string splits = "train,val,test";
  int max_in_flight = 4;
  embed->add_option("--splits", splits, "Comma-separated splits to embed");
  embed->add_option("--max-in-flight", max_in_flight, "Concurrent provider requests")->check(CLI::PositiveNumber);

  auto* tglance = app.add_subcommand("train-glance", "Train the router and refiner");
  add_common(tglance, c_train);

  auto* eval = app.add_subcommand("eval", "Evaluate on the test split");
  add_common(eval, c_eval);
  std::optional<int> k_test;
  std::string bins;
  bool eval_oracle = false;
  eval->add_option("--k-test", k_test, "Routed nodes per test batch")->check(CLI::NonNegativeNumber);
  eval->add_option("--bins", bins, "Homophily bin edges, e.g. 0,0.25,0.5,0.75,1");
  eval->add_flag("--oracle-h", eval_oracle, "Also route by lowest true homophily (reads labels)");

  auto* heur = app.add_subcommand("heuristics", "NCS grid of static routing heuristics");
  add_common(heur, c_heur);
  bool heur_oracle = false;
  heur->add_flag("--oracle-h", heur_oracle, "Include the true-homophily heuristic (reads labels)");

  auto* ablate = app.add_subcommand("ablate", "Retrain without each routing feature");
  add_common(ablate, c_ablate);
  auto* sgnn = app.add_subcommand("sweep-gnn", "Learning-rate / weight-decay grid for the GCN");
  add_common(sgnn, c_sweep_gnn);
  auto* sbeta = app.add_subcommand("sweep-beta", "Retrain for each query cost beta");
  add_common(sbeta, c_sweep_beta);
  auto* run = app.add_subcommand("run", "gen (if no data paths), train-gnn, train-q, train-glance, eval");
  add_common(run, c_run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      glance::Pipeline p(resolve(c_gen));
      const auto r = p.gen();
      print_mixture(r, p.config().synth);
    } else if (tgnn->parsed()) {
      glance::Pipeline p(resolve(c_gnn));
      const auto r = p.train_gnn();
      std::printf("gcn: best epoch %d  val accuracy %.4f\n", r.best_epoch, r.best_val_accuracy);
    } else if (tq->parsed()) {
      glance::Pipeline p(resolve(c_q));
      const auto r = p.train_q();
      std::printf("q: val accuracy %.4f\n", r.val_accuracy);
    } else if (embed->parsed()) {
      glance::Pipeline p(resolve(c_embed));
      glance::EmbedOptionsCli opts;
      opts.splits.clear();
      std::stringstream ss(splits);
      std::string s;
      while (std::getline(ss, s, ',')) {
        const auto split = glance::parse_split(s);
        if (!split) throw glance::ConfigError("--splits: unknown split '" + s + "'");
        opts.splits.push_back(*split);
      }
      opts.max_in_flight = max_in_flight;
      std::cout << p.embed(opts).dump(2) << "\n";
    } else if (tglance->parsed()) {
      glance::Pipeline p(resolve(c_train));
      const auto r = p.train_glance();
      std::printf("glance: best epoch %d  val accuracy %.4f  backend prompts %zu\n", r.best_epoch,
                  r.best_val_accuracy, p.last_backend_calls());
    } else if (eval->parsed()) {
      glance::Pipeline p(resolve(c_eval));
      glance::EvalOptions opts;
      opts.k_test = k_test;
      if (!bins.empty()) opts.bin_edges = parse_edges(bins);
      opts.oracle_h = eval_oracle;
      const auto r = p.eval(opts);
      std::cout << r.report.to_text();
      if (r.oracle_report) std::cout << "\noracle routing:\n" << r.oracle_report->to_text();
      std::cout << "report: " << r.path.string() << "\n";
    } else if (heur->parsed()) {
      glance::Pipeline p(resolve(c_heur));
      std::cout << p.heuristics(heur_oracle).to_text();
    } else if (ablate->parsed()) {
      glance::Pipeline p(resolve(c_ablate));
      std::cout << p.ablate().dump(2) << "\n";
    } else if (sgnn->parsed()) {
      glance::Pipeline p(resolve(c_sweep_gnn));
      std::cout << p.sweep_gnn().dump(2) << "\n";
    } else if (sbeta->parsed()) {
      glance::Pipeline p(resolve(c_sweep_beta));
      std::cout << p.sweep_beta().dump(2) << "\n";
    } else if (run->parsed()) {
      glance::Pipeline p(resolve(c_run));
      if (p.config().data.nodes.empty()) print_mixture(p.gen(), p.config().synth);
      const auto g = p.train_gnn();
      std::printf("gcn: val accuracy %.4f\n", g.best_val_accuracy);
      const auto q = p.train_q();
      std::printf("q: val accuracy %.4f\n", q.val_accuracy);
      const auto t = p.train_glance();
      std::printf("glance: val accuracy %.4f\n", t.best_val_accuracy);
      std::cout << p.eval({}).report.to_text();
    }
  } catch (const glance::MissingArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const glance::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const glance::ProviderError& e) {
    std::fprintf(stderr, "provider error: %s\n", e.what());
    return 4;
  } catch (const glance::DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
