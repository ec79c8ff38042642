// fcnet: synthetic data, condition connectivity, DSE clustering and
// cross-participant classification from the command line.
//
//   fcnet synth        --spec spec.json --out data
//   fcnet connectivity --dataset data/dataset.json --out run
//   fcnet cluster      --matrices run/matrices.json --out run
//   fcnet classify     --matrices run/matrices.json --out run --n-perm 1000
//
// Every option can also come from a TOML file given with --config; flags on
// the command line win over file values.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fcnet/pipeline.hpp"

namespace {

struct DseFlags {
  std::optional<double> delta;
  std::optional<double> kappa;
  std::optional<std::size_t> max_steps;
  std::size_t patience = 5;
  std::optional<double> epsilon;

  void add_to(CLI::App* app) {
    app->add_option("--delta", delta, "Euler time increment (default 0.1/sqrt(n))");
    app->add_option("--kappa", kappa, "repulsion for unconnected pairs (default 0.1 x mean edge weight)");
    app->add_option("--max-steps", max_steps, "step limit (default 10 n)");
    app->add_option("--patience", patience, "consecutive score decreases that stop the evolution")
        ->check(CLI::PositiveNumber);
    app->add_option("--epsilon", epsilon, "fixed cluster distance cutoff (default: widest distance gap)")
        ->check(CLI::PositiveNumber);
  }

  fcnet::DseParams params() const {
    fcnet::DseParams p;
    p.delta = delta;
    p.repulsion_kappa = kappa;
    p.max_steps = max_steps;
    p.patience = patience;
    if (epsilon) {
      p.epsilon_mode = fcnet::EpsilonMode::fixed;
      p.epsilon = epsilon;
    }
    return p;
  }
};

std::vector<fcnet::ThresholdSpec> thresholds_from(const std::vector<std::string>& texts) {
  if (texts.empty()) return fcnet::default_thresholds();
  std::vector<fcnet::ThresholdSpec> out;
  for (const auto& t : texts) out.push_back(fcnet::parse_threshold(t));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Condition-specific functional connectivity, DSE clustering and classification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML configuration file");

  fcnet::RunConfig cfg;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::vector<std::string> modes;
  bool verbose = false;
  app.add_option("--out", out, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "master random seed");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--feature-mode", modes, "dse_union, all_elements or thresholded_elements (repeatable)");
  app.add_flag("--raw-cov", cfg.raw_cov, "uncentered weighted covariance");
  app.add_flag("-v,--verbose", verbose, "structured progress lines on stderr");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted clusters");
  std::string spec_path;
  synth->add_option("--spec", spec_path, "synthetic specification (JSON)")->check(CLI::ExistingFile);

  auto* conn = app.add_subcommand("connectivity", "condition-specific connectivity matrices");
  std::string dataset;
  conn->add_option("--dataset", dataset, "dataset manifest")->required()->check(CLI::ExistingFile);
  conn->add_flag("--baseline", cfg.baseline, "subtract the fixation connectivity");
  conn->add_flag("--detrend", cfg.detrend, "remove linear trends before correlating");

  std::string matrices;
  std::vector<std::string> thresholds;
  DseFlags dse_flags;

  auto* cluster = app.add_subcommand("cluster", "DSE clusters, graph exports and density table");
  cluster->add_option("--matrices", matrices, "matrices manifest")->required()->check(CLI::ExistingFile);
  cluster->add_option("--threshold", thresholds, "sign:percentile, repeatable (default: 12 standard levels)");
  cluster->add_flag("--binarize", cfg.binarize, "run DSE on unweighted networks");
  bool whole_graph = false;
  cluster->add_flag("--whole-graph", whole_graph, "density of the whole network instead of the primary cluster");
  dse_flags.add_to(cluster);

  auto* classify = app.add_subcommand("classify", "leave-one-participant-out classification");
  classify->add_option("--matrices", matrices, "matrices manifest")->required()->check(CLI::ExistingFile);
  classify->add_option("--threshold", thresholds, "sign:percentile, repeatable (default: 12 standard levels)");
  classify->add_option("--n-perm", cfg.n_perm, "node permutations for the null")->check(CLI::PositiveNumber);
  classify->add_flag("--binarize", cfg.binarize, "select features on unweighted networks");
  dse_flags.add_to(classify);

  for (auto* sub : {synth, conn, cluster, classify}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.out = out;
    cfg.seed = seed;
    cfg.jobs = jobs;
    cfg.log = verbose ? &std::cerr : nullptr;
    if (!modes.empty()) {
      cfg.modes.clear();
      for (const auto& m : modes) cfg.modes.push_back(fcnet::parse_feature_mode(m));
    }
    int failures = 0;
    if (synth->parsed()) {
      fcnet::SynthSpec spec;
      if (!spec_path.empty()) spec = fcnet::io::synth_spec_from_json(fcnet::io::read_json(spec_path));
      if (seed_opt->count() > 0) spec.seed = seed;
      fcnet::validate(spec);
      failures = fcnet::cmd_synth(spec, cfg.out, cfg.jobs);
    } else if (conn->parsed()) {
      cfg.dataset = dataset;
      failures = fcnet::cmd_connectivity(cfg);
    } else {
      cfg.matrices = matrices;
      cfg.thresholds = thresholds_from(thresholds);
      cfg.dse = dse_flags.params();
      cfg.cluster_subset = !whole_graph;
      failures = cluster->parsed() ? fcnet::cmd_cluster(cfg) : fcnet::cmd_classify(cfg);
    }
    if (failures > 0) std::cerr << "fcnet: " << failures << " cell(s) or fold(s) failed; see outputs\n";
    return failures > 0 ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "fcnet: " << e.what() << '\n';
    return 2;
  }
}
