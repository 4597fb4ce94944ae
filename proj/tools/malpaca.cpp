// Command-line front end: run, baseline-compare, synth, render, dag.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "malpaca/malpaca.hpp"

namespace {

using namespace malpaca;

// Flags shared by `run` and `baseline-compare`. Values are kept as strings and
// applied on top of the config file, so the command line wins.
struct PipelineFlags {
  std::string config;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> values;
  bool baseline = false;
  bool reuse = false;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App* app, bool with_baseline) {
    app->add_option("--config", config, "key = value configuration file");
    app->add_option("--input", inputs, "capture file or directory (repeatable)");
    for (const char* key : {"out", "len", "min-len", "order", "min-cluster-size", "k", "features", "bin-width",
                            "localhost", "family-labels", "capability-labels", "workers"})
      options.emplace_back(key, app->add_option(std::string("--") + key, values[key]));
    if (with_baseline) app->add_flag("--baseline", baseline, "cluster on statistical features");
    app->add_flag("--reuse-distances", reuse, "reuse <out>/distances.csv when its keys match");
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config.empty()) load_config_file(config, cfg);
    if (!inputs.empty()) {
      cfg.inputs.clear();
      for (const auto& in : inputs) cfg.inputs.emplace_back(in);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) apply_setting(cfg, key, values.at(key));
    if (baseline) cfg.baseline = true;
    cfg.reuse_distances = reuse;
    if (cfg.inputs.empty()) throw Error(ErrorCode::InvalidParams, "no --input given");
    return cfg;
  }
};

void print_summary(const PipelineSummary& s, const fs::path& out) {
  fmt::print("{} files, {} IP packets ({} non-IP skipped, {} malformed)\n", s.files, s.packets, s.non_ip_skipped,
             s.malformed_records);
  fmt::print("{} connections kept, {} discarded as short\n", s.extraction.kept_connections,
             s.extraction.discarded_connections);
  fmt::print("{} clusters, {} noise, mean CE rate {:.4f}\n", s.n_clusters, s.noise, s.mean_ce_rate);
  fmt::print("artifacts in {}\n", out.string());
}

int cmd_synth(const fs::path& out, const std::vector<std::string>& kinds, std::size_t per_kind, std::size_t len,
              std::uint64_t seed) {
  std::vector<BehaviorKind> selected;
  for (const auto& k : kinds) {
    auto kind = parse_behavior(k);
    if (!kind) throw Error(ErrorCode::InvalidParams, "unknown behavior '" + k + "'");
    selected.push_back(*kind);
  }
  if (selected.empty()) selected.assign(kAllBehaviors.begin(), kAllBehaviors.end());
  const auto trace = generate_fixture(selected, per_kind, len, seed);
  write_trace_directory(out, trace);
  fmt::print("wrote {} packets / {} connections to {}\n", trace.packets.size(), trace.truth.size(), out.string());
  return 0;
}

int cmd_render(const fs::path& dir) {
  std::ifstream conns_in(dir / "connections.csv");
  std::ifstream clusters_in(dir / "clusters.csv");
  if (!conns_in || !clusters_in) throw Error(ErrorCode::UnreadableFile, "connections.csv/clusters.csv in " + dir.string());
  const auto conns = read_connections_csv(conns_in);
  const auto labelled = read_clusters_csv(clusters_in);
  if (labelled.size() != conns.size()) throw Error(ErrorCode::MalformedRecord, "clusters.csv does not match connections.csv");
  std::vector<int> labels;
  for (std::size_t i = 0; i < conns.size(); ++i) {
    if (labelled[i].first != conns[i].key.str())
      throw Error(ErrorCode::MalformedRecord, "key mismatch at row " + std::to_string(i + 1));
    labels.push_back(labelled[i].second);
  }
  render_heatmaps(dir / "heatmaps", conns, cluster_result_from_labels(labels));
  fmt::print("rendered heatmaps into {}\n", (dir / "heatmaps").string());
  return 0;
}

int cmd_dag(const fs::path& profiles_path, const std::string& family_labels, const fs::path& dot_path) {
  std::ifstream in(profiles_path);
  if (!in) throw Error(ErrorCode::UnreadableFile, profiles_path.string());
  auto table = read_profiles_csv(in);
  if (!family_labels.empty()) {
    std::ifstream fam(family_labels);
    if (!fam) throw Error(ErrorCode::UnreadableFile, family_labels);
    table.family_labels = read_label_csv(fam);
  }
  std::ofstream out(dot_path);
  if (!out) throw Error(ErrorCode::UnreadableFile, dot_path.string());
  const auto dag = build_dag(table.profiles, table.family_labels);
  write_dot(out, dag);
  fmt::print("{} nodes, {} edges -> {}\n", dag.nodes.size(), dag.edges.size(), dot_path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavioral clustering of unidirectional network connections"};
  app.require_subcommand(1);

  PipelineFlags run_flags, cmp_flags;
  auto* run = app.add_subcommand("run", "run the full pipeline");
  run_flags.attach(run, true);
  auto* cmp = app.add_subcommand("baseline-compare", "sequential vs statistical-feature clustering");
  cmp_flags.attach(cmp, false);

  auto* synth = app.add_subcommand("synth", "generate planted-behavior traces (jsonl)");
  std::string synth_out = "synth";
  std::vector<std::string> kinds;
  std::size_t per_kind = 15, synth_len = 20;
  std::uint64_t seed = 1;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--kinds", kinds, "behavior kinds (default: all)")->delimiter(',');
  synth->add_option("--per-kind", per_kind, "connections per kind");
  synth->add_option("--len", synth_len, "packets per connection");
  synth->add_option("--seed", seed, "generator seed");

  auto* render = app.add_subcommand("render", "re-render heatmaps from connections.csv and clusters.csv");
  std::string render_dir;
  render->add_option("--out", render_dir, "artifact directory of a previous run")->required();

  auto* dag = app.add_subcommand("dag", "rebuild the behavioral DAG from profiles.csv");
  std::string dag_dir, dag_profiles, dag_families, dag_dot;
  dag->add_option("--out", dag_dir, "artifact directory of a previous run");
  dag->add_option("--profiles", dag_profiles, "profiles.csv (default <out>/profiles.csv)");
  dag->add_option("--family-labels", dag_families, "sample_id,label CSV overriding profiles.csv labels");
  dag->add_option("--dot", dag_dot, "output DOT file (default <out>/dag.dot)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = run_flags.build();
      print_summary(run_pipeline(cfg), cfg.out);
    } else if (cmp->parsed()) {
      const auto cfg = cmp_flags.build();
      const auto result = run_baseline_comparison(cfg);
      fmt::print("sequential: {} clusters, mean CE rate {:.4f}\n", result.sequential.n_clusters,
                 result.sequential.mean_ce_rate);
      fmt::print("baseline:   {} clusters, mean CE rate {:.4f}\n", result.baseline.n_clusters,
                 result.baseline.mean_ce_rate);
      fmt::print("difference (baseline - sequential): {:.4f}\n", result.difference());
    } else if (synth->parsed()) {
      return cmd_synth(synth_out, kinds, per_kind, synth_len, seed);
    } else if (render->parsed()) {
      return cmd_render(render_dir);
    } else if (dag->parsed()) {
      const fs::path dir = dag_dir.empty() ? fs::path(".") : fs::path(dag_dir);
      return cmd_dag(dag_profiles.empty() ? dir / "profiles.csv" : fs::path(dag_profiles), dag_families,
                     dag_dot.empty() ? dir / "dag.dot" : fs::path(dag_dot));
    }
  } catch (const std::exception& e) {
    std::cerr << "malpaca: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
