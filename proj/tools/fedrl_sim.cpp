// fedrl_sim: run federated Q-learning experiments and emit plot-ready CSV.
//
//   fedrl_sim run     --config PATH --out DIR [--scheme NAME] [--seeds N] [--snapshot-rounds LIST]
//   fedrl_sim compare --scenario TAG --out DIR [--schemes LIST] [--config PATH] [--set key=value]...
//   fedrl_sim oracle  --env NAME --out PATH
//   fedrl_sim figure  --figure ID --out DIR [--seeds N]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedrl/config.hpp"
#include "fedrl/experiment.hpp"
#include "fedrl/metrics_io.hpp"
#include "fedrl/oracle.hpp"
#include "fedrl/presets.hpp"

namespace fs = std::filesystem;
using namespace fedrl;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::string scheme;
  std::size_t seeds = 0;
  std::string snapshot_rounds;
  std::vector<std::string> settings;

  void apply(ExperimentConfig& cfg) const {
    if (!scheme.empty()) apply_setting(cfg, "scheme", scheme);
    if (seeds > 0) {
      cfg.seeds.resize(seeds);
      std::iota(cfg.seeds.begin(), cfg.seeds.end(), std::uint64_t{0});
    }
    if (!snapshot_rounds.empty()) apply_setting(cfg, "snapshot_rounds", snapshot_rounds);
    for (const auto& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    check_config(cfg);
  }
};

MetricsTable run_and_emit(const ExperimentConfig& cfg, const fs::path& dir, bool p_trace, bool q_trace) {
  std::cerr << "running " << to_string(cfg.scheme) << " on " << to_string(cfg.scenario) << " ("
            << cfg.seeds.size() << " seeds)\n";
  MetricsTable table = run_experiment(cfg);
  emit_metrics(table, dir);
  if (p_trace) emit_p_matrix_trace(table.seeds.front().p_snapshots, dir);
  if (q_trace) emit_q_trace(table.seeds, dir);
  return table;
}

void write_summary(const std::vector<MetricsTable>& tables, const fs::path& dir) {
  const auto path = dir / "summary.csv";
  fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "scheme,scenario,final_step,mean_g,ci95,mean_success,ci95_success\n";
  for (const auto& t : tables) {
    const auto& d = t.final_round();
    const auto& u = t.final_round_undiscounted();
    out << t.scheme << ',' << t.scenario << ',' << d.step << ',' << format_real(d.mean) << ','
        << format_real(d.ci95) << ',' << format_real(u.mean) << ',' << format_real(u.ci95) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void print_summary(const std::vector<MetricsTable>& tables) {
  for (const auto& t : tables)
    std::cout << t.scheme << "\tfinal mean_g=" << format_real(t.final_round().mean)
              << " ci95=" << format_real(t.final_round().ci95)
              << " success=" << format_real(t.final_round_undiscounted().mean) << '\n';
}

std::vector<MetricsTable> run_schemes(ExperimentConfig cfg, const std::vector<SchemeKind>& schemes,
                                      const fs::path& out, bool p_trace, bool q_trace) {
  std::vector<MetricsTable> tables;
  for (SchemeKind k : schemes) {
    cfg.scheme = k;
    check_config(cfg);
    tables.push_back(run_and_emit(cfg, out / std::string(to_string(k)), p_trace, q_trace));
  }
  write_summary(tables, out);
  print_summary(tables);
  return tables;
}

std::vector<SchemeKind> parse_scheme_list(const std::string& list) {
  if (list.empty() || list == "all6") return all_schemes();
  std::vector<SchemeKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto k = parse_scheme(item);
    if (!k) throw ConfigError("unknown scheme '" + item + "'");
    out.push_back(*k);
  }
  return out;
}

/// Built-in environments addressable by the oracle command.
MdpSpec oracle_env(const std::string& name, double gamma) {
  if (name == "gridworld_m1") return build_gridworld(GridVariant::M1, gamma);
  if (name == "gridworld_m2") return build_gridworld(GridVariant::M2, gamma);
  if (name == "single_m1") return build_single_decision(GridVariant::M1, gamma);
  if (name == "single_m2") return build_single_decision(GridVariant::M2, gamma);
  if (name == "map_easy") return build_frozenlake(map_easy(), 100, false, gamma);
  if (name == "map_hard") return build_frozenlake(map_hard(), 100, false, gamma);
  throw ConfigError("unknown env '" + name +
                    "' (expected gridworld_m1, gridworld_m2, single_m1, single_m2, map_easy, map_hard)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated Q-learning simulator over heterogeneous tabular MDPs"};
  app.require_subcommand(1);

  Overrides ov;
  fs::path config_path;
  fs::path out_dir;

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("--config", config_path, "Config file (key=value)")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--scheme", ov.scheme, "Override the configured scheme");
  run->add_option("--seeds", ov.seeds, "Use seeds 0..N-1");
  run->add_option("--snapshot-rounds", ov.snapshot_rounds, "Comma-separated rounds for p_trace.csv");

  std::string scenario;
  std::string schemes;
  auto* compare = app.add_subcommand("compare", "Run several schemes on one scenario");
  compare->add_option("--scenario", scenario, "Scenario tag")->required();
  compare->add_option("--schemes", schemes, "Comma-separated schemes (default: all six)");
  compare->add_option("--out", out_dir, "Output directory")->required();
  compare->add_option("--config", config_path, "Optional base config file");
  compare->add_option("--set", ov.settings, "Extra key=value overrides");
  compare->add_option("--seeds", ov.seeds, "Use seeds 0..N-1");
  compare->add_option("--snapshot-rounds", ov.snapshot_rounds, "Comma-separated rounds for p_trace.csv");

  std::string env_name;
  double gamma = 0.95;
  fs::path oracle_out;
  auto* oracle = app.add_subcommand("oracle", "Write the optimal Q-table of a built-in environment");
  oracle->add_option("--env", env_name, "gridworld_m1|gridworld_m2|single_m1|single_m2|map_easy|map_hard")->required();
  oracle->add_option("--out", oracle_out, "Output CSV path")->required();
  oracle->add_option("--gamma", gamma, "Discount factor");

  std::string figure_id;
  auto* figure = app.add_subcommand("figure", "Reproduce the data behind a figure");
  figure->add_option("--figure", figure_id, "fig2|fig4|fig5|fig6a|fig6b|fig6c")->required();
  figure->add_option("--out", out_dir, "Output directory")->required();
  figure->add_option("--seeds", ov.seeds, "Use seeds 0..N-1 instead of the preset's");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      ExperimentConfig cfg = parse_config(config_path);
      ov.apply(cfg);
      auto table = run_and_emit(cfg, out_dir, true, !cfg.trace_states.empty());
      print_summary({table});
    } else if (*compare) {
      ExperimentConfig cfg;
      if (!config_path.empty()) cfg = parse_config(config_path);
      apply_setting(cfg, "scenario", scenario);
      ov.apply(cfg);
      const bool p_trace = true;
      run_schemes(cfg, parse_scheme_list(schemes), out_dir, p_trace, !cfg.trace_states.empty());
    } else if (*oracle) {
      const MdpSpec spec = oracle_env(env_name, gamma);
      write_q_table(value_iteration_oracle(spec), oracle_out);
    } else if (*figure) {
      const auto preset = figure_preset(figure_id);
      if (!preset) throw ConfigError("unknown figure id '" + figure_id + "'");
      ExperimentConfig cfg = preset->base;
      ov.apply(cfg);
      run_schemes(cfg, preset->schemes, out_dir, preset->p_trace, preset->q_trace);
      if (preset->q_trace) {
        write_q_table(value_iteration_oracle(build_gridworld(GridVariant::M1, cfg.gamma)), out_dir / "oracle_m1.csv");
        write_q_table(value_iteration_oracle(build_gridworld(GridVariant::M2, cfg.gamma)), out_dir / "oracle_m2.csv");
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
