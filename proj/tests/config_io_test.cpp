#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedrl/config.hpp"
#include "fedrl/metrics_io.hpp"
#include "fedrl/presets.hpp"

using namespace fedrl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fedrl_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

MetricsTable tiny_table() {
  ExperimentConfig cfg;
  cfg.n_agents = 2;
  cfg.total_steps = 200;
  cfg.seeds = {0};
  cfg.scheme = SchemeKind::All;
  return run_experiment(cfg);
}

}  // namespace

TEST(ParseConfig, MinimalFileUsesDefaults) {
  const ExperimentConfig cfg = parse_config_text("scheme=caesar\nscenario=gridworld\n");
  EXPECT_EQ(cfg.scheme, SchemeKind::Caesar);
  EXPECT_EQ(cfg.n_agents, 20u);
  EXPECT_EQ(cfg.total_steps, 10000u);
  EXPECT_EQ(cfg.fed.h, 100u);
  EXPECT_EQ(cfg.fed.beta, 0.5);
  EXPECT_EQ(cfg.fed.delta, 0.1);
  EXPECT_EQ(cfg.fed.xi, 0.0);
  EXPECT_EQ(cfg.fed.p0, 0.0);
  EXPECT_EQ(cfg.seeds.size(), 30u);
}

TEST(ParseConfig, ReadsEveryKindOfValue) {
  const ExperimentConfig cfg = parse_config_text(
      "# comment line\n"
      "scheme=peers scenario=fl_strong_hetero  # trailing comment\n"
      "n_agents=6 groups=2,4 total_steps=400 h=50\n"
      "epsilon=0.2 alpha=0.3 gamma=0.9 beta=0.25 delta=0.05 xi=0.01 p0=0.5\n"
      "seeds=3..5,9 slippery=true step_limit=50 tie_break=random\n");
  EXPECT_EQ(cfg.scheme, SchemeKind::Peers);
  EXPECT_EQ(cfg.scenario, ScenarioTag::FlStrongHetero);
  EXPECT_EQ(cfg.groups, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(cfg.rounds(), 8u);
  EXPECT_EQ(cfg.effective_alpha(), 0.3);
  EXPECT_EQ(cfg.fed.p0, 0.5);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{3, 4, 5, 9}));
  EXPECT_TRUE(cfg.slippery);
  EXPECT_EQ(cfg.step_limit, 50u);
  EXPECT_EQ(cfg.tie_break, TieBreak::Random);
}

TEST(ParseConfig, OutOfRangeBetaNamesTheLine) {
  try {
    parse_config_text("scheme=all\nbeta=1.5\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
}

TEST(ParseConfig, UnknownKeyAndMalformedPair) {
  EXPECT_THROW(parse_config_text("colour=blue\n"), ConfigError);
  EXPECT_THROW(parse_config_text("scheme\n"), ConfigError);
  EXPECT_THROW(parse_config_text("n_agents=abc\n"), ConfigError);
  EXPECT_THROW(parse_config_text("scheme=fedavg\n"), ConfigError);
}

TEST(ParseConfig, CustomPeersNeedsAssignment) {
  try {
    parse_config_text("scenario=custom scheme=peers map1=SFFF/FHFF/FFHF/HFFG\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("assignment"), std::string::npos);
  }
  const ExperimentConfig ok =
      parse_config_text("scenario=custom scheme=peers map1=SFFF/FHFF/FFHF/HFFG map2=SFHF/FHFH/FFFH/HHFG groups=10,10\n");
  EXPECT_EQ(ok.maps.size(), 2u);
  EXPECT_EQ(parse_layout(ok.maps[1]), map_hard());
}

TEST(ParseConfig, MissingFileIsAConfigError) {
  EXPECT_THROW(parse_config("/nonexistent/fedrl.cfg"), ConfigError);
}

TEST(EmitMetrics, RowCountsAndHeaders) {
  const fs::path dir = scratch_dir("emit");
  const MetricsTable t = tiny_table();
  const auto files = emit_metrics(t, dir);
  ASSERT_EQ(files.size(), 4u);
  const auto raw = lines_of(slurp(dir / "raw.csv"));
  ASSERT_EQ(raw.size(), 1u + 2 * 2);  // header + rounds * agents
  EXPECT_EQ(raw[0], kRawHeader);
  const auto agg = lines_of(slurp(dir / "aggregate.csv"));
  ASSERT_EQ(agg.size(), 3u);
  EXPECT_EQ(agg[0], kAggregateHeader);
  EXPECT_EQ(agg[1].substr(0, 17), "1,100,all,gridwor");
}

TEST(EmitMetrics, ByteIdenticalAcrossReruns) {
  const fs::path a = scratch_dir("rerun_a");
  const fs::path b = scratch_dir("rerun_b");
  emit_metrics(tiny_table(), a);
  emit_metrics(tiny_table(), b);
  for (const char* name : {"raw.csv", "aggregate.csv", "raw_undiscounted.csv", "aggregate_undiscounted.csv"})
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
}

TEST(EmitMetrics, EmptyTableIsRejected) {
  EXPECT_THROW(emit_metrics(MetricsTable{}, scratch_dir("empty")), std::invalid_argument);
}

TEST(EmitMetrics, MeanOfZeroAndOne) {
  MetricsTable t;
  t.scheme = "self";
  t.scenario = "gridworld";
  t.rows = {{0, 1, 100, 0, 0, 0.0, 0.0}, {0, 1, 100, 1, 1, 1.0, 1.0}};
  t.aggregates = compute_aggregates(t.rows);
  t.aggregates_undiscounted = compute_aggregates(t.rows, Metric::Undiscounted);
  const fs::path dir = scratch_dir("mean");
  emit_metrics(t, dir);
  EXPECT_EQ(lines_of(slurp(dir / "aggregate.csv"))[1], "1,100,self,gridworld,0.5,0");
}

TEST(EmitMetrics, AggregateReproducibleFromRawCsv) {
  ExperimentConfig cfg;
  cfg.n_agents = 6;
  cfg.total_steps = 1000;
  cfg.seeds = {0, 1, 2, 3};
  cfg.scheme = SchemeKind::Caesar;
  const MetricsTable t = run_experiment(cfg);
  const fs::path dir = scratch_dir("roundtrip");
  emit_metrics(t, dir);
  const RawCsv raw = read_raw_csv(dir / "raw.csv");
  EXPECT_EQ(raw.scheme, "caesar");
  ASSERT_EQ(raw.rows.size(), t.rows.size());
  const auto again = compute_aggregates(raw.rows);
  ASSERT_EQ(again.size(), t.aggregates.size());
  for (std::size_t k = 0; k < again.size(); ++k) {
    EXPECT_EQ(again[k].mean, t.aggregates[k].mean);
    EXPECT_EQ(again[k].ci95, t.aggregates[k].ci95);
  }
}

TEST(EmitPMatrixTrace, FiveSnapshotsOfTwentyAgents) {
  ExperimentConfig cfg;
  cfg.scheme = SchemeKind::Sampling;
  cfg.seeds = {0};
  const MetricsTable t = run_experiment(cfg);
  const fs::path dir = scratch_dir("ptrace");
  emit_p_matrix_trace(t.seeds.front().p_snapshots, dir);
  const auto lines = lines_of(slurp(dir / "p_trace.csv"));
  ASSERT_EQ(lines.size(), 1u + 5 * 400);
  EXPECT_EQ(lines[0], kPTraceHeader);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto f = detail::split(lines[k], ',');
    ASSERT_EQ(f.size(), 4u);
    const double p = std::stod(f[3]);
    if (f[1] == f[2]) {
      EXPECT_EQ(p, 1.0);
    } else if (k <= 400) {
      EXPECT_EQ(p, cfg.fed.p0);  // the first snapshot precedes any update
    }
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(WriteQTable, OneRowPerEntry) {
  const fs::path dir = scratch_dir("qtable");
  QTable q(2, 2);
  q(1, 0) = 0.25;
  write_q_table(q, dir / "q.csv");
  EXPECT_EQ(slurp(dir / "q.csv"), "state,action,q\n0,0,0\n0,1,0\n1,0,0.25\n1,1,0\n");
}

TEST(FigurePresets, GridWorldComparisonUsesDefaults) {
  const auto fp = figure_preset("fig4");
  ASSERT_TRUE(fp.has_value());
  EXPECT_EQ(fp->schemes.size(), 6u);
  EXPECT_EQ(fp->base.scenario, ScenarioTag::Gridworld);
  EXPECT_EQ(fp->base.n_agents, 20u);
  EXPECT_EQ(fp->base.total_steps, 10000u);
  EXPECT_EQ(fp->base.fed.h, 100u);
  EXPECT_EQ(fp->base.epsilon, 0.1);
  EXPECT_EQ(fp->base.seeds.size(), 30u);
  EXPECT_FALSE(figure_preset("fig9").has_value());
  for (std::string_view id : kFigureIds) EXPECT_NO_THROW(validate(figure_preset(id)->base)) << id;
}
