#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fedrl/agent.hpp"
#include "fedrl/env.hpp"
#include "fedrl/federation.hpp"
#include "fedrl/rng.hpp"

namespace fedrl {

enum class ScenarioTag { Gridworld, FlHomogeneous, FlRandomHetero, FlStrongHetero, Custom };

inline constexpr ScenarioTag kAllScenarios[] = {ScenarioTag::Gridworld, ScenarioTag::FlHomogeneous,
                                                ScenarioTag::FlRandomHetero, ScenarioTag::FlStrongHetero,
                                                ScenarioTag::Custom};

inline std::string_view to_string(ScenarioTag t) {
  switch (t) {
    case ScenarioTag::Gridworld: return "gridworld";
    case ScenarioTag::FlHomogeneous: return "fl_homogeneous";
    case ScenarioTag::FlRandomHetero: return "fl_random_hetero";
    case ScenarioTag::FlStrongHetero: return "fl_strong_hetero";
    case ScenarioTag::Custom: return "custom";
  }
  return "?";
}

inline std::optional<ScenarioTag> parse_scenario(std::string_view name) {
  for (ScenarioTag t : kAllScenarios)
    if (name == to_string(t)) return t;
  return std::nullopt;
}

inline bool is_frozenlake(ScenarioTag t) { return t != ScenarioTag::Gridworld; }

/// Everything needed to run one scheme on one scenario over a list of seeds.
struct ExperimentConfig {
  SchemeKind scheme = SchemeKind::Caesar;
  ScenarioTag scenario = ScenarioTag::Gridworld;
  std::size_t n_agents = 20;
  std::size_t total_steps = 10000;
  FederationConfig fed;
  double epsilon = 0.1;
  std::optional<double> alpha;  ///< unset: 0.5 on GridWorld, 0.1 on FrozenLake
  double gamma = 0.95;
  double q_init = 0.0;
  /// Entries start uniform in [q_init - spread, q_init + spread]. A tiny
  /// spread gives each agent its own initial greedy policy; with an exactly
  /// flat table every GridWorld M1 agent walks left and never finds +5.
  double q_init_spread = 1e-3;
  TieBreak tie_break = TieBreak::Lowest;  ///< behaviour-policy ties; evaluation is always lowest-index
  std::vector<std::uint64_t> seeds = default_seeds();

  // FrozenLake knobs.
  std::size_t step_limit = 100;
  bool slippery = false;
  std::uint64_t map_seed = 0;          ///< seeds the scenario's random maps
  std::vector<std::string> maps;       ///< map text overrides, one per group
  std::vector<std::size_t> groups;     ///< explicit agent count per group

  // Telemetry.
  std::vector<std::size_t> snapshot_rounds;  ///< p-matrix capture rounds; empty: 5 evenly spaced
  std::vector<State> trace_states;           ///< states whose Q rows are recorded every round

  static std::vector<std::uint64_t> default_seeds() {
    std::vector<std::uint64_t> s(30);
    std::iota(s.begin(), s.end(), std::uint64_t{0});
    return s;
  }

  double effective_alpha() const { return alpha.value_or(is_frozenlake(scenario) ? 0.1 : 0.5); }
  std::size_t rounds() const { return total_steps / fed.h; }
};

/// Environment shared by a block of agents.
struct Group {
  std::string name;
  MdpSpec spec;
  std::size_t count = 0;
};

/// Scenario resolved into concrete environments plus the agent assignment.
struct Scenario {
  std::vector<Group> groups;
  Assignment assignment;
  bool assignment_known = true;  ///< false when group sizes were not stated (Peers unusable)
};

inline std::vector<std::size_t> even_split(std::size_t n, std::size_t k) {
  std::vector<std::size_t> out(k, n / k);
  for (std::size_t i = 0; i < n % k; ++i) ++out[i];
  return out;
}

/// Environment groups for a scenario tag, two groups of equal size for the
/// built-in tags. `rng` drives random map generation.
inline std::vector<Group> build_scenario(ScenarioTag tag, Rng& rng, std::size_t n_agents = 20,
                                         double gamma = 0.95, std::size_t step_limit = 100,
                                         bool slippery = false,
                                         const std::vector<std::string>& map_overrides = {}) {
  const auto sizes = even_split(n_agents, 2);
  const auto layout = [&](std::size_t idx, auto fallback) {
    if (idx < map_overrides.size() && !map_overrides[idx].empty()) return parse_layout(map_overrides[idx]);
    return fallback();
  };
  const auto random_map = [&] { return generate_random_map(4, 4, 4, rng); };
  const auto lake = [&](const MapLayout& m) { return build_frozenlake(m, step_limit, slippery, gamma); };

  switch (tag) {
    case ScenarioTag::Gridworld:
      return {{"M1", build_gridworld(GridVariant::M1, gamma), sizes[0]},
              {"M2", build_gridworld(GridVariant::M2, gamma), sizes[1]}};
    case ScenarioTag::FlHomogeneous: {
      const MdpSpec spec = lake(layout(0, random_map));
      return {{"M1", spec, sizes[0]}, {"M2", spec, sizes[1]}};
    }
    case ScenarioTag::FlRandomHetero: {
      const MapLayout first = layout(0, random_map);
      const MapLayout second = layout(1, random_map);
      return {{"M1", lake(first), sizes[0]}, {"M2", lake(second), sizes[1]}};
    }
    case ScenarioTag::FlStrongHetero:
      return {{"M1", lake(layout(0, map_easy)), sizes[0]}, {"M2", lake(layout(1, map_hard)), sizes[1]}};
    case ScenarioTag::Custom:
      break;
  }
  throw std::invalid_argument("build_scenario: custom scenarios are resolved from explicit maps");
}

/// Checks ranges and cross-field constraints. Throws std::invalid_argument.
inline void validate(const ExperimentConfig& cfg) {
  cfg.fed.validate();
  if (cfg.n_agents == 0) throw std::invalid_argument("n_agents must be >= 1");
  if (cfg.total_steps == 0) throw std::invalid_argument("total_steps must be >= 1");
  if (cfg.total_steps % cfg.fed.h != 0) throw std::invalid_argument("total_steps must be a multiple of h");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  const double alpha = cfg.effective_alpha();
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!std::isfinite(cfg.q_init)) throw std::invalid_argument("q_init must be finite");
  if (!(cfg.q_init_spread >= 0.0) || !std::isfinite(cfg.q_init_spread))
    throw std::invalid_argument("q_init_spread must be finite and >= 0");
  if (cfg.seeds.empty()) throw std::invalid_argument("seeds must not be empty");
  if (cfg.step_limit == 0) throw std::invalid_argument("step_limit must be >= 1");
  if (!cfg.groups.empty()) {
    const auto total = std::accumulate(cfg.groups.begin(), cfg.groups.end(), std::size_t{0});
    if (total != cfg.n_agents) throw std::invalid_argument("groups must sum to n_agents");
  }
  if (cfg.scenario == ScenarioTag::Custom) {
    if (cfg.maps.empty()) throw std::invalid_argument("custom scenario needs at least one map");
    if (!cfg.groups.empty() && cfg.groups.size() != cfg.maps.size())
      throw std::invalid_argument("groups must list one agent count per map");
    if (cfg.scheme == SchemeKind::Peers && cfg.groups.empty())
      throw std::invalid_argument("scheme peers needs the agent assignment: set groups");
  } else if (!cfg.groups.empty() && cfg.groups.size() != 2) {
    throw std::invalid_argument("built-in scenarios have exactly two groups");
  }
  for (State s : cfg.trace_states)
    if (cfg.scenario == ScenarioTag::Gridworld && s >= kGridMax - kGridMin + 1)
      throw std::invalid_argument("trace_states out of range");
}

/// Resolves environments and the assignment for `cfg`. Random maps come from
/// the config's map_seed, so every run seed shares the same environments.
inline Scenario resolve_scenario(const ExperimentConfig& cfg) {
  Scenario sc;
  Rng map_rng = Rng::named(cfg.map_seed, Stream::Scenario);
  if (cfg.scenario == ScenarioTag::Custom) {
    const auto sizes = cfg.groups.empty() ? even_split(cfg.n_agents, cfg.maps.size()) : cfg.groups;
    for (std::size_t k = 0; k < cfg.maps.size(); ++k)
      sc.groups.push_back({"M" + std::to_string(k + 1),
                           build_frozenlake(parse_layout(cfg.maps[k]), cfg.step_limit, cfg.slippery, cfg.gamma),
                           sizes[k]});
    sc.assignment_known = !cfg.groups.empty();
  } else {
    sc.groups = build_scenario(cfg.scenario, map_rng, cfg.n_agents, cfg.gamma, cfg.step_limit, cfg.slippery,
                               cfg.maps);
    if (!cfg.groups.empty())
      for (std::size_t k = 0; k < sc.groups.size(); ++k) sc.groups[k].count = cfg.groups[k];
  }
  for (std::size_t k = 0; k < sc.groups.size(); ++k) {
    const auto& g = sc.groups[k];
    if (g.spec.n_states != sc.groups[0].spec.n_states || g.spec.n_actions != sc.groups[0].spec.n_actions)
      throw std::invalid_argument("all environments must share the same state and action spaces");
    sc.assignment.insert(sc.assignment.end(), g.count, k);
  }
  return sc;
}

/// Default p-matrix capture rounds: 5 evenly spaced over [1, rounds].
inline std::vector<std::size_t> default_snapshot_rounds(std::size_t rounds) {
  std::vector<std::size_t> out;
  if (rounds == 0) return out;
  for (std::size_t k = 0; k < 5; ++k) {
    const double r = 1.0 + static_cast<double>(k) * static_cast<double>(rounds - 1) / 4.0;
    const auto v = static_cast<std::size_t>(std::llround(r));
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return out;
}

/// One evaluation record: agent `agent` at round `round` (step = round * H).
struct MetricRow {
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::size_t step = 0;
  std::size_t agent = 0;
  std::size_t group = 0;
  double g = 0.0;
  double g_undiscounted = 0.0;

  bool operator==(const MetricRow&) const = default;
};

/// p-matrix as it stood entering a round.
struct PSnapshot {
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::size_t step = 0;
  PMatrix p;
};

struct QTraceRow {
  std::uint64_t seed = 0;
  std::size_t step = 0;
  std::size_t agent = 0;
  std::size_t group = 0;
  State state = 0;
  Action action = 0;
  double q = 0.0;
};

/// Everything one seed produced.
struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  std::vector<PSnapshot> p_snapshots;
  std::vector<QTraceRow> q_trace;
  std::vector<QTable> final_tables;
  PMatrix final_p;
  std::vector<std::vector<std::vector<std::size_t>>> subsets;  ///< [round][agent]
};

/// Cross-seed statistics for one round.
struct AggregateRow {
  std::size_t round = 0;
  std::size_t step = 0;
  double mean = 0.0;
  double ci95 = 0.0;
};

/// Value as it appears in the CSV sinks (10 significant digits).
inline double quantize(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return std::strtod(buf, nullptr);
}

enum class Metric { Discounted, Undiscounted };

/// Per-round mean over agents and seeds with a 95% CI across seeds:
/// 1.96 * (sample std of per-seed agent means) / sqrt(#seeds). Values are
/// quantized first so the result is reproducible from the CSV output.
/// `rows` must be sorted by (seed, round, agent).
inline std::vector<AggregateRow> compute_aggregates(const std::vector<MetricRow>& rows,
                                                    Metric metric = Metric::Discounted) {
  // round -> seed -> (sum, count), both maps iterate in key order.
  std::map<std::size_t, std::map<std::uint64_t, std::pair<double, std::size_t>>> acc;
  std::map<std::size_t, std::size_t> steps;
  for (const auto& r : rows) {
    auto& cell = acc[r.round][r.seed];
    cell.first += quantize(metric == Metric::Discounted ? r.g : r.g_undiscounted);
    ++cell.second;
    steps[r.round] = r.step;
  }
  std::vector<AggregateRow> out;
  for (const auto& [round, per_seed] : acc) {
    std::vector<double> means;
    for (const auto& [seed, sc] : per_seed) means.push_back(sc.first / static_cast<double>(sc.second));
    const double n = static_cast<double>(means.size());
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= n;
    double ci = 0.0;
    if (means.size() > 1) {
      double ss = 0.0;
      for (double m : means) ss += (m - mean) * (m - mean);
      ci = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    out.push_back({round, steps[round], mean, ci});
  }
  return out;
}

/// Output of run_experiment: all seeds merged in seed order plus aggregates.
struct MetricsTable {
  std::string scheme;
  std::string scenario;
  std::vector<std::string> group_names;
  std::vector<MetricRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<AggregateRow> aggregates_undiscounted;
  std::vector<SeedResult> seeds;

  const AggregateRow& final_round() const { return aggregates.back(); }
  const AggregateRow& final_round_undiscounted() const { return aggregates_undiscounted.back(); }
};

/// Runs `cfg` for one seed: N agents, T steps, a federated round every H steps.
inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const Scenario sc = resolve_scenario(cfg);
  if (cfg.scheme == SchemeKind::Peers && !sc.assignment_known)
    throw std::invalid_argument("scheme peers needs the agent assignment: set groups");
  const std::size_t n = cfg.n_agents;
  const double alpha = cfg.effective_alpha();

  std::vector<AgentState> agents;
  agents.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    agents.emplace_back(i, sc.groups[sc.assignment[i]].spec, cfg.epsilon, alpha,
                        Rng::named(seed, Stream::Environment, i), Rng::named(seed, Stream::Policy, i),
                        Rng::named(seed, Stream::Evaluation, i), cfg.q_init);
  for (auto& a : agents) {
    a.ties = cfg.tie_break;
    if (cfg.q_init_spread > 0.0) {
      Rng init = Rng::named(seed, Stream::Initialization, a.id);
      for (double& v : a.q.values()) v = cfg.q_init + cfg.q_init_spread * (2.0 * init.uniform() - 1.0);
    }
  }

  PMatrix p(n, cfg.fed.p0);
  RoundSnapshot snapshot = RoundSnapshot::capture(agents);
  const auto capture = cfg.snapshot_rounds.empty() ? default_snapshot_rounds(cfg.rounds()) : cfg.snapshot_rounds;

  SeedResult result;
  result.seed = seed;
  result.rows.reserve(cfg.rounds() * n);
  for (std::size_t round = 1; round <= cfg.rounds(); ++round) {
    // Agents share nothing between barriers, so running each for H steps
    // in turn equals interleaving them step by step.
    for (auto& a : agents)
      for (std::size_t t = 0; t < cfg.fed.h; ++t) local_update(a, cfg.gamma);

    const std::size_t step = round * cfg.fed.h;
    Rng server = Rng::named(seed, Stream::Server, round);
    RoundTelemetry tel = federated_round(agents, p, snapshot, cfg.scheme, cfg.fed, &sc.assignment, server);

    for (std::size_t i = 0; i < n; ++i)
      result.rows.push_back({seed, round, step, i, sc.assignment[i], tel.g[i], tel.g_undiscounted[i]});
    if (std::find(capture.begin(), capture.end(), round) != capture.end())
      result.p_snapshots.push_back({seed, round, step, std::move(tel.p_before)});
    for (std::size_t i = 0; i < n; ++i)
      for (State s : cfg.trace_states)
        for (Action a = 0; a < agents[i].q.n_actions(); ++a)
          result.q_trace.push_back({seed, step, i, sc.assignment[i], s, a, agents[i].q(s, a)});
    result.subsets.push_back(std::move(tel.subsets));
  }
  for (const auto& a : agents) result.final_tables.push_back(a.q);
  result.final_p = p;
  return result;
}

/// Seed-level parallelism: FEDRL_SIM_THREADS if set, else hardware concurrency.
inline std::size_t seed_threads(std::size_t jobs) {
  std::size_t threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FEDRL_SIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) threads = static_cast<std::size_t>(v);
  }
  return std::min(threads, std::max<std::size_t>(jobs, 1));
}

/// Runs every seed (in parallel where allowed) and merges in seed order.
inline MetricsTable run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  std::vector<SeedResult> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < seeds.size(); k = next++) {
      try {
        results[k] = run_seed(cfg, seeds[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = seed_threads(seeds.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const std::exception& e) {
      throw std::runtime_error("seed " + std::to_string(seeds[k]) + ": " + e.what());
    }
  }

  MetricsTable table;
  table.scheme = std::string(to_string(cfg.scheme));
  table.scenario = std::string(to_string(cfg.scenario));
  for (const auto& g : resolve_scenario(cfg).groups) table.group_names.push_back(g.name);
  for (const auto& r : results) table.rows.insert(table.rows.end(), r.rows.begin(), r.rows.end());
  table.aggregates = compute_aggregates(table.rows, Metric::Discounted);
  table.aggregates_undiscounted = compute_aggregates(table.rows, Metric::Undiscounted);
  table.seeds = std::move(results);
  return table;
}

}  // namespace fedrl
