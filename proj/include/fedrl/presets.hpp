#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedrl/experiment.hpp"

namespace fedrl {

/// A named figure: a base config and the schemes it compares.
struct FigurePreset {
  std::string id;
  ExperimentConfig base;
  std::vector<SchemeKind> schemes;
  bool p_trace = false;  ///< emit p_trace.csv (first seed)
  bool q_trace = false;  ///< emit q_trace.csv and the oracle tables
};

inline constexpr std::string_view kFigureIds[] = {"fig2", "fig4", "fig5", "fig6a", "fig6b", "fig6c"};

inline std::vector<SchemeKind> all_schemes() { return {std::begin(kAllSchemes), std::end(kAllSchemes)}; }

/// Preset for a figure id; nullopt for unknown ids.
///
/// fig2: GridWorld under Self with epsilon 0.9, Q rows of states -4 and -3 traced.
/// fig4: GridWorld, all schemes. fig5: GridWorld under Sampling, p-matrix trace of seed 3.
/// fig6a/b/c: FrozenLake homogeneous / random heterogeneous / strongly heterogeneous.
inline std::optional<FigurePreset> figure_preset(std::string_view id) {
  FigurePreset fp;
  fp.id = std::string(id);
  ExperimentConfig& c = fp.base;
  if (id == "fig2") {
    c.scenario = ScenarioTag::Gridworld;
    c.epsilon = 0.9;
    c.trace_states = {grid_state(-4), grid_state(-3)};
    fp.schemes = {SchemeKind::SelfOnly};
    fp.q_trace = true;
  } else if (id == "fig4") {
    c.scenario = ScenarioTag::Gridworld;
    fp.schemes = all_schemes();
  } else if (id == "fig5") {
    c.scenario = ScenarioTag::Gridworld;
    c.seeds = {3};
    fp.schemes = {SchemeKind::Sampling};
    fp.p_trace = true;
  } else if (id == "fig6a") {
    c.scenario = ScenarioTag::FlHomogeneous;
    fp.schemes = all_schemes();
  } else if (id == "fig6b") {
    c.scenario = ScenarioTag::FlRandomHetero;
    fp.schemes = all_schemes();
  } else if (id == "fig6c") {
    c.scenario = ScenarioTag::FlStrongHetero;
    fp.schemes = all_schemes();
  } else {
    return std::nullopt;
  }
  c.scheme = fp.schemes.front();
  return fp;
}

}  // namespace fedrl
