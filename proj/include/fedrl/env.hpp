#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedrl/rng.hpp"

namespace fedrl {

using State = std::size_t;
using Action = std::size_t;

/// One possible result of taking an action: where it lands, with what
/// probability, and the reward attached to that particular transition.
struct Outcome {
  State next = 0;
  double prob = 1.0;
  double reward = 0.0;

  bool operator==(const Outcome&) const = default;
};

/// Full tabular description of an episodic MDP.
///
/// Rewards live on (s, a, s') triples; the usual R(s, a) is the expectation
/// over the outcome list of (s, a).
struct MdpSpec {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  /// outcomes[s * n_actions + a]
  std::vector<std::vector<Outcome>> outcomes;
  std::vector<bool> terminal;
  std::vector<double> initial_dist;
  double gamma = 0.95;
  std::optional<std::size_t> step_limit;

  const std::vector<Outcome>& at(State s, Action a) const { return outcomes[s * n_actions + a]; }
  std::vector<Outcome>& at(State s, Action a) { return outcomes[s * n_actions + a]; }

  /// Expected immediate reward of (s, a).
  double expected_reward(State s, Action a) const {
    double r = 0.0;
    for (const auto& o : at(s, a)) r += o.prob * o.reward;
    return r;
  }

  /// Reward of the (s, a, s') triple; zero when s' is unreachable from (s, a).
  double reward(State s, Action a, State next) const {
    for (const auto& o : at(s, a))
      if (o.next == next) return o.reward;
    return 0.0;
  }

  /// True when every transition and the initial distribution have a single outcome.
  bool deterministic() const {
    const auto starts = std::count_if(initial_dist.begin(), initial_dist.end(),
                                      [](double p) { return p > 0.0; });
    if (starts != 1) return false;
    return std::all_of(outcomes.begin(), outcomes.end(),
                       [](const auto& row) { return row.size() == 1; });
  }

  bool operator==(const MdpSpec&) const = default;
};

/// Throws std::invalid_argument when `spec` breaks an MdpSpec invariant.
inline void validate(const MdpSpec& spec) {
  if (spec.n_states == 0 || spec.n_actions == 0)
    throw std::invalid_argument("MdpSpec: empty state or action space");
  if (spec.outcomes.size() != spec.n_states * spec.n_actions ||
      spec.terminal.size() != spec.n_states || spec.initial_dist.size() != spec.n_states)
    throw std::invalid_argument("MdpSpec: table sizes do not match (n_states, n_actions)");
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0))
    throw std::invalid_argument("MdpSpec: gamma must lie in (0, 1]");

  for (State s = 0; s < spec.n_states; ++s) {
    for (Action a = 0; a < spec.n_actions; ++a) {
      double total = 0.0;
      for (const auto& o : spec.at(s, a)) {
        if (o.next >= spec.n_states) throw std::invalid_argument("MdpSpec: next state out of range");
        if (!(o.prob >= 0.0) || !std::isfinite(o.reward))
          throw std::invalid_argument("MdpSpec: invalid probability or reward");
        total += o.prob;
        if (spec.terminal[s] && (o.next != s || o.reward != 0.0))
          throw std::invalid_argument("MdpSpec: terminal state must self-loop with zero reward");
      }
      if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("MdpSpec: transition distribution does not sum to 1");
    }
  }
  double mass = 0.0;
  for (State s = 0; s < spec.n_states; ++s) {
    if (spec.initial_dist[s] < 0.0) throw std::invalid_argument("MdpSpec: negative initial mass");
    if (spec.terminal[s] && spec.initial_dist[s] != 0.0)
      throw std::invalid_argument("MdpSpec: initial distribution puts mass on a terminal state");
    mass += spec.initial_dist[s];
  }
  if (std::abs(mass - 1.0) > 1e-12)
    throw std::invalid_argument("MdpSpec: initial distribution does not sum to 1");
}

// ---------------------------------------------------------------------------
// GridWorld
// ---------------------------------------------------------------------------

enum class GridVariant { M1, M2 };

inline constexpr int kGridMin = -5;
inline constexpr int kGridMax = 5;

/// Index of GridWorld position x in [-5, 5].
constexpr State grid_state(int x) noexcept { return static_cast<State>(x - kGridMin); }

/// 1-D chain over positions -5..5 with two actions (0: left, 1: right).
/// Episodes start at 0 and end at either edge. In M1 reaching +5 pays +1
/// and reaching -5 pays -1; M2 negates every reward.
inline MdpSpec build_gridworld(GridVariant variant, double gamma) {
  constexpr std::size_t n = kGridMax - kGridMin + 1;
  MdpSpec spec;
  spec.n_states = n;
  spec.n_actions = 2;
  spec.outcomes.resize(n * 2);
  spec.terminal.assign(n, false);
  spec.initial_dist.assign(n, 0.0);
  spec.gamma = gamma;
  const double sign = variant == GridVariant::M1 ? 1.0 : -1.0;

  spec.terminal[grid_state(kGridMin)] = true;
  spec.terminal[grid_state(kGridMax)] = true;
  spec.initial_dist[grid_state(0)] = 1.0;

  for (int x = kGridMin; x <= kGridMax; ++x) {
    const State s = grid_state(x);
    for (Action a = 0; a < 2; ++a) {
      if (spec.terminal[s]) {
        spec.at(s, a) = {{s, 1.0, 0.0}};
        continue;
      }
      const int nx = a == 0 ? x - 1 : x + 1;
      double r = 0.0;
      if (nx == kGridMax) r = 1.0;
      if (nx == kGridMin) r = -1.0;
      spec.at(s, a) = {{grid_state(nx), 1.0, sign * r}};
    }
  }
  validate(spec);
  return spec;
}

/// Single-decision MDP: from s0 both actions end the episode. In M1 action 0
/// pays -1 and action 1 pays +1; M2 swaps the signs. State 1 is terminal.
inline MdpSpec build_single_decision(GridVariant variant, double gamma = 0.95) {
  const double sign = variant == GridVariant::M1 ? 1.0 : -1.0;
  MdpSpec spec;
  spec.n_states = 2;
  spec.n_actions = 2;
  spec.outcomes = {{{1, 1.0, -sign}}, {{1, 1.0, sign}}, {{1, 1.0, 0.0}}, {{1, 1.0, 0.0}}};
  spec.terminal = {false, true};
  spec.initial_dist = {1.0, 0.0};
  spec.gamma = gamma;
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// FrozenLake
// ---------------------------------------------------------------------------

enum class Cell : char { Start = 'S', Frozen = 'F', Hole = 'H', Goal = 'G' };

/// Rectangular FrozenLake map, cells stored row-major.
struct MapLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Cell> cells;

  Cell at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }

  bool operator==(const MapLayout&) const = default;
};

/// Cells reachable from Start without crossing a Hole.
inline std::vector<bool> reachable_cells(const MapLayout& layout) {
  std::vector<bool> seen(layout.cells.size(), false);
  const auto start = std::find(layout.cells.begin(), layout.cells.end(), Cell::Start);
  if (start == layout.cells.end()) return seen;
  std::queue<std::size_t> frontier;
  const auto origin = static_cast<std::size_t>(start - layout.cells.begin());
  seen[origin] = true;
  frontier.push(origin);
  while (!frontier.empty()) {
    const std::size_t idx = frontier.front();
    frontier.pop();
    if (layout.cells[idx] == Cell::Goal) continue;
    const std::size_t r = idx / layout.cols;
    const std::size_t c = idx % layout.cols;
    const std::array<std::pair<long, long>, 4> moves{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
    for (auto [dr, dc] : moves) {
      const long nr = static_cast<long>(r) + dr;
      const long nc = static_cast<long>(c) + dc;
      if (nr < 0 || nc < 0 || nr >= static_cast<long>(layout.rows) ||
          nc >= static_cast<long>(layout.cols))
        continue;
      const std::size_t n = static_cast<std::size_t>(nr) * layout.cols + static_cast<std::size_t>(nc);
      if (seen[n] || layout.cells[n] == Cell::Hole) continue;
      seen[n] = true;
      frontier.push(n);
    }
  }
  return seen;
}

/// Throws std::invalid_argument unless the layout has one Start, one Goal,
/// and a hole-free path between them.
inline void validate(const MapLayout& layout) {
  if (layout.rows == 0 || layout.cols == 0 || layout.cells.size() != layout.rows * layout.cols)
    throw std::invalid_argument("MapLayout: cell count does not match rows x cols");
  const auto starts = std::count(layout.cells.begin(), layout.cells.end(), Cell::Start);
  const auto goals = std::count(layout.cells.begin(), layout.cells.end(), Cell::Goal);
  if (starts != 1 || goals != 1)
    throw std::invalid_argument("MapLayout: need exactly one Start and one Goal");
  const auto seen = reachable_cells(layout);
  const auto goal = std::find(layout.cells.begin(), layout.cells.end(), Cell::Goal);
  if (!seen[static_cast<std::size_t>(goal - layout.cells.begin())])
    throw std::invalid_argument("MapLayout: Goal is not reachable from Start");
}

/// Parses the text format: one row per line, characters S/F/H/G.
/// Trailing blank lines and '\r' are ignored.
inline MapLayout parse_layout(std::string_view text) {
  MapLayout layout;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos >= text.size()) break;
      throw std::invalid_argument("map line " + std::to_string(line_no) + ": empty row");
    }
    if (layout.rows == 0) layout.cols = line.size();
    if (line.size() != layout.cols)
      throw std::invalid_argument("map line " + std::to_string(line_no) + ": ragged row");
    for (char ch : line) {
      if (ch != 'S' && ch != 'F' && ch != 'H' && ch != 'G')
        throw std::invalid_argument("map line " + std::to_string(line_no) +
                                    ": invalid character '" + std::string(1, ch) + "'");
      layout.cells.push_back(static_cast<Cell>(ch));
    }
    ++layout.rows;
  }
  validate(layout);
  return layout;
}

inline std::string to_string(const MapLayout& layout) {
  std::string out;
  for (std::size_t r = 0; r < layout.rows; ++r) {
    for (std::size_t c = 0; c < layout.cols; ++c) out.push_back(static_cast<char>(layout.at(r, c)));
    out.push_back('\n');
  }
  return out;
}

/// Actions in FrozenLake order.
enum LakeAction : Action { kLeft = 0, kDown = 1, kRight = 2, kUp = 3 };

/// Builds the MDP for a FrozenLake map. Holes and the Goal are terminal and
/// only transitions entering the Goal pay +1. With `slippery`, the intended
/// move and its two perpendiculars each happen with probability 1/3.
inline MdpSpec build_frozenlake(const MapLayout& layout, std::size_t step_limit, bool slippery,
                                double gamma) {
  validate(layout);
  MdpSpec spec;
  spec.n_states = layout.rows * layout.cols;
  spec.n_actions = 4;
  spec.outcomes.resize(spec.n_states * 4);
  spec.terminal.assign(spec.n_states, false);
  spec.initial_dist.assign(spec.n_states, 0.0);
  spec.gamma = gamma;
  spec.step_limit = step_limit;

  const auto move = [&](State s, Action a) -> State {
    std::size_t r = s / layout.cols;
    std::size_t c = s % layout.cols;
    switch (a) {
      case kLeft: c = c > 0 ? c - 1 : c; break;
      case kDown: r = std::min(r + 1, layout.rows - 1); break;
      case kRight: c = std::min(c + 1, layout.cols - 1); break;
      case kUp: r = r > 0 ? r - 1 : r; break;
    }
    return r * layout.cols + c;
  };

  for (State s = 0; s < spec.n_states; ++s) {
    const Cell cell = layout.cells[s];
    spec.terminal[s] = cell == Cell::Hole || cell == Cell::Goal;
    if (cell == Cell::Start) spec.initial_dist[s] = 1.0;
  }

  for (State s = 0; s < spec.n_states; ++s) {
    for (Action a = 0; a < 4; ++a) {
      auto& row = spec.at(s, a);
      if (spec.terminal[s]) {
        row = {{s, 1.0, 0.0}};
        continue;
      }
      std::vector<Action> dirs{a};
      if (slippery) dirs = {(a + 3) % 4, a, (a + 1) % 4};
      const double p = 1.0 / static_cast<double>(dirs.size());
      for (Action d : dirs) {
        const State next = move(s, d);
        const double r = layout.cells[next] == Cell::Goal ? 1.0 : 0.0;
        auto same = std::find_if(row.begin(), row.end(), [&](const Outcome& o) { return o.next == next; });
        if (same != row.end())
          same->prob += p;
        else
          row.push_back({next, p, r});
      }
      // Merged slippery outcomes can drift by an ulp; renormalise exactly.
      double total = 0.0;
      for (const auto& o : row) total += o.prob;
      for (auto& o : row) o.prob /= total;
    }
  }
  validate(spec);
  return spec;
}

/// Random map with Start at the top-left, Goal at the bottom-right and
/// exactly `n_holes` holes. Rejection-samples until the Goal is reachable.
inline MapLayout generate_random_map(std::size_t rows, std::size_t cols, std::size_t n_holes,
                                     Rng& rng, std::size_t max_attempts = 10000) {
  if (rows * cols < 2 || n_holes + 2 >= rows * cols)
    throw std::invalid_argument("generate_random_map: infeasible parameters (need n_holes < rows*cols - 2)");
  const std::size_t n = rows * cols;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    MapLayout layout{rows, cols, std::vector<Cell>(n, Cell::Frozen)};
    layout.cells.front() = Cell::Start;
    layout.cells.back() = Cell::Goal;
    // Partial Fisher-Yates over the interior cells picks the hole positions.
    std::vector<std::size_t> interior;
    for (std::size_t i = 1; i + 1 < n; ++i) interior.push_back(i);
    for (std::size_t k = 0; k < n_holes; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(interior.size() - k));
      std::swap(interior[k], interior[j]);
      layout.cells[interior[k]] = Cell::Hole;
    }
    if (reachable_cells(layout)[n - 1]) return layout;
  }
  throw std::runtime_error("generate_random_map: no reachable layout after " +
                           std::to_string(max_attempts) + " attempts");
}

/// Built-in 4x4 map with a safe corridor along the top row and right column.
inline MapLayout map_easy() {
  return parse_layout(
      "SFFF\n"
      "FHFF\n"
      "FFHF\n"
      "HFFG\n");
}

/// Built-in 4x4 map whose only safe route detours down the left column;
/// heading right from Start runs into holes.
inline MapLayout map_hard() {
  return parse_layout(
      "SFHF\n"
      "FHFH\n"
      "FFFH\n"
      "HHFG\n");
}

// ---------------------------------------------------------------------------
// Episode driver
// ---------------------------------------------------------------------------

/// Transition produced by EnvInstance::step.
struct StepResult {
  State next = 0;
  double reward = 0.0;
  bool done = false;
};

/// Episodes without an explicit step limit are cut off here.
inline constexpr std::size_t kSafetyStepCap = 1000;

/// A live episode over an immutable MdpSpec. Owns its random stream.
class EnvInstance {
 public:
  EnvInstance(const MdpSpec& spec, Rng rng) : spec_(&spec), rng_(rng) {}

  State reset() {
    state_ = sample(spec_->initial_dist);
    steps_ = 0;
    done_ = false;
    started_ = true;
    return state_;
  }

  StepResult step(Action action) {
    if (!started_ || done_) throw std::logic_error("EnvInstance::step called on a finished episode");
    if (action >= spec_->n_actions) throw std::out_of_range("EnvInstance::step: action out of range");
    const auto& row = spec_->at(state_, action);
    const double u = rng_.uniform();
    double acc = 0.0;
    const Outcome* picked = &row.back();
    for (const auto& o : row) {
      acc += o.prob;
      if (u < acc) {
        picked = &o;
        break;
      }
    }
    state_ = picked->next;
    ++steps_;
    done_ = spec_->terminal[state_] || steps_ >= step_cap();
    return {state_, picked->reward, done_};
  }

  const MdpSpec& spec() const { return *spec_; }
  State state() const { return state_; }
  std::size_t steps_in_episode() const { return steps_; }
  bool episode_active() const { return started_ && !done_; }
  std::size_t step_cap() const { return spec_->step_limit.value_or(kSafetyStepCap); }

  bool operator==(const EnvInstance& other) const {
    return spec_ == other.spec_ && rng_ == other.rng_ && state_ == other.state_ &&
           steps_ == other.steps_ && done_ == other.done_ && started_ == other.started_;
  }

 private:
  State sample(const std::vector<double>& dist) {
    const double u = rng_.uniform();
    double acc = 0.0;
    State last = 0;
    for (State s = 0; s < dist.size(); ++s) {
      if (dist[s] <= 0.0) continue;
      acc += dist[s];
      last = s;
      if (u < acc) return s;
    }
    return last;
  }

  const MdpSpec* spec_;
  Rng rng_;
  State state_ = 0;
  std::size_t steps_ = 0;
  bool done_ = false;
  bool started_ = false;
};

}  // namespace fedrl
