#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fedrl/env.hpp"
#include "fedrl/rng.hpp"

namespace fedrl {

/// Dense action-value table indexed by (state, action).
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double init = 0.0)
      : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, init) {}

  double& operator()(State s, Action a) { return values_[s * n_actions_ + a]; }
  double operator()(State s, Action a) const { return values_[s * n_actions_ + a]; }

  std::span<const double> row(State s) const {
    return std::span<const double>(values_).subspan(s * n_actions_, n_actions_);
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const QTable& other) const {
    return n_states_ == other.n_states_ && n_actions_ == other.n_actions_;
  }

  bool operator==(const QTable&) const = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> values_;
};

/// Largest absolute entrywise difference between two same-shaped tables.
inline double max_abs_diff(const QTable& a, const QTable& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  return m;
}

/// argmax_a q(s, a); ties go to the lowest action index.
inline Action greedy_action(const QTable& q, State s) {
  const auto row = q.row(s);
  return static_cast<Action>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// How the exploit branch of the behaviour policy resolves equal Q-values.
enum class TieBreak { Lowest, Random };

/// Uniformly random choice among the maximal actions of q(s, ·). Draws
/// from `rng` only when there is more than one.
inline Action random_greedy_action(const QTable& q, State s, Rng& rng) {
  const auto row = q.row(s);
  const double best = *std::max_element(row.begin(), row.end());
  const auto ties = static_cast<std::size_t>(std::count(row.begin(), row.end(), best));
  if (ties == 1) return greedy_action(q, s);
  std::size_t pick = static_cast<std::size_t>(rng.below(ties));
  for (Action a = 0; a < row.size(); ++a)
    if (row[a] == best && pick-- == 0) return a;
  return greedy_action(q, s);
}

/// Epsilon-greedy behaviour policy.
inline Action select_action(const QTable& q, State s, double epsilon, Rng& rng,
                            TieBreak ties = TieBreak::Lowest) {
  if (rng.uniform() < epsilon) return static_cast<Action>(rng.below(q.n_actions()));
  return ties == TieBreak::Random ? random_greedy_action(q, s, rng) : greedy_action(q, s);
}

/// One-step Q-learning update of entry (s, a). Terminal transitions bootstrap from zero.
inline void q_update(QTable& q, State s, Action a, double reward, State s_next, bool done,
                     double alpha, double gamma) {
  double bootstrap = 0.0;
  if (!done) {
    const auto next = q.row(s_next);
    bootstrap = *std::max_element(next.begin(), next.end());
  }
  q(s, a) = (1.0 - alpha) * q(s, a) + alpha * (reward + gamma * bootstrap);
}

/// Undiscounted return of a finished training episode, tagged with the
/// agent-local step count at which it ended.
struct EpisodeRecord {
  std::size_t step = 0;
  double undiscounted_return = 0.0;

  bool operator==(const EpisodeRecord&) const = default;
};

/// A single learner: its Q-table, its training environment and its private
/// random streams.
struct AgentState {
  std::size_t id = 0;
  QTable q;
  EnvInstance env;
  double epsilon = 0.1;
  double alpha = 0.5;
  TieBreak ties = TieBreak::Lowest;
  Rng policy_rng;
  Rng eval_rng;
  std::size_t total_steps = 0;
  double running_return = 0.0;
  std::vector<EpisodeRecord> episode_return_log;

  AgentState(std::size_t agent_id, const MdpSpec& spec, double eps, double lr, Rng env_rng,
             Rng policy, Rng eval, double q_init = 0.0)
      : id(agent_id),
        q(spec.n_states, spec.n_actions, q_init),
        env(spec, env_rng),
        epsilon(eps),
        alpha(lr),
        policy_rng(policy),
        eval_rng(eval) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("AgentState: epsilon must lie in [0, 1]");
    if (!(lr > 0.0 && lr <= 1.0)) throw std::invalid_argument("AgentState: alpha must lie in (0, 1]");
  }
};

/// One environment interaction followed by one Q-learning update.
inline void local_update(AgentState& agent, double gamma) {
  if (!agent.env.episode_active()) {
    agent.env.reset();
    agent.running_return = 0.0;
  }
  const State s = agent.env.state();
  const Action a = select_action(agent.q, s, agent.epsilon, agent.policy_rng, agent.ties);
  const StepResult r = agent.env.step(a);
  q_update(agent.q, s, a, r.reward, r.next, r.done, agent.alpha, gamma);
  ++agent.total_steps;
  agent.running_return += r.reward;
  if (r.done) agent.episode_return_log.push_back({agent.total_steps, agent.running_return});
}

/// Mean returns of the greedy policy over evaluation rollouts.
struct Evaluation {
  double discounted = 0.0;
  double undiscounted = 0.0;
};

/// Rolls out the greedy policy of `q` for `episodes` episodes on a fresh
/// environment seeded from `rng`.
inline Evaluation evaluate_greedy(const QTable& q, const MdpSpec& spec, std::size_t episodes,
                                  double gamma, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("evaluate_greedy: episodes must be >= 1");
  EnvInstance env(spec, Rng(rng.next_seed()));
  // Deterministic dynamics with a deterministic policy repeat the same episode.
  const std::size_t rollouts = spec.deterministic() ? 1 : episodes;
  Evaluation total;
  for (std::size_t e = 0; e < rollouts; ++e) {
    State s = env.reset();
    double discount = 1.0;
    for (;;) {
      const StepResult r = env.step(greedy_action(q, s));
      total.discounted += discount * r.reward;
      total.undiscounted += r.reward;
      discount *= gamma;
      s = r.next;
      if (r.done) break;
    }
  }
  total.discounted /= static_cast<double>(rollouts);
  total.undiscounted /= static_cast<double>(rollouts);
  return total;
}

/// Local performance g_k: mean discounted return of the agent's greedy
/// policy. Only the agent's evaluation stream advances.
inline Evaluation eval_local_performance(AgentState& agent, std::size_t episodes, double gamma) {
  return evaluate_greedy(agent.q, agent.env.spec(), episodes, gamma, agent.eval_rng);
}

}  // namespace fedrl
