#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "fedrl/agent.hpp"
#include "fedrl/oracle.hpp"
#include "oracles.hpp"

using namespace fedrl;

namespace {

QTable one_state(std::initializer_list<double> values) {
  QTable q(1, values.size());
  Action a = 0;
  for (double v : values) q(0, a++) = v;
  return q;
}

AgentState make_agent(const MdpSpec& spec, double eps, double alpha, std::uint64_t seed = 1) {
  return AgentState(0, spec, eps, alpha, Rng::named(seed, Stream::Environment, 0), Rng::named(seed, Stream::Policy, 0),
                    Rng::named(seed, Stream::Evaluation, 0));
}

}  // namespace

TEST(GreedyAction, Examples) {
  EXPECT_EQ(greedy_action(one_state({-1.0, 1.0}), 0), 1u);
  EXPECT_EQ(greedy_action(one_state({0.0, 0.0}), 0), 0u);
  EXPECT_EQ(greedy_action(one_state({3.0, 2.0, 5.0, 5.0}), 0), 2u);
}

TEST(GreedyAction, InvariantUnderConstantShift) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    QTable q(1, 4);
    for (double& v : q.values()) v = std::floor(rng.uniform() * 4.0);  // frequent ties
    const double shift = std::ldexp(std::floor(rng.uniform() * 64.0) - 32.0, 0);
    QTable shifted = q;
    for (double& v : shifted.values()) v += shift;
    EXPECT_EQ(greedy_action(q, 0), greedy_action(shifted, 0));
  }
}

TEST(SelectAction, ZeroEpsilonIsGreedy) {
  Rng rng(5);
  const QTable q = one_state({0.1, 0.7, 0.3});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(select_action(q, 0, 0.0, rng), 1u);
}

TEST(SelectAction, FullEpsilonIsUniform) {
  Rng rng(17);
  const QTable q = one_state({0.0, 9.0, 0.0, 0.0});
  std::array<int, 4> counts{};
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) ++counts[select_action(q, 0, 1.0, rng)];
  // Each count ~ Binomial(1e5, 0.25): sd ~ 137; allow 5 sd.
  for (int c : counts) EXPECT_NEAR(c, kDraws / 4, 700);
}

TEST(SelectAction, ReproducibleUnderFixedSeed) {
  const QTable q = one_state({0.2, 0.1, 0.2});
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(select_action(q, 0, 0.3, a), select_action(q, 0, 0.3, b));
}

TEST(SelectAction, RandomTieBreakPicksOnlyMaximalActions) {
  Rng rng(4);
  const QTable q = one_state({1.0, 0.0, 1.0, 1.0});
  std::array<int, 4> counts{};
  for (int i = 0; i < 30000; ++i) ++counts[select_action(q, 0, 0.0, rng, TieBreak::Random)];
  EXPECT_EQ(counts[1], 0);
  for (Action a : {0u, 2u, 3u}) EXPECT_NEAR(counts[a], 10000, 600);
}

TEST(QUpdate, Examples) {
  QTable q(2, 2);
  q(0, 1) = 5.0;
  q_update(q, 0, 1, 2.0, 1, false, 1.0, 0.0);
  EXPECT_EQ(q(0, 1), 2.0);

  QTable r(2, 2);
  r(0, 0) = 3.0;
  r(1, 1) = 7.0;
  const QTable before = r;
  q_update(r, 0, 0, 10.0, 1, false, 0.0, 0.9);
  EXPECT_EQ(r, before);

  QTable s(2, 2);
  s(1, 0) = 2.0;
  s(1, 1) = -1.0;
  q_update(s, 0, 0, 1.0, 1, false, 0.5, 0.9);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.4);
}

TEST(QUpdate, TerminalBootstrapIsZero) {
  QTable q(2, 2);
  q(1, 0) = 100.0;
  q_update(q, 0, 1, 1.0, 1, true, 1.0, 0.9);
  EXPECT_EQ(q(0, 1), 1.0);
}

TEST(QUpdate, TouchesExactlyOneEntry) {
  Rng rng(21);
  QTable q(6, 3);
  for (double& v : q.values()) v = rng.uniform();
  for (int trial = 0; trial < 2000; ++trial) {
    const QTable before = q;
    const State s = static_cast<State>(rng.below(6));
    const Action a = static_cast<Action>(rng.below(3));
    q_update(q, s, a, rng.uniform() + 0.5, static_cast<State>(rng.below(6)), rng.bernoulli(0.2), 0.3, 0.9);
    for (State s2 = 0; s2 < 6; ++s2)
      for (Action a2 = 0; a2 < 3; ++a2) {
        if (s2 != s || a2 != a) {
          ASSERT_EQ(q(s2, a2), before(s2, a2));
        }
      }
  }
}

TEST(LocalUpdate, OneEnvironmentStepPerCall) {
  const MdpSpec spec = build_gridworld(GridVariant::M1, 0.95);
  AgentState agent = make_agent(spec, 0.5, 0.5);
  for (int t = 0; t < 777; ++t) {
    const bool was_active = agent.env.episode_active();
    const std::size_t before = agent.env.steps_in_episode();
    local_update(agent, 0.95);
    ASSERT_EQ(agent.env.steps_in_episode(), was_active ? before + 1 : 1u);
  }
  EXPECT_EQ(agent.total_steps, 777u);
  ASSERT_FALSE(agent.episode_return_log.empty());
  EXPECT_LE(agent.episode_return_log.back().step, 777u);
}

TEST(LocalUpdate, OptimalTableCollectsPlusOneEveryEpisode) {
  const MdpSpec spec = build_gridworld(GridVariant::M1, 0.95);
  AgentState agent = make_agent(spec, 0.0, 0.5);
  agent.q = value_iteration_oracle(spec);
  ASSERT_LT(max_abs_diff(agent.q, reference::gridworld_closed_form(0.95)), 1e-9);
  for (int t = 0; t < 500; ++t) local_update(agent, 0.95);
  ASSERT_EQ(agent.episode_return_log.size(), 100u);
  for (const auto& e : agent.episode_return_log) EXPECT_EQ(e.undiscounted_return, 1.0);
}

TEST(LocalUpdate, ReproducibleEpisodeLog) {
  const MdpSpec spec = build_frozenlake(map_hard(), 100, true, 0.95);
  AgentState a = make_agent(spec, 0.3, 0.1, 77);
  AgentState b = make_agent(spec, 0.3, 0.1, 77);
  for (int t = 0; t < 5000; ++t) {
    local_update(a, 0.95);
    local_update(b, 0.95);
  }
  EXPECT_EQ(a.episode_return_log, b.episode_return_log);
  EXPECT_EQ(a.q, b.q);
}

TEST(AgentState, RejectsOutOfRangeParameters) {
  const MdpSpec spec = build_gridworld(GridVariant::M1, 0.95);
  EXPECT_THROW(make_agent(spec, 1.5, 0.5), std::invalid_argument);
  EXPECT_THROW(make_agent(spec, 0.1, 0.0), std::invalid_argument);
}

TEST(EvalLocalPerformance, OptimalGridWorldAgentScoresGammaToTheFourth) {
  const MdpSpec spec = build_gridworld(GridVariant::M1, 0.95);
  AgentState agent = make_agent(spec, 0.1, 0.5);
  agent.q = reference::gridworld_closed_form(0.95);
  const QTable vi = value_iteration_oracle(spec);
  const double g_star = *std::max_element(vi.row(grid_state(0)).begin(), vi.row(grid_state(0)).end());
  const Evaluation e = eval_local_performance(agent, 5, 0.95);
  EXPECT_NEAR(e.discounted, std::pow(0.95, 4), 1e-15);
  EXPECT_NEAR(e.discounted, g_star, 1e-9);
  EXPECT_NEAR(e.discounted, 0.8145, 1e-4);
  EXPECT_EQ(e.undiscounted, 1.0);
}

TEST(EvalLocalPerformance, WalkingIntoAHoleScoresZero) {
  const MdpSpec spec = build_frozenlake(map_hard(), 100, false, 0.95);
  AgentState agent = make_agent(spec, 0.1, 0.1);
  agent.q(0, kRight) = 1.0;
  agent.q(1, kRight) = 1.0;  // (0,1) -> (0,2) is a hole
  const Evaluation e = eval_local_performance(agent, 5, 0.95);
  EXPECT_EQ(e.discounted, 0.0);
  EXPECT_EQ(e.undiscounted, 0.0);
}

TEST(EvalLocalPerformance, DeterministicEpisodeCountDoesNotMatter) {
  const MdpSpec spec = build_frozenlake(map_easy(), 100, false, 0.95);
  AgentState a = make_agent(spec, 0.1, 0.1);
  a.q = reference::frozenlake_bfs(spec);
  AgentState b = a;
  EXPECT_EQ(eval_local_performance(a, 1, 0.95).discounted, eval_local_performance(b, 10, 0.95).discounted);
}

TEST(EvalLocalPerformance, LeavesTrainingStateUntouched) {
  const MdpSpec spec = build_frozenlake(map_easy(), 100, true, 0.95);
  AgentState agent = make_agent(spec, 0.2, 0.1);
  for (int t = 0; t < 1234; ++t) local_update(agent, 0.95);
  const QTable q_before = agent.q;
  const EnvInstance env_before = agent.env;
  const Rng policy_before = agent.policy_rng;
  for (int i = 0; i < 5; ++i) eval_local_performance(agent, 5, 0.95);
  EXPECT_EQ(agent.q, q_before);
  EXPECT_TRUE(agent.env == env_before);
  EXPECT_EQ(agent.policy_rng, policy_before);
}

TEST(EvalLocalPerformance, RequiresAtLeastOneEpisode) {
  const MdpSpec spec = build_gridworld(GridVariant::M1, 0.95);
  AgentState agent = make_agent(spec, 0.1, 0.5);
  EXPECT_THROW(eval_local_performance(agent, 0, 0.95), std::invalid_argument);
}
