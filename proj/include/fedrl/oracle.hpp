#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "fedrl/agent.hpp"
#include "fedrl/env.hpp"

namespace fedrl {

/// One Bellman-optimality backup of `q` under `spec`. Terminal rows stay at zero.
inline QTable bellman_backup(const MdpSpec& spec, const QTable& q) {
  QTable out(spec.n_states, spec.n_actions);
  for (State s = 0; s < spec.n_states; ++s) {
    if (spec.terminal[s]) continue;
    for (Action a = 0; a < spec.n_actions; ++a) {
      double v = 0.0;
      for (const auto& o : spec.at(s, a)) {
        double next = 0.0;
        if (!spec.terminal[o.next]) {
          const auto row = q.row(o.next);
          next = *std::max_element(row.begin(), row.end());
        }
        v += o.prob * (o.reward + spec.gamma * next);
      }
      out(s, a) = v;
    }
  }
  return out;
}

/// Max-norm change produced by one more backup; zero at the exact fixed point.
inline double bellman_residual(const MdpSpec& spec, const QTable& q) {
  return max_abs_diff(bellman_backup(spec, q), q);
}

/// Optimal action values Q* by fixed-point iteration (Jacobi sweeps) until
/// the max-norm change drops below `tol`.
inline QTable value_iteration_oracle(const MdpSpec& spec, double tol = 1e-10,
                                     std::size_t max_iterations = 1'000'000) {
  validate(spec);
  QTable q(spec.n_states, spec.n_actions);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    QTable next = bellman_backup(spec, q);
    const double change = max_abs_diff(next, q);
    q = std::move(next);
    if (change < tol) return q;
  }
  throw std::runtime_error("value_iteration_oracle: no convergence within the iteration cap");
}

}  // namespace fedrl
