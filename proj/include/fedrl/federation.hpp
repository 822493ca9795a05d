#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedrl/agent.hpp"
#include "fedrl/rng.hpp"

namespace fedrl {

/// Subset-selection rule applied by the server each round.
enum class SchemeKind { SelfOnly, All, Peers, Sampling, Screen, Caesar };

inline constexpr SchemeKind kAllSchemes[] = {SchemeKind::SelfOnly, SchemeKind::All,
                                             SchemeKind::Peers,    SchemeKind::Sampling,
                                             SchemeKind::Screen,   SchemeKind::Caesar};

inline std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::SelfOnly: return "self";
    case SchemeKind::All: return "all";
    case SchemeKind::Peers: return "peers";
    case SchemeKind::Sampling: return "sampling";
    case SchemeKind::Screen: return "screen";
    case SchemeKind::Caesar: return "caesar";
  }
  return "?";
}

inline std::optional<SchemeKind> parse_scheme(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (SchemeKind k : kAllSchemes)
    if (lower == to_string(k)) return k;
  if (lower == "selfonly") return SchemeKind::SelfOnly;
  return std::nullopt;
}

/// Group id of each agent (the assignment f : [N] -> [K]).
using Assignment = std::vector<std::size_t>;

/// Server-side N x N peer-selection probabilities. The diagonal is pinned
/// to 1 and the matrix stays symmetric.
class PMatrix {
 public:
  PMatrix() = default;
  PMatrix(std::size_t n, double p0) : n_(n), probs_(n * n, p0) {
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw std::invalid_argument("PMatrix: p0 must lie in [0, 1]");
    for (std::size_t i = 0; i < n; ++i) probs_[i * n + i] = 1.0;
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return probs_[i * n_ + j]; }

  /// Sets p_ij and p_ji together. Diagonal writes are ignored.
  void set_pair(std::size_t i, std::size_t j, double p) {
    if (i == j) return;
    p = std::clamp(p, 0.0, 1.0);
    probs_[i * n_ + j] = p;
    probs_[j * n_ + i] = p;
  }

  std::span<const double> values() const { return probs_; }

  bool operator==(const PMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> probs_;
};

/// Server knobs: round length H, blending weight beta, p-matrix prior p0,
/// step delta, convergence threshold xi, evaluation rollouts per round.
struct FederationConfig {
  std::size_t h = 100;
  double beta = 0.5;
  double p0 = 0.0;
  double delta = 0.1;
  double xi = 0.0;
  std::size_t eval_episodes = 5;

  void validate() const {
    if (h == 0) throw std::invalid_argument("h must be >= 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw std::invalid_argument("p0 must lie in [0, 1]");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
    if (!(xi >= 0.0)) throw std::invalid_argument("xi must be >= 0");
    if (eval_episodes == 0) throw std::invalid_argument("eval_episodes must be >= 1");
  }
};

/// Mean absolute entrywise difference of two Q-tables.
inline double dissimilarity(const QTable& q, const QTable& q2) {
  if (!q.same_shape(q2)) throw std::invalid_argument("dissimilarity: Q-table shape mismatch");
  double sum = 0.0;
  const auto a = q.values();
  const auto b = q2.values();
  for (std::size_t k = 0; k < a.size(); ++k) sum += std::abs(a[k] - b[k]);
  return sum / static_cast<double>(a.size());
}

/// Raises p_ij by delta for every pair whose dissimilarity dropped by more
/// than xi since the previous snapshot, lowers it by delta otherwise.
inline void update_p_matrix(PMatrix& p, double delta, double xi, std::span<const QTable> q_old,
                            std::span<const QTable> q_now) {
  const std::size_t n = p.size();
  if (q_old.size() != n || q_now.size() != n)
    throw std::invalid_argument("update_p_matrix: table lists must have one entry per agent");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double before = dissimilarity(q_old[i], q_old[j]);
      const double after = dissimilarity(q_now[i], q_now[j]);
      if (before - after > xi)
        p.set_pair(i, j, std::min(p(i, j) + delta, 1.0));
      else
        p.set_pair(i, j, std::max(p(i, j) - delta, 0.0));
    }
  }
}

/// Agents whose tables agent `i` averages this round, in increasing order.
///
/// Sampling and Caesar draw one uniform per candidate j (including i), so the
/// number of draws is independent of the probabilities.
inline std::vector<std::size_t> select_subset(SchemeKind scheme, std::size_t i, const PMatrix& p,
                                              std::span<const double> g, const Assignment* f,
                                              Rng& rng) {
  const std::size_t n = p.size();
  if (i >= n) throw std::out_of_range("select_subset: agent index out of range");
  const bool needs_g = scheme == SchemeKind::Screen || scheme == SchemeKind::Caesar;
  if (needs_g && g.size() != n)
    throw std::invalid_argument("select_subset: Screen/Caesar need a performance score per agent");
  if (scheme == SchemeKind::Peers && (f == nullptr || f->size() != n))
    throw std::invalid_argument("select_subset: Peers needs the agent assignment f");

  std::vector<std::size_t> subset;
  switch (scheme) {
    case SchemeKind::SelfOnly:
      subset.push_back(i);
      break;
    case SchemeKind::All:
      for (std::size_t j = 0; j < n; ++j) subset.push_back(j);
      break;
    case SchemeKind::Peers:
      for (std::size_t j = 0; j < n; ++j)
        if ((*f)[j] == (*f)[i]) subset.push_back(j);
      break;
    case SchemeKind::Screen:
      for (std::size_t j = 0; j < n; ++j)
        if (g[j] > g[i]) subset.push_back(j);
      break;
    case SchemeKind::Sampling:
    case SchemeKind::Caesar:
      for (std::size_t j = 0; j < n; ++j) {
        const bool drawn = rng.uniform() < p(i, j);
        if (!drawn) continue;
        if (scheme == SchemeKind::Caesar && !(g[j] > g[i])) continue;
        subset.push_back(j);
      }
      break;
  }
  return subset;
}

/// Entrywise mean of the selected tables; nullopt for an empty subset.
inline std::optional<QTable> aggregate(std::span<const QTable> qs, std::span<const std::size_t> subset) {
  if (subset.empty()) return std::nullopt;
  const QTable& first = qs[subset.front()];
  QTable mean(first.n_states(), first.n_actions());
  auto out = mean.values();
  for (std::size_t j : subset) {
    if (j >= qs.size()) throw std::out_of_range("aggregate: subset member out of range");
    if (!qs[j].same_shape(first)) throw std::invalid_argument("aggregate: Q-table shape mismatch");
    const auto in = qs[j].values();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += in[k];
  }
  const double count = static_cast<double>(subset.size());
  for (double& v : out) v /= count;
  return mean;
}

/// q_i <- beta * q_i + (1 - beta) * q_bar.
inline void federated_update(QTable& q_i, const QTable& q_bar, double beta) {
  if (!q_i.same_shape(q_bar)) throw std::invalid_argument("federated_update: Q-table shape mismatch");
  auto dst = q_i.values();
  const auto src = q_bar.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = beta * dst[k] + (1.0 - beta) * src[k];
}

/// Per-agent tables captured at the previous round boundary.
struct RoundSnapshot {
  std::vector<QTable> q_old;

  static RoundSnapshot capture(std::span<const AgentState> agents) {
    RoundSnapshot snap;
    snap.q_old.reserve(agents.size());
    for (const auto& a : agents) snap.q_old.push_back(a.q);
    return snap;
  }
};

/// What the server saw and decided in one round.
struct RoundTelemetry {
  std::vector<double> g;             ///< discounted local performance, pre-aggregation
  std::vector<double> g_undiscounted;
  PMatrix p_before;                  ///< p-matrix entering the round
  std::vector<std::vector<std::size_t>> subsets;
};

/// Executes one federated round over all agents.
///
/// Order: evaluate g, update p from (snapshot, current tables), then for each
/// agent select/aggregate/blend using a frozen copy of the pre-round tables,
/// and finally refresh the snapshot. `order` permutes the agent loop in the
/// blending step; it exists so callers can check order independence.
inline RoundTelemetry federated_round(std::span<AgentState> agents, PMatrix& p, RoundSnapshot& snapshot,
                                      SchemeKind scheme, const FederationConfig& cfg, const Assignment* f,
                                      Rng& rng, std::span<const std::size_t> order = {}) {
  const std::size_t n = agents.size();
  if (p.size() != n || snapshot.q_old.size() != n)
    throw std::invalid_argument("federated_round: p-matrix and snapshot must cover every agent");

  RoundTelemetry tel;
  tel.g.resize(n);
  tel.g_undiscounted.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Evaluation e = eval_local_performance(agents[k], cfg.eval_episodes, agents[k].env.spec().gamma);
    tel.g[k] = e.discounted;
    tel.g_undiscounted[k] = e.undiscounted;
  }
  tel.p_before = p;

  std::vector<QTable> frozen;
  frozen.reserve(n);
  for (const auto& a : agents) frozen.push_back(a.q);

  update_p_matrix(p, cfg.delta, cfg.xi, snapshot.q_old, frozen);

  // Subsets are drawn in agent-index order so the server stream does not
  // depend on the blending order.
  tel.subsets.resize(n);
  for (std::size_t i = 0; i < n; ++i) tel.subsets[i] = select_subset(scheme, i, p, tel.g, f, rng);

  const auto blend = [&](std::size_t i) {
    if (auto q_bar = aggregate(frozen, tel.subsets[i])) federated_update(agents[i].q, *q_bar, cfg.beta);
  };
  if (order.empty()) {
    for (std::size_t i = 0; i < n; ++i) blend(i);
  } else {
    for (std::size_t i : order) blend(i);
  }

  snapshot = RoundSnapshot::capture(agents);
  return tel;
}

}  // namespace fedrl
