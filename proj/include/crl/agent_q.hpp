#pragma once

// Tabular Q-learning over the 18x7 state-action table.

#include <array>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>

#include <json.hpp>

#include "crl/core_mdp.hpp"
#include "crl/errors.hpp"
#include "crl/rng.hpp"

namespace crl {

struct QTable {
  std::array<std::array<double, kNumActions>, kNumStates> q{};

  double& operator()(int s, Action a) { return q[s][code(a)]; }
  double operator()(int s, Action a) const { return q[s][code(a)]; }

  double max_value(int s) const {
    double m = q[s][0];
    for (int a = 1; a < kNumActions; ++a) m = std::max(m, q[s][a]);
    return m;
  }

  // FNV-1a over the raw IEEE-754 bytes; used to assert evaluation is read-only.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& row : q) {
      for (double v : row) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
          h ^= (bits >> (8 * i)) & 0xffU;
          h *= 1099511628211ULL;
        }
      }
    }
    return h;
  }

  friend bool operator==(const QTable&, const QTable&) = default;
};

struct TrainHyperparams {
  double alpha = 0.05;
  double gamma = 0.95;
  double epsilon = 0.1;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  }
};

// One-step Q-learning backup; terminal transitions bootstrap with 0.
inline void q_update(QTable& table, int s, Action a, double r, int s_next, bool done, const TrainHyperparams& hp) {
  if (!std::isfinite(r)) throw DomainError("q_update: non-finite reward");
  if (s < 0 || s >= kNumStates || s_next < 0 || s_next >= kNumStates) throw DomainError("q_update: state index out of range");
  const double bootstrap = done ? 0.0 : table.max_value(s_next);
  double& cell = table(s, a);
  cell += hp.alpha * (r + hp.gamma * bootstrap - cell);
}

// Argmax over the learnable actions a0..a5, ties to the lowest index.
inline Action greedy_action(const QTable& table, int s) {
  int best = 0;
  for (int a = 1; a < kNumLearnableActions; ++a) {
    if (table.q[s][a] > table.q[s][best]) best = a;
  }
  return static_cast<Action>(best);
}

inline Action random_learnable_action(Rng& rng) { return static_cast<Action>(rng.uniform_int(kNumLearnableActions)); }

// Never returns GiveChoice.
inline Action epsilon_greedy(const QTable& table, int s, double epsilon, Rng& rng) {
  if (rng.uniform() < epsilon) return random_learnable_action(rng);
  return greedy_action(table, s);
}

inline void to_json(nlohmann::json& j, const QTable& t) { j = nlohmann::json{{"q", t.q}}; }

inline void from_json(const nlohmann::json& j, QTable& t) {
  QTable out;
  try {
    const auto& q = j.at("q");
    if (!q.is_array() || q.size() != kNumStates) throw ConfigError("q must have 18 rows");
    for (int s = 0; s < kNumStates; ++s) {
      if (!q[s].is_array() || q[s].size() != kNumActions) throw ConfigError("q rows must have 7 entries");
      for (int a = 0; a < kNumActions; ++a) {
        out.q[s][a] = q[s][a].get<double>();
        if (!std::isfinite(out.q[s][a])) throw ConfigError("q entries must be finite");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("q-table: ") + e.what());
  }
  t = out;
}

}  // namespace crl
