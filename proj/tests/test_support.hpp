#pragma once

// Shared fixtures: hand-built transition models and an exact oracle for the
// conditional reward means a uniformly random logging policy induces.

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "crl/causal_discovery.hpp"
#include "crl/core_mdp.hpp"
#include "crl/dataset.hpp"
#include "crl/patient_sim.hpp"
#include "crl/rng.hpp"

namespace crl::fixture {

// Every (s, a) row puts all mass on next(s, a).
inline TransitionModel point_mass_model(const std::function<int(int, int)>& next) {
  TransitionModel m;
  for (int s = 0; s < kNumStates; ++s)
    for (int a = 0; a < kNumActions; ++a) m.probs[s][a][next(s, a)] = 1.0;
  return m;
}

inline TransitionModel uniform_model() {
  TransitionModel m;
  for (auto& rows : m.probs)
    for (auto& row : rows) row.fill(1.0 / kNumStates);
  return m;
}

// 99% of each row on one pseudo-random successor, 1% spread evenly over
// the remaining allowed successors. Rows from a Neg state never lead back to
// Neg, so a three-Neg streak (early stop) is impossible.
inline TransitionModel low_noise_model(std::uint64_t seed) {
  TransitionModel m;
  Rng rng(seed);
  for (int s = 0; s < kNumStates; ++s) {
    const bool from_neg = decode_state(s).e == Emotion::Neg;
    std::vector<int> allowed;
    for (int n = 0; n < kNumStates; ++n)
      if (!from_neg || decode_state(n).e != Emotion::Neg) allowed.push_back(n);
    for (int a = 0; a < kNumActions; ++a) {
      const int main = allowed[rng.uniform_int(static_cast<int>(allowed.size()))];
      auto& row = m.probs[s][a];
      const double rest = 0.01 / static_cast<double>(allowed.size() - 1);
      for (int n : allowed) row[n] = n == main ? 0.99 : rest;
    }
  }
  return m;
}

struct ConditionalMeans {
  // E[r | s_t = s, a_t = a] and the expected number of visits to s.
  std::array<std::array<double, kNumActions>, kNumStates> mean{};
  std::array<double, kNumStates> visits{};
};

// Propagates the exact occupancy of the augmented chain
// (round, triggers used, Neg streak, state) under uniform a0..a5 logging and
// averages the one-step expected reward, flags included, over it.
inline ConditionalMeans logging_reward_oracle(const TransitionModel& model, const EpisodeConfig& cfg,
                                              const RewardParams& p) {
  using Key = std::tuple<int, int, int>;  // triggers used, neg streak, state
  std::map<Key, double> occ{{{0, 0, encode_state(kInitialState)}, 1.0}};
  std::array<std::array<double, kNumActions>, kNumStates> num{};
  ConditionalMeans out;
  const double pa = 1.0 / kNumLearnableActions;

  for (int round = 0; round < cfg.max_rounds && !occ.empty(); ++round) {
    std::map<Key, double> next_occ;
    for (const auto& [key, w] : occ) {
      const auto [trig, streak, s] = key;
      out.visits[s] += w;
      for (int a = 0; a < kNumLearnableActions; ++a) {
        for (int n = 0; n < kNumStates; ++n) {
          const double pn = model.probs[s][a][n];
          if (pn == 0.0) continue;
          const PatientState ns = decode_state(n);
          const int ns_streak = ns.e == Emotion::Neg ? streak + 1 : 0;
          StepFlags f;
          int ntrig = trig;
          if (ns.rp == ResponseRelevance::RR && trig < cfg.total_triggers) {
            f.new_trigger = true;
            ++ntrig;
          }
          f.early_stop = ns_streak >= cfg.earlystop_M;
          f.goal_reached = !f.early_stop && (ntrig == cfg.total_triggers || round + 1 == cfg.max_rounds);
          num[s][a] += w * pa * pn * reward(static_cast<Action>(a), ns, f, p);
          if (!f.early_stop && !f.goal_reached) next_occ[{ntrig, ns_streak, n}] += w * pa * pn;
        }
      }
    }
    occ = std::move(next_occ);
  }
  for (int s = 0; s < kNumStates; ++s)
    for (int a = 0; a < kNumLearnableActions; ++a)
      out.mean[s][a] = out.visits[s] > 0 ? num[s][a] / (out.visits[s] * pa) : 0.0;
  return out;
}

// Planted tiered graph over the eight discovery variables:
//   RP_t -> E_t, RP_t -> RP_t1, A_t -> RP_t1, E_t -> E_t1, A_t -> E_t1,
//   C_t -> C_t1, RP_t1 -> Reward, E_t1 -> Reward.
// A child copies one parent (chosen uniformly, mapped by level mod its
// cardinality) with probability 0.8 and is uniform otherwise, so stepping
// any parent to an adjacent level shifts the child's distribution by at
// least 0.8 / 2 = 0.4 in total variation.
struct PlantedGraph {
  std::set<std::pair<CausalVar, CausalVar>> skeleton;  // (first < second)
};

inline PlantedGraph planted_graph() {
  using V = CausalVar;
  PlantedGraph g;
  for (auto [a, b] : std::vector<std::pair<V, V>>{{V::RP_t, V::E_t},   {V::RP_t, V::RP_t1}, {V::A_t, V::RP_t1},
                                                    {V::E_t, V::E_t1},   {V::A_t, V::E_t1},   {V::C_t, V::C_t1},
                                                    {V::RP_t1, V::Reward}, {V::E_t1, V::Reward}})
    g.skeleton.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  return g;
}

inline Dataset sample_planted(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto child = [&](int card, std::initializer_list<int> parents) {
    if (rng.uniform() >= 0.8) return rng.uniform_int(card);
    const int pick = rng.uniform_int(static_cast<int>(parents.size()));
    return *(parents.begin() + pick) % card;
  };
  Dataset d;
  d.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TrajectoryRecord r;
    const int rp = rng.uniform_int(3);
    const int e = child(3, {rp});
    const int c = rng.uniform_int(2);
    const int a = rng.uniform_int(6);
    const int rp1 = child(3, {rp, a});
    const int e1 = child(3, {e, a});
    const int c1 = child(2, {c});
    const int rew = child(5, {rp1, e1 + 3});
    r.rp_t = rp;
    r.e_t = e - 1;
    r.c_t = c;
    r.a_t = a;
    r.rp_t1 = rp1;
    r.e_t1 = e1 - 1;
    r.c_t1 = c1;
    r.a_t1 = rng.uniform_int(6);
    r.reward = rew;
    d.records.push_back(r);
  }
  d.episode_starts = {0, d.records.size()};
  return d;
}

struct SkeletonScore {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

inline SkeletonScore score_skeleton(const std::set<std::pair<CausalVar, CausalVar>>& found,
                                    const std::set<std::pair<CausalVar, CausalVar>>& truth) {
  std::size_t tp = 0;
  for (const auto& e : found) tp += truth.count(e);
  SkeletonScore s;
  s.precision = found.empty() ? 1.0 : static_cast<double>(tp) / found.size();
  s.recall = truth.empty() ? 1.0 : static_cast<double>(tp) / truth.size();
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace crl::fixture
