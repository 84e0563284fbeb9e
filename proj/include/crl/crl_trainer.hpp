#pragma once

// Causal structure-aware Q-learning: forced GiveChoice override, mixed
// RL / DAG / random action selection and the epoch-episode training loop.

#include <array>
#include <cmath>
#include <ostream>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crl/agent_q.hpp"
#include "crl/cate_engine.hpp"
#include "crl/core_mdp.hpp"
#include "crl/dataset.hpp"
#include "crl/errors.hpp"
#include "crl/patient_sim.hpp"
#include "crl/rng.hpp"

namespace crl {

enum class Method { RL, DAG, CrlStatic, CrlDynamic };

inline constexpr std::array<Method, 4> kAllMethods{Method::RL, Method::DAG, Method::CrlStatic, Method::CrlDynamic};

inline std::string_view label(Method m) {
  switch (m) {
    case Method::RL: return "rl";
    case Method::DAG: return "dag";
    case Method::CrlStatic: return "crl-static";
    case Method::CrlDynamic: return "crl-dynamic";
  }
  return "rl";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (label(m) == s) return m;
  return std::nullopt;
}

constexpr bool needs_suggestion(Method m) noexcept { return m != Method::RL; }

struct MixedWeights {
  double w_rl = 0.9;
  double w_dag = 0.0;
  double w_explore = 0.1;

  void validate() const {
    if (w_rl < 0 || w_dag < 0 || w_explore < 0) throw DomainError("mixed weights must be non-negative");
    if (std::abs(w_rl + w_dag + w_explore - 1.0) > 1e-12) throw DomainError("mixed weights must sum to 1");
  }
};

// The dynamic schedule moves w_rl linearly from 0.2 (first epoch) to 0.7
// (last epoch); w_dag takes the rest of the 0.9 non-exploration mass.
inline MixedWeights weight_schedule(Method m, int epoch, int total_epochs) {
  if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs) throw DomainError("weight_schedule: epoch out of range");
  switch (m) {
    case Method::RL: return {0.9, 0.0, 0.1};
    case Method::DAG: return {0.0, 0.9, 0.1};
    case Method::CrlStatic: return {0.45, 0.45, 0.1};
    case Method::CrlDynamic: {
      const double t = total_epochs == 1 ? 0.0 : static_cast<double>(epoch) / (total_epochs - 1);
      const double w_rl = 0.2 + 0.5 * t;
      return {w_rl, 0.9 - w_rl, 0.1};
    }
  }
  return {};
}

inline bool forced_give_choice(const EpisodeStatus& status, int K) {
  return status.neg_streak >= K || status.conf_streak >= K;
}

enum class Branch { Rl, Dag, Explore };

struct Selection {
  Action action;
  Branch branch;
};

// coin <= w_rl -> epsilon-greedy; coin <= w_rl + w_dag -> DAG suggestion;
// otherwise uniform over a0..a5. Zero-weight branches are never taken.
inline Selection mixed_select_branch(const MixedWeights& w, const QTable& q, const SuggestionPolicy* suggestion,
                                     const PatientState& s, double epsilon, Rng& rng) {
  const double coin = rng.uniform();
  if (w.w_rl > 0.0 && coin <= w.w_rl) return {epsilon_greedy(q, encode_state(s), epsilon, rng), Branch::Rl};
  if (w.w_dag > 0.0 && coin <= w.w_rl + w.w_dag) {
    if (!suggestion) throw ConfigError("DAG branch selected without a suggestion policy");
    return {suggest_action(*suggestion, s), Branch::Dag};
  }
  return {random_learnable_action(rng), Branch::Explore};
}

inline Action mixed_select(const MixedWeights& w, const QTable& q, const SuggestionPolicy* suggestion,
                           const PatientState& s, double epsilon, Rng& rng) {
  return mixed_select_branch(w, q, suggestion, s, epsilon, rng).action;
}

struct MethodConfig {
  Method method = Method::CrlDynamic;
  int epochs = 1500;
  int episodes_per_epoch = 30;
  TrainHyperparams hyperparams{};

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (episodes_per_epoch < 1) throw ConfigError("episodes_per_epoch must be >= 1");
    hyperparams.validate();
  }
};

// Everything that defines the simulated patient.
struct SimSetup {
  TransitionModel model = default_transition_model();
  EpisodeConfig episode{};
  RewardParams reward{};
};

struct EpisodeSummary {
  double ret = 0.0;
  int length = 0;
  DoneReason reason = DoneReason::None;
};

struct TrainLog {
  // [epoch][episode]
  std::vector<std::vector<EpisodeSummary>> episodes;
  // Q after each epoch's final episode.
  std::vector<QTable> snapshots;
};

// Runs one episode. `choose` maps (state, status) to an action; when
// `learn` is set the Q-table receives one backup per transition.
template <typename Chooser>
EpisodeSummary run_episode(PatientEnv& env, QTable* learn, const TrainHyperparams& hp, Chooser&& choose) {
  env.reset();
  EpisodeSummary out;
  while (!env.status().done) {
    const PatientState s = env.state();
    const Action a = choose(s, env.status());
    const StepResult r = env.step(a);
    if (learn) q_update(*learn, encode_state(s), a, r.reward, encode_state(r.next), r.done, hp);
    out.ret += r.reward;
    ++out.length;
  }
  out.reason = env.status().done_reason;
  return out;
}

struct TrainResult {
  QTable q;
  TrainLog log;
};

inline TrainResult train(const SimSetup& setup, const MethodConfig& cfg, const SuggestionPolicy* suggestion,
                         std::uint64_t seed) {
  cfg.validate();
  setup.model.validate();
  if (needs_suggestion(cfg.method) && !suggestion)
    throw ConfigError("method " + std::string(label(cfg.method)) + " requires a suggestion policy");

  EpisodeConfig ec = setup.episode;
  ec.seed = mix_seed(seed, 1);
  PatientEnv env(setup.model, ec, setup.reward);
  Rng agent_rng(mix_seed(seed, 2));
  const int K = setup.episode.persistence_K;
  const SuggestionPolicy* dag = needs_suggestion(cfg.method) ? suggestion : nullptr;

  TrainResult out;
  out.log.episodes.reserve(cfg.epochs);
  out.log.snapshots.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const MixedWeights w = weight_schedule(cfg.method, epoch, cfg.epochs);
    auto& row = out.log.episodes.emplace_back();
    row.reserve(cfg.episodes_per_epoch);
    for (int ep = 0; ep < cfg.episodes_per_epoch; ++ep) {
      row.push_back(run_episode(env, &out.q, cfg.hyperparams, [&](const PatientState& s, const EpisodeStatus& st) {
        if (forced_give_choice(st, K)) return Action::GiveChoice;
        return mixed_select(w, out.q, dag, s, cfg.hyperparams.epsilon, agent_rng);
      }));
    }
    out.log.snapshots.push_back(out.q);
  }
  return out;
}

inline void write_train_log_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,episode,return,length\n";
  for (std::size_t e = 0; e < log.episodes.size(); ++e)
    for (std::size_t i = 0; i < log.episodes[e].size(); ++i)
      out << e << ',' << i << ',' << format_double(log.episodes[e][i].ret) << ',' << log.episodes[e][i].length << '\n';
}

inline void to_json(nlohmann::json& j, const MethodConfig& c) {
  j = nlohmann::json{{"method", std::string(label(c.method))},
                     {"epochs", c.epochs},
                     {"episodes_per_epoch", c.episodes_per_epoch},
                     {"alpha", c.hyperparams.alpha},
                     {"gamma", c.hyperparams.gamma},
                     {"epsilon", c.hyperparams.epsilon}};
}

inline void from_json(const nlohmann::json& j, MethodConfig& c) {
  MethodConfig out;
  try {
    if (j.contains("method")) {
      const auto m = parse_method(j.at("method").get<std::string>());
      if (!m) throw ConfigError("unknown method: " + j.at("method").get<std::string>());
      out.method = *m;
    }
    out.epochs = j.value("epochs", out.epochs);
    out.episodes_per_epoch = j.value("episodes_per_epoch", out.episodes_per_epoch);
    out.hyperparams.alpha = j.value("alpha", out.hyperparams.alpha);
    out.hyperparams.gamma = j.value("gamma", out.hyperparams.gamma);
    out.hyperparams.epsilon = j.value("epsilon", out.hyperparams.epsilon);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("method config: ") + e.what());
  }
  out.validate();
  c = out;
}

}  // namespace crl
