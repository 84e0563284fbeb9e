#pragma once

// Tabular patient simulator: next-state sampling, trigger progression,
// early-stop / goal termination and the round cap.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>

#include "crl/core_mdp.hpp"
#include "crl/errors.hpp"
#include "crl/rng.hpp"

namespace crl {

using StateDistribution = std::array<double, kNumStates>;

// probs[s][a][s'] = P(s' | s, a), indices per encode_state / Action codes.
struct TransitionModel {
  std::array<std::array<StateDistribution, kNumActions>, kNumStates> probs{};

  const StateDistribution& row(const PatientState& s, Action a) const { return probs[encode_state(s)][code(a)]; }

  // Throws ConfigError unless every row is a distribution within 1e-9.
  void validate() const {
    for (int s = 0; s < kNumStates; ++s) {
      for (int a = 0; a < kNumActions; ++a) {
        double total = 0.0;
        for (double p : probs[s][a]) {
          if (!std::isfinite(p) || p < 0.0)
            throw ConfigError("transition row (" + std::to_string(s) + "," + std::to_string(a) + ") has a negative or non-finite entry");
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-9)
          throw ConfigError("transition row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " + std::to_string(total));
      }
    }
  }

  friend bool operator==(const TransitionModel&, const TransitionModel&) = default;
};

inline void to_json(nlohmann::json& j, const TransitionModel& m) { j = nlohmann::json{{"probs", m.probs}}; }

inline void from_json(const nlohmann::json& j, TransitionModel& m) {
  TransitionModel out;
  try {
    const auto& p = j.at("probs");
    if (!p.is_array() || p.size() != kNumStates) throw ConfigError("probs must have 18 state rows");
    for (int s = 0; s < kNumStates; ++s) {
      if (!p[s].is_array() || p[s].size() != kNumActions) throw ConfigError("probs[" + std::to_string(s) + "] must have 7 action rows");
      for (int a = 0; a < kNumActions; ++a) {
        const auto& row = p[s][a];
        if (!row.is_array() || row.size() != kNumStates)
          throw ConfigError("probs[" + std::to_string(s) + "][" + std::to_string(a) + "] must have 18 entries");
        for (int n = 0; n < kNumStates; ++n) out.probs[s][a][n] = row[n].get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("transition model: ") + e.what());
  }
  out.validate();
  m = out;
}

// Inverse-CDF draw over the fixed state ordering.
inline PatientState sample_next_state(const TransitionModel& model, const PatientState& s, Action a, Rng& rng) {
  const StateDistribution& row = model.row(s, a);
  const double u = rng.uniform();
  double cum = 0.0;
  int last_positive = 0;
  for (int n = 0; n < kNumStates; ++n) {
    if (row[n] <= 0.0) continue;
    cum += row[n];
    last_positive = n;
    if (u < cum) return decode_state(n);
  }
  return decode_state(last_positive);
}

// --- Default generator -----------------------------------------------------

namespace detail {

using Tri = std::array<double, 3>;
using Bi = std::array<double, 2>;

// Next-emotion distribution over (Neg, Neu, Pos).
inline Tri emotion_factor(const PatientState& s, Action a) {
  const bool confused = s.c == Confusion::Yes;
  const bool engaged = s.rp == ResponseRelevance::RR && !confused;
  if (s.e == Emotion::Neg) {
    switch (a) {
      case Action::Comfort: return {0.08, 0.82, 0.10};
      case Action::EasyPrompt:
        if (!confused) return {0.35, 0.60, 0.05};
        break;
      case Action::GiveChoice: return {0.30, 0.65, 0.05};
      case Action::Explain:
        if (confused) return {0.20, 0.75, 0.05};
        break;
      case Action::Repeat:
        if (!confused) return {0.75, 0.20, 0.05};
        break;
      case Action::DifficultPrompt: return {0.75, 0.20, 0.05};
      default: break;
    }
    return engaged ? Tri{0.70, 0.28, 0.02} : Tri{0.60, 0.38, 0.02};
  }
  const bool pos = s.e == Emotion::Pos;
  if (a == Action::GiveChoice) return pos ? Tri{0.05, 0.55, 0.40} : Tri{0.05, 0.90, 0.05};
  if (confused) {
    if (a == Action::DifficultPrompt) return {0.30, 0.50, 0.20};
    return pos ? Tri{0.10, 0.35, 0.55} : Tri{0.15, 0.80, 0.05};
  }
  if (engaged) {
    // Sustained recall is tiring.
    if (a == Action::Comfort) return pos ? Tri{0.05, 0.45, 0.50} : Tri{0.05, 0.90, 0.05};
    return pos ? Tri{0.15, 0.35, 0.50} : Tri{0.35, 0.60, 0.05};
  }
  switch (a) {
    case Action::EasyPrompt: return pos ? Tri{0.01, 0.19, 0.80} : Tri{0.02, 0.96, 0.02};
    case Action::Explain: return pos ? Tri{0.01, 0.29, 0.70} : Tri{0.01, 0.29, 0.70};
    case Action::ModeratePrompt: return pos ? Tri{0.01, 0.14, 0.85} : Tri{0.01, 0.98, 0.01};
    case Action::DifficultPrompt: return pos ? Tri{0.10, 0.60, 0.30} : Tri{0.10, 0.89, 0.01};
    case Action::Repeat: return pos ? Tri{0.25, 0.45, 0.30} : Tri{0.35, 0.64, 0.01};
    default: return pos ? Tri{0.01, 0.49, 0.50} : Tri{0.02, 0.96, 0.02};
  }
}

// Next-confusion distribution over (No, Yes).
inline Bi confusion_factor(const PatientState& s, Action a) {
  const bool confused = s.c == Confusion::Yes;
  if (!confused && s.e == Emotion::Pos && code(a) <= code(Action::ModeratePrompt)) return {0.97, 0.03};
  switch (a) {
    case Action::Explain: return confused ? Bi{0.85, 0.15} : Bi{0.90, 0.10};
    case Action::Repeat: return confused ? Bi{0.55, 0.45} : Bi{0.80, 0.20};
    case Action::ModeratePrompt: return confused ? Bi{0.20, 0.80} : Bi{0.90, 0.10};
    case Action::DifficultPrompt: return confused ? Bi{0.10, 0.90} : Bi{0.80, 0.20};
    case Action::GiveChoice: return {0.80, 0.20};
    case Action::EasyPrompt: return confused ? Bi{0.50, 0.50} : Bi{0.90, 0.10};
    default: return confused ? Bi{0.30, 0.70} : Bi{0.90, 0.10};
  }
}

// Next-response-relevance distribution over (NR, IR, RR).
inline Tri relevance_factor(const PatientState& s, Action a) {
  const bool calm = s.c == Confusion::No && s.e != Emotion::Neg;
  if (!calm) {
    if (a == Action::Explain && s.c == Confusion::Yes) return {0.45, 0.45, 0.10};
    if (a == Action::Comfort && s.e == Emotion::Neg) return {0.45, 0.45, 0.10};
    return {0.60, 0.32, 0.08};
  }
  if (s.rp == ResponseRelevance::RR) {
    switch (a) {
      case Action::ModeratePrompt: return {0.05, 0.78, 0.17};
      case Action::DifficultPrompt: return {0.03, 0.12, 0.85};
      case Action::Comfort: return {0.55, 0.35, 0.10};
      case Action::Repeat: return {0.40, 0.45, 0.15};
      case Action::Explain: return {0.25, 0.60, 0.15};
      default: return {0.25, 0.63, 0.12};
    }
  }
  if (s.e == Emotion::Pos) {
    switch (a) {
      case Action::ModeratePrompt: return {0.02, 0.90, 0.08};
      case Action::DifficultPrompt: return {0.05, 0.35, 0.60};
      case Action::Comfort: return {0.60, 0.35, 0.05};
      case Action::Repeat: return {0.45, 0.45, 0.10};
      case Action::Explain: return {0.30, 0.60, 0.10};
      default: return {0.25, 0.69, 0.06};
    }
  }
  switch (a) {
    case Action::ModeratePrompt: return {0.05, 0.87, 0.08};
    case Action::DifficultPrompt: return {0.40, 0.40, 0.20};
    case Action::Comfort: return {0.60, 0.35, 0.05};
    case Action::Repeat: return {0.45, 0.45, 0.10};
    case Action::Explain: return {0.30, 0.60, 0.10};
    default: return {0.30, 0.64, 0.06};
  }
}

}  // namespace detail

// Calibrated stand-in for an empirical transition table. Each structured row
// is a product of per-dimension factors, perturbed by up to +/-5% per entry
// (deterministic in `seed`), and mixed with the uniform row:
//   P = (1 - strength) / 18 + strength * P_structured.
// strength = 0 yields the uniform model.
inline TransitionModel default_transition_model(double strength = 0.95, std::uint64_t seed = 0) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw DomainError("strength must lie in [0, 1]");
  TransitionModel m;
  Rng rng(mix_seed(seed, 0x7a11));
  for (int si = 0; si < kNumStates; ++si) {
    const PatientState s = decode_state(si);
    for (int ai = 0; ai < kNumActions; ++ai) {
      const Action a = static_cast<Action>(ai);
      const auto rp = detail::relevance_factor(s, a);
      const auto em = detail::emotion_factor(s, a);
      const auto cf = detail::confusion_factor(s, a);
      StateDistribution structured{};
      double total = 0.0;
      for (int n = 0; n < kNumStates; ++n) {
        const PatientState t = decode_state(n);
        const double jitter = 1.0 + 0.05 * (2.0 * rng.uniform() - 1.0);
        structured[n] = rp[code(t.rp)] * em[code(t.e) + 1] * cf[code(t.c)] * jitter;
        total += structured[n];
      }
      auto& row = m.probs[si][ai];
      for (int n = 0; n < kNumStates; ++n)
        row[n] = (1.0 - strength) / kNumStates + strength * structured[n] / total;
      // Put the rounding residue on the largest entry so the row sums to 1.
      double sum = 0.0;
      int argmax = 0;
      for (int n = 0; n < kNumStates; ++n) {
        sum += row[n];
        if (row[n] > row[argmax]) argmax = n;
      }
      row[argmax] += 1.0 - sum;
    }
  }
  return m;
}

// --- Episodes --------------------------------------------------------------

struct EpisodeConfig {
  int max_rounds = 50;
  int total_triggers = 5;
  int persistence_K = 2;  // streak length that forces GiveChoice
  int earlystop_M = 3;    // consecutive Neg emotions that abort the session
  std::uint64_t seed = 0;

  void validate() const {
    if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    if (total_triggers < 1) throw ConfigError("total_triggers must be >= 1");
    if (persistence_K < 1) throw ConfigError("persistence_K must be >= 1");
    if (earlystop_M < 1) throw ConfigError("earlystop_M must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const EpisodeConfig& c) {
  j = nlohmann::json{{"max_rounds", c.max_rounds},
                     {"total_triggers", c.total_triggers},
                     {"persistence_K", c.persistence_K},
                     {"earlystop_M", c.earlystop_M},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EpisodeConfig& c) {
  EpisodeConfig out;
  try {
    out.max_rounds = j.value("max_rounds", out.max_rounds);
    out.total_triggers = j.value("total_triggers", out.total_triggers);
    out.persistence_K = j.value("persistence_K", out.persistence_K);
    out.earlystop_M = j.value("earlystop_M", out.earlystop_M);
    out.seed = j.value("seed", out.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("episode config: ") + e.what());
  }
  out.validate();
  c = out;
}

enum class DoneReason { None, EarlyStop, AllTriggers, RoundCap };

inline std::string_view label(DoneReason r) {
  switch (r) {
    case DoneReason::None: return "none";
    case DoneReason::EarlyStop: return "early_stop";
    case DoneReason::AllTriggers: return "all_triggers";
    case DoneReason::RoundCap: return "round_cap";
  }
  return "none";
}

struct EpisodeStatus {
  int round = 0;
  int trigger_index = 0;
  int neg_streak = 0;
  int conf_streak = 0;
  bool done = false;
  DoneReason done_reason = DoneReason::None;
};

struct StepResult {
  PatientState next;
  double reward = 0.0;
  bool done = false;
  StepFlags flags;
};

// One simulated session. Holds a non-owning reference to the model, which
// must outlive the environment.
class PatientEnv {
 public:
  PatientEnv(const TransitionModel& model, EpisodeConfig config, RewardParams params = {})
      : model_(&model), config_(config), params_(params), rng_(config.seed) {
    config_.validate();
    params_.validate();
  }

  // Starts a new episode; the RNG stream continues from the previous one.
  std::pair<PatientState, EpisodeStatus> reset() {
    state_ = kInitialState;
    status_ = EpisodeStatus{};
    return {state_, status_};
  }

  // Restarts the RNG stream from `seed` and resets the episode.
  std::pair<PatientState, EpisodeStatus> reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    return reset();
  }

  StepResult step(Action a) {
    if (status_.done) throw StateError("step() called on a finished episode");
    const PatientState next = sample_next_state(*model_, state_, a, rng_);
    return apply(a, next);
  }

  // Advances with an externally chosen next state (used by tests and replays).
  StepResult apply(Action a, const PatientState& next) {
    if (status_.done) throw StateError("step() called on a finished episode");
    StepFlags flags;
    status_.neg_streak = next.e == Emotion::Neg ? status_.neg_streak + 1 : 0;
    status_.conf_streak = next.c == Confusion::Yes ? status_.conf_streak + 1 : 0;
    if (next.rp == ResponseRelevance::RR && status_.trigger_index < config_.total_triggers) {
      flags.new_trigger = true;
      ++status_.trigger_index;
    }
    flags.early_stop = status_.neg_streak >= config_.earlystop_M;
    const bool triggers_done = status_.trigger_index == config_.total_triggers;
    const bool cap = status_.round + 1 == config_.max_rounds;
    flags.goal_reached = !flags.early_stop && (triggers_done || cap);
    ++status_.round;
    if (flags.early_stop) {
      status_.done = true;
      status_.done_reason = DoneReason::EarlyStop;
    } else if (flags.goal_reached) {
      status_.done = true;
      status_.done_reason = triggers_done ? DoneReason::AllTriggers : DoneReason::RoundCap;
    }
    state_ = next;
    return StepResult{next, reward(a, next, flags, params_), status_.done, flags};
  }

  const PatientState& state() const noexcept { return state_; }
  const EpisodeStatus& status() const noexcept { return status_; }
  const EpisodeConfig& config() const noexcept { return config_; }
  const RewardParams& params() const noexcept { return params_; }
  const TransitionModel& model() const noexcept { return *model_; }
  Rng& rng() noexcept { return rng_; }

 private:
  const TransitionModel* model_;
  EpisodeConfig config_;
  RewardParams params_;
  Rng rng_;
  PatientState state_ = kInitialState;
  EpisodeStatus status_{};
};

}  // namespace crl
