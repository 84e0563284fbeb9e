#pragma once

// State/action spaces of the reminiscence-therapy MDP and its composite
// per-step reward.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "crl/errors.hpp"

namespace crl {

enum class ResponseRelevance : int { NR = 0, IR = 1, RR = 2 };
enum class Emotion : int { Neg = -1, Neu = 0, Pos = 1 };
enum class Confusion : int { No = 0, Yes = 1 };

enum class Action : int {
  EasyPrompt = 0,
  ModeratePrompt = 1,
  DifficultPrompt = 2,
  Repeat = 3,
  Explain = 4,
  Comfort = 5,
  GiveChoice = 6,
};

inline constexpr int kNumRelevance = 3;
inline constexpr int kNumEmotion = 3;
inline constexpr int kNumConfusion = 2;
inline constexpr int kNumStates = kNumRelevance * kNumEmotion * kNumConfusion;
inline constexpr int kNumActions = 7;
// a0..a5; GiveChoice is only ever emitted by the forced rule.
inline constexpr int kNumLearnableActions = 6;

constexpr int code(ResponseRelevance v) noexcept { return static_cast<int>(v); }
constexpr int code(Emotion v) noexcept { return static_cast<int>(v); }
constexpr int code(Confusion v) noexcept { return static_cast<int>(v); }
constexpr int code(Action v) noexcept { return static_cast<int>(v); }

constexpr Action action_from_index(int i) {
  if (i < 0 || i >= kNumActions) throw DomainError("action index out of range: " + std::to_string(i));
  return static_cast<Action>(i);
}

// Actions outside {ModeratePrompt, DifficultPrompt} share the "other" response term.
constexpr bool is_other_action(Action a) noexcept {
  return a != Action::ModeratePrompt && a != Action::DifficultPrompt;
}

struct PatientState {
  ResponseRelevance rp = ResponseRelevance::NR;
  Emotion e = Emotion::Neu;
  Confusion c = Confusion::No;

  friend constexpr bool operator==(const PatientState&, const PatientState&) = default;
};

inline constexpr PatientState kInitialState{ResponseRelevance::NR, Emotion::Neu, Confusion::No};

// Lexicographic index rp*6 + (e+1)*2 + c; stable across serialized tables.
constexpr int encode_state(const PatientState& s) noexcept {
  return code(s.rp) * 6 + (code(s.e) + 1) * 2 + code(s.c);
}

constexpr PatientState decode_state(int i) {
  if (i < 0 || i >= kNumStates) throw DomainError("state index out of range: " + std::to_string(i));
  return PatientState{static_cast<ResponseRelevance>(i / 6), static_cast<Emotion>((i % 6) / 2 - 1),
                      static_cast<Confusion>(i % 2)};
}

inline std::string_view label(ResponseRelevance v) {
  static constexpr std::array<std::string_view, 3> names{"NR", "IR", "RR"};
  return names[code(v)];
}
inline std::string_view label(Emotion v) {
  static constexpr std::array<std::string_view, 3> names{"Neg", "Neu", "Pos"};
  return names[code(v) + 1];
}
inline std::string_view label(Confusion v) {
  static constexpr std::array<std::string_view, 2> names{"No", "Yes"};
  return names[code(v)];
}
inline std::string_view label(Action a) {
  static constexpr std::array<std::string_view, kNumActions> names{
      "EasyPrompt", "ModeratePrompt", "DifficultPrompt", "Repeat", "Explain", "Comfort", "GiveChoice"};
  return names[code(a)];
}

// e.g. "IR_Neu_Yes"
inline std::string state_label(const PatientState& s) {
  std::string out(label(s.rp));
  out += '_';
  out += label(s.e);
  out += '_';
  out += label(s.c);
  return out;
}

inline std::optional<PatientState> parse_state_label(std::string_view text) {
  for (int i = 0; i < kNumStates; ++i) {
    if (state_label(decode_state(i)) == text) return decode_state(i);
  }
  return std::nullopt;
}

inline std::optional<Action> parse_action_label(std::string_view text) {
  for (int i = 0; i < kNumActions; ++i) {
    if (label(static_cast<Action>(i)) == text) return static_cast<Action>(i);
  }
  return std::nullopt;
}

struct StepFlags {
  bool new_trigger = false;
  bool early_stop = false;
  bool goal_reached = false;
};

struct RewardParams {
  double eta = 0.0;
  double delta = 1.0;  // new-trigger bonus
  double lambda_stop = -200.0;
  double lambda_goal = 15.0;
  // [rp][action]
  std::array<std::array<double, kNumActions>, kNumRelevance> resp_table = default_resp_table();
  // [e + 1]
  std::array<double, kNumEmotion> emotion_table{-3.0, 1.0, 2.0};
  // [c]
  std::array<double, kNumConfusion> conf_table{2.0, -2.5};

  static constexpr std::array<std::array<double, kNumActions>, kNumRelevance> default_resp_table() {
    std::array<std::array<double, kNumActions>, kNumRelevance> t{};
    for (int a = 0; a < kNumActions; ++a) {
      const bool other = is_other_action(static_cast<Action>(a));
      t[0][a] = -2.0;
      t[1][a] = other ? 0.30 : (a == 1 ? 0.75 : 1.75);
      t[2][a] = other ? 0.75 : (a == 1 ? 2.0 : 3.0);
    }
    return t;
  }

  void validate() const {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(eta) || !finite(delta) || !finite(lambda_stop) || !finite(lambda_goal))
      throw ConfigError("reward params must be finite");
    if (!(lambda_stop < 0.0)) throw ConfigError("lambda_stop must be negative");
    if (!(lambda_goal > 0.0)) throw ConfigError("lambda_goal must be positive");
    for (const auto& row : resp_table)
      for (double v : row)
        if (!finite(v)) throw ConfigError("resp_table entries must be finite");
    for (double v : emotion_table)
      if (!finite(v)) throw ConfigError("emotion_table entries must be finite");
    for (double v : conf_table)
      if (!finite(v)) throw ConfigError("conf_table entries must be finite");
  }
};

// Response/emotion/confusion terms are scored on the next state.
inline double base_reward(Action a, const PatientState& next, const RewardParams& p) {
  return p.resp_table[code(next.rp)][code(a)] + p.emotion_table[code(next.e) + 1] +
         p.conf_table[code(next.c)];
}

inline double reward(Action a, const PatientState& next, const StepFlags& flags, const RewardParams& p) {
  double r = base_reward(a, next, p) + p.eta;
  if (flags.new_trigger) r += p.delta;
  if (flags.early_stop) r += p.lambda_stop;
  if (flags.goal_reached) r += p.lambda_goal;
  return r;
}

// Largest |per-step reward| attainable under `p`, all flags included.
inline double max_abs_step_reward(const RewardParams& p) {
  double lo = 1e300, hi = -1e300;
  for (int s = 0; s < kNumStates; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      const double b = base_reward(static_cast<Action>(a), decode_state(s), p) + p.eta;
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
  }
  const double up = std::max(0.0, p.delta) + std::max({0.0, p.lambda_goal, p.lambda_stop});
  const double down = std::min(0.0, p.delta) + std::min({0.0, p.lambda_goal, p.lambda_stop});
  return std::max(std::abs(hi + up), std::abs(lo + down));
}

// --- JSON ------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const RewardParams& p) {
  nlohmann::json resp = nlohmann::json::object();
  for (int rp = 0; rp < kNumRelevance; ++rp) {
    resp[std::string(label(static_cast<ResponseRelevance>(rp)))] = p.resp_table[rp];
  }
  j = nlohmann::json{{"eta", p.eta},
                     {"delta", p.delta},
                     {"lambda_stop", p.lambda_stop},
                     {"lambda_goal", p.lambda_goal},
                     {"resp_table", resp},
                     {"emotion_table", {{"Neg", p.emotion_table[0]}, {"Neu", p.emotion_table[1]}, {"Pos", p.emotion_table[2]}}},
                     {"conf_table", {{"No", p.conf_table[0]}, {"Yes", p.conf_table[1]}}}};
}

inline void from_json(const nlohmann::json& j, RewardParams& p) {
  RewardParams out;
  try {
    out.eta = j.value("eta", out.eta);
    out.delta = j.value("delta", out.delta);
    out.lambda_stop = j.value("lambda_stop", out.lambda_stop);
    out.lambda_goal = j.value("lambda_goal", out.lambda_goal);
    if (j.contains("resp_table")) {
      const auto& resp = j.at("resp_table");
      for (int rp = 0; rp < kNumRelevance; ++rp) {
        const auto& row = resp.at(std::string(label(static_cast<ResponseRelevance>(rp))));
        if (!row.is_array() || row.size() != kNumActions)
          throw ConfigError("resp_table rows must have 7 entries");
        for (int a = 0; a < kNumActions; ++a) out.resp_table[rp][a] = row[a].get<double>();
      }
    }
    if (j.contains("emotion_table")) {
      const auto& t = j.at("emotion_table");
      out.emotion_table = {t.at("Neg").get<double>(), t.at("Neu").get<double>(), t.at("Pos").get<double>()};
    }
    if (j.contains("conf_table")) {
      const auto& t = j.at("conf_table");
      out.conf_table = {t.at("No").get<double>(), t.at("Yes").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("reward params: ") + e.what());
  }
  out.validate();
  p = out;
}

}  // namespace crl
