#pragma once

// Per-state treatment effects of each action against the EasyPrompt
// baseline, and the action suggestion derived from them.

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include <json.hpp>

#include "crl/core_mdp.hpp"
#include "crl/dataset.hpp"
#include "crl/errors.hpp"

namespace crl {

inline constexpr Action kBaselineAction = Action::EasyPrompt;

struct CateEntry {
  // nullopt when either the (s, a) cell or the (s, a0) cell is empty.
  std::optional<double> avg_effect;
  long count = 0;

  friend bool operator==(const CateEntry&, const CateEntry&) = default;
};

struct CateTable {
  // [state][action]; the baseline column holds 0 wherever a0 was observed.
  std::array<std::array<CateEntry, kNumActions>, kNumStates> entries{};

  const CateEntry& at(const PatientState& s, Action a) const { return entries[encode_state(s)][code(a)]; }
  bool available(const PatientState& s, Action a) const { return at(s, a).avg_effect.has_value(); }

  friend bool operator==(const CateTable&, const CateTable&) = default;
};

// Under a randomized logging policy E[Y | do(A=a), S=s] equals the
// conditional mean, so each effect is a difference of grouped means.
// Sums accumulate in record order.
inline CateTable estimate_cate(const Dataset& data) {
  std::array<std::array<double, kNumActions>, kNumStates> sum{};
  std::array<std::array<long, kNumActions>, kNumStates> n{};
  for (const auto& r : data.records) {
    const int s = encode_state(r.state());
    sum[s][r.a_t] += r.reward;
    ++n[s][r.a_t];
  }
  CateTable table;
  const int base = code(kBaselineAction);
  for (int s = 0; s < kNumStates; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      CateEntry& e = table.entries[s][a];
      e.count = n[s][a];
      if (n[s][a] == 0 || n[s][base] == 0) continue;
      e.avg_effect = a == base ? 0.0 : sum[s][a] / static_cast<double>(n[s][a]) - sum[s][base] / static_cast<double>(n[s][base]);
    }
  }
  return table;
}

struct SuggestionPolicy {
  CateTable cate;
  int min_count = 10;

  SuggestionPolicy() = default;
  explicit SuggestionPolicy(CateTable table, int min_count_ = 10) : cate(std::move(table)), min_count(min_count_) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
  }
};

// Best strictly positive effect among a1..a5 with enough support, else a0.
// GiveChoice is never suggested.
inline Action suggest_action(const SuggestionPolicy& policy, const PatientState& s) {
  Action best = kBaselineAction;
  double best_effect = 0.0;
  for (int a = 1; a < kNumLearnableActions; ++a) {
    const CateEntry& e = policy.cate.entries[encode_state(s)][a];
    if (!e.avg_effect || e.count < policy.min_count) continue;
    if (*e.avg_effect > best_effect) {
      best_effect = *e.avg_effect;
      best = static_cast<Action>(a);
    }
  }
  return best;
}

// Rows keyed by state label, columns by action label.
inline void to_json(nlohmann::json& j, const CateTable& t) {
  nlohmann::json rows = nlohmann::json::object();
  for (int s = 0; s < kNumStates; ++s) {
    nlohmann::json row = nlohmann::json::object();
    for (int a = 0; a < kNumActions; ++a) {
      const CateEntry& e = t.entries[s][a];
      row[std::string(label(static_cast<Action>(a)))] = {
          {"avg_effect", e.avg_effect ? nlohmann::json(*e.avg_effect) : nlohmann::json(nullptr)}, {"count", e.count}};
    }
    rows[state_label(decode_state(s))] = row;
  }
  j = nlohmann::json{{"baseline", std::string(label(kBaselineAction))}, {"states", rows}};
}

inline void from_json(const nlohmann::json& j, CateTable& t) {
  CateTable out;
  try {
    const auto& rows = j.at("states");
    for (int s = 0; s < kNumStates; ++s) {
      const auto& row = rows.at(state_label(decode_state(s)));
      for (int a = 0; a < kNumActions; ++a) {
        const auto& cell = row.at(std::string(label(static_cast<Action>(a))));
        CateEntry& e = out.entries[s][a];
        e.count = cell.at("count").get<long>();
        if (e.count < 0) throw ConfigError("cate: negative count");
        if (!cell.at("avg_effect").is_null()) e.avg_effect = cell.at("avg_effect").get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cate table: ") + e.what());
  }
  t = out;
}

}  // namespace crl
