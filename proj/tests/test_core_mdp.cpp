#include <gtest/gtest.h>

#include <set>

#include <json.hpp>

#include "crl/core_mdp.hpp"

using namespace crl;

namespace {

// Response term written out case by case, independent of the library table.
double resp_oracle(ResponseRelevance rp, Action a) {
  if (rp == ResponseRelevance::NR) return -2.0;
  if (rp == ResponseRelevance::IR) {
    if (a == Action::ModeratePrompt) return 0.75;
    if (a == Action::DifficultPrompt) return 1.75;
    return 0.30;
  }
  if (a == Action::ModeratePrompt) return 2.0;
  if (a == Action::DifficultPrompt) return 3.0;
  return 0.75;
}

double emotion_oracle(Emotion e) { return e == Emotion::Neg ? -3.0 : e == Emotion::Neu ? 1.0 : 2.0; }
double conf_oracle(Confusion c) { return c == Confusion::Yes ? -2.5 : 2.0; }

}  // namespace

TEST(Encoding, ExamplesMatchIndexFormula) {
  EXPECT_EQ(encode_state({ResponseRelevance::NR, Emotion::Neg, Confusion::No}), 0);
  EXPECT_EQ(encode_state({ResponseRelevance::RR, Emotion::Pos, Confusion::Yes}), 17);
  EXPECT_EQ(encode_state({ResponseRelevance::IR, Emotion::Neu, Confusion::Yes}), 9);
  EXPECT_EQ(decode_state(0), (PatientState{ResponseRelevance::NR, Emotion::Neg, Confusion::No}));
  EXPECT_EQ(decode_state(17), (PatientState{ResponseRelevance::RR, Emotion::Pos, Confusion::Yes}));
  EXPECT_EQ(decode_state(9), (PatientState{ResponseRelevance::IR, Emotion::Neu, Confusion::Yes}));
}

TEST(Encoding, BijectionOverAllStates) {
  std::set<int> seen;
  for (int rp = 0; rp < 3; ++rp)
    for (int e = -1; e <= 1; ++e)
      for (int c = 0; c < 2; ++c) {
        const PatientState s{static_cast<ResponseRelevance>(rp), static_cast<Emotion>(e), static_cast<Confusion>(c)};
        const int i = encode_state(s);
        EXPECT_EQ(i, rp * 6 + (e + 1) * 2 + c);
        EXPECT_EQ(decode_state(i), s);
        seen.insert(i);
      }
  EXPECT_EQ(seen.size(), 18u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 17);
}

TEST(Encoding, OutOfRangeDecodeThrows) {
  EXPECT_THROW(decode_state(-1), DomainError);
  EXPECT_THROW(decode_state(18), DomainError);
  EXPECT_THROW(action_from_index(7), DomainError);
}

TEST(Encoding, LabelsRoundTrip) {
  EXPECT_EQ(state_label({ResponseRelevance::IR, Emotion::Neu, Confusion::Yes}), "IR_Neu_Yes");
  for (int i = 0; i < kNumStates; ++i) EXPECT_EQ(parse_state_label(state_label(decode_state(i))), decode_state(i));
  for (int a = 0; a < kNumActions; ++a)
    EXPECT_EQ(parse_action_label(label(static_cast<Action>(a))), static_cast<Action>(a));
  EXPECT_FALSE(parse_state_label("XX_Neu_No"));
}

TEST(Actions, OtherSetIsA0A3A4A5A6) {
  const std::set<int> other{0, 3, 4, 5, 6};
  for (int a = 0; a < kNumActions; ++a) EXPECT_EQ(is_other_action(static_cast<Action>(a)), other.count(a) == 1);
}

TEST(Reward, ResponseTableMatchesPiecewiseDefinitionExhaustively) {
  const RewardParams p;
  for (int rp = 0; rp < kNumRelevance; ++rp)
    for (int a = 0; a < kNumActions; ++a)
      EXPECT_EQ(p.resp_table[rp][a], resp_oracle(static_cast<ResponseRelevance>(rp), static_cast<Action>(a)))
          << "rp=" << rp << " a=" << a;
  EXPECT_EQ(p.emotion_table[0], -3.0);
  EXPECT_EQ(p.emotion_table[1], 1.0);
  EXPECT_EQ(p.emotion_table[2], 2.0);
  EXPECT_EQ(p.conf_table[0], 2.0);
  EXPECT_EQ(p.conf_table[1], -2.5);
  EXPECT_EQ(p.eta, 0.0);
  EXPECT_EQ(p.lambda_stop, -200.0);
  EXPECT_EQ(p.lambda_goal, 15.0);
}

TEST(Reward, CompositeExamples) {
  const RewardParams p;
  EXPECT_EQ(reward(Action::DifficultPrompt, {ResponseRelevance::RR, Emotion::Pos, Confusion::No}, {}, p), 7.0);
  EXPECT_EQ(reward(Action::Comfort, {ResponseRelevance::NR, Emotion::Neg, Confusion::Yes}, {}, p), -7.5);
  StepFlags stop;
  stop.early_stop = true;
  EXPECT_EQ(reward(Action::ModeratePrompt, {ResponseRelevance::IR, Emotion::Neu, Confusion::No}, stop, p), -196.25);
  StepFlags goal;
  goal.goal_reached = true;
  EXPECT_EQ(reward(Action::Explain, {ResponseRelevance::RR, Emotion::Neu, Confusion::No}, goal, p), 18.75);
}

TEST(Reward, BaseRewardBoundsAndArgextrema) {
  RewardParams p;
  p.delta = 0.0;
  double lo = 1e9, hi = -1e9;
  int lo_s = -1, hi_s = -1, hi_a = -1;
  for (int s = 0; s < kNumStates; ++s)
    for (int a = 0; a < kNumActions; ++a) {
      const double r = reward(static_cast<Action>(a), decode_state(s), {}, p);
      if (r < lo) lo = r, lo_s = s;
      if (r > hi) hi = r, hi_s = s, hi_a = a;
    }
  EXPECT_EQ(lo, -7.5);
  EXPECT_EQ(hi, 7.0);
  EXPECT_EQ(lo_s, encode_state({ResponseRelevance::NR, Emotion::Neg, Confusion::Yes}));
  EXPECT_EQ(hi_s, encode_state({ResponseRelevance::RR, Emotion::Pos, Confusion::No}));
  EXPECT_EQ(hi_a, code(Action::DifficultPrompt));
}

TEST(Reward, FlagsAreAdditive) {
  RewardParams p;
  p.eta = 0.25;
  p.delta = 1.5;
  for (int s = 0; s < kNumStates; ++s)
    for (int a = 0; a < kNumActions; ++a)
      for (int mask = 0; mask < 8; ++mask) {
        StepFlags f;
        f.new_trigger = mask & 1;
        f.early_stop = mask & 2;
        f.goal_reached = (mask & 4) && !f.early_stop;
        const Action act = static_cast<Action>(a);
        const PatientState ns = decode_state(s);
        const double diff = reward(act, ns, f, p) - reward(act, ns, {}, p);
        const double want = p.delta * f.new_trigger + p.lambda_stop * f.early_stop + p.lambda_goal * f.goal_reached;
        EXPECT_NEAR(diff, want, 1e-12);
        EXPECT_EQ(reward(act, ns, {}, p),
                  resp_oracle(ns.rp, act) + emotion_oracle(ns.e) + conf_oracle(ns.c) + p.eta);
      }
}

TEST(Reward, JsonRoundTripAndValidation) {
  RewardParams p;
  p.delta = 0.5;
  p.resp_table[1][3] = 0.125;
  const nlohmann::json j = p;
  const auto back = j.get<RewardParams>();
  EXPECT_EQ(back.delta, 0.5);
  EXPECT_EQ(back.resp_table, p.resp_table);
  EXPECT_EQ(back.emotion_table, p.emotion_table);
  EXPECT_EQ(back.conf_table, p.conf_table);

  nlohmann::json bad = j;
  bad["lambda_stop"] = 10.0;
  EXPECT_THROW(bad.get<RewardParams>(), ConfigError);
  bad = j;
  bad["lambda_goal"] = -1.0;
  EXPECT_THROW(bad.get<RewardParams>(), ConfigError);
}

TEST(Reward, MaxAbsStepRewardCoversTerminalPenalty) {
  const RewardParams p;
  EXPECT_EQ(max_abs_step_reward(p), 207.5);
}
