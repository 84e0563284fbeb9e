#include <gtest/gtest.h>

#include <array>

#include <json.hpp>

#include "crl/crl_trainer.hpp"
#include "test_support.hpp"

using namespace crl;

namespace {

SuggestionPolicy default_suggestion() {
  Rng rng(7);
  return SuggestionPolicy(estimate_cate(collect_random_trajectories(default_transition_model(), {}, 2000, rng)));
}

MethodConfig small(Method m, int epochs = 20, int per_epoch = 10) {
  MethodConfig c;
  c.method = m;
  c.epochs = epochs;
  c.episodes_per_epoch = per_epoch;
  return c;
}

}  // namespace

TEST(Schedule, FixedMethods) {
  for (int e : {0, 700, 1499}) {
    const auto rl = weight_schedule(Method::RL, e, 1500);
    EXPECT_EQ(rl.w_rl, 0.9);
    EXPECT_EQ(rl.w_dag, 0.0);
    const auto dag = weight_schedule(Method::DAG, e, 1500);
    EXPECT_EQ(dag.w_rl, 0.0);
    EXPECT_EQ(dag.w_dag, 0.9);
    const auto st = weight_schedule(Method::CrlStatic, e, 1500);
    EXPECT_EQ(st.w_rl, 0.45);
    EXPECT_EQ(st.w_dag, 0.45);
    for (const auto& w : {rl, dag, st}) EXPECT_EQ(w.w_explore, 0.1);
  }
}

TEST(Schedule, DynamicEndpointsAndMidpoint) {
  const auto first = weight_schedule(Method::CrlDynamic, 0, 1500);
  EXPECT_EQ(first.w_rl, 0.2);
  EXPECT_NEAR(first.w_dag, 0.7, 1e-15);
  const auto last = weight_schedule(Method::CrlDynamic, 1499, 1500);
  EXPECT_EQ(last.w_rl, 0.7);
  EXPECT_NEAR(last.w_dag, 0.2, 1e-15);
  EXPECT_NEAR(weight_schedule(Method::CrlDynamic, 750, 1500).w_rl, 0.45, 1e-3);
  EXPECT_EQ(weight_schedule(Method::CrlDynamic, 0, 1).w_rl, 0.2);
}

TEST(Schedule, DynamicIsMonotoneAndSumsToOne) {
  double prev = 0.0;
  for (int e = 0; e < 300; ++e) {
    const auto w = weight_schedule(Method::CrlDynamic, e, 300);
    EXPECT_GE(w.w_rl, prev);
    prev = w.w_rl;
    EXPECT_NO_THROW(w.validate());
  }
}

TEST(Schedule, RejectsOutOfRange) {
  EXPECT_THROW(weight_schedule(Method::RL, -1, 10), DomainError);
  EXPECT_THROW(weight_schedule(Method::RL, 10, 10), DomainError);
  EXPECT_THROW(weight_schedule(Method::RL, 0, 0), DomainError);
  EXPECT_THROW((MixedWeights{0.5, 0.6, -0.1}.validate()), DomainError);
  EXPECT_THROW((MixedWeights{0.5, 0.5, 0.1}.validate()), DomainError);
}

TEST(Forced, StreakRule) {
  EpisodeStatus st;
  EXPECT_FALSE(forced_give_choice(st, 2));
  st.neg_streak = 1;
  EXPECT_FALSE(forced_give_choice(st, 2));
  st.neg_streak = 2;
  EXPECT_TRUE(forced_give_choice(st, 2));
  st.neg_streak = 0;
  st.conf_streak = 3;
  EXPECT_TRUE(forced_give_choice(st, 2));
  EXPECT_FALSE(forced_give_choice(st, 4));
}

TEST(Mixed, DegenerateWeightsPickOneBranch) {
  QTable q;
  q(4, Action::Repeat) = 5.0;
  const auto sugg = default_suggestion();
  const PatientState s = decode_state(4);
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto rl = mixed_select_branch({1.0, 0.0, 0.0}, q, &sugg, s, 0.0, rng);
    EXPECT_EQ(rl.branch, Branch::Rl);
    EXPECT_EQ(rl.action, Action::Repeat);
    const auto dag = mixed_select_branch({0.0, 1.0, 0.0}, q, &sugg, s, 0.0, rng);
    EXPECT_EQ(dag.branch, Branch::Dag);
    EXPECT_EQ(dag.action, suggest_action(sugg, s));
    EXPECT_EQ(mixed_select_branch({0.0, 0.0, 1.0}, q, &sugg, s, 0.0, rng).branch, Branch::Explore);
    EXPECT_NE(mixed_select({0.0, 0.0, 1.0}, q, &sugg, s, 0.0, rng), Action::GiveChoice);
  }
  EXPECT_THROW(mixed_select({0.0, 1.0, 0.0}, q, nullptr, s, 0.0, rng), ConfigError);
  // A zero-weight DAG branch never needs the suggestion.
  EXPECT_NO_THROW(mixed_select({0.9, 0.0, 0.1}, q, nullptr, s, 0.1, rng));
}

TEST(Mixed, BranchFrequenciesMatchWeights) {
  const QTable q;
  const auto sugg = default_suggestion();
  Rng rng(2);
  const MixedWeights w{0.3, 0.5, 0.2};
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(mixed_select_branch(w, q, &sugg, kInitialState, 0.1, rng).branch)];
  EXPECT_NEAR(counts[0] / double(n), 0.3, 0.01);
  EXPECT_NEAR(counts[1] / double(n), 0.5, 0.01);
  EXPECT_NEAR(counts[2] / double(n), 0.2, 0.01);
}

TEST(Mixed, DagWeightsIgnoreQ) {
  const auto sugg = default_suggestion();
  QTable a, b;
  Rng fill(3);
  for (auto& row : b.q)
    for (double& v : row) v = fill.uniform() * 100.0;
  Rng ra(4), rb(4);
  const MixedWeights w{0.0, 0.9, 0.1};
  for (int i = 0; i < 2000; ++i) {
    const PatientState s = decode_state(i % kNumStates);
    EXPECT_EQ(mixed_select(w, a, &sugg, s, 0.1, ra), mixed_select(w, b, &sugg, s, 0.1, rb));
  }
}

TEST(Train, ForcedGiveChoiceOverridesEveryMethod) {
  // Every transition lands in NR_Neg_No: steps 1-2 are chosen by the policy,
  // step 3 is forced (streak 2) and ends the session (streak 3).
  const PatientState neg{ResponseRelevance::NR, Emotion::Neg, Confusion::No};
  SimSetup setup;
  setup.model = fixture::point_mass_model([&](int, int) { return encode_state(neg); });
  const auto sugg = default_suggestion();
  for (Method m : kAllMethods) {
    const auto r = train(setup, small(m, 1, 1), &sugg, 5);
    ASSERT_EQ(r.log.episodes[0].size(), 1u);
    EXPECT_EQ(r.log.episodes[0][0].length, 3);
    EXPECT_EQ(r.log.episodes[0][0].reason, DoneReason::EarlyStop);
    // First and only backup of (neg, a6) is terminal: alpha * r.
    StepFlags stop;
    stop.early_stop = true;
    const double r3 = reward(Action::GiveChoice, neg, stop, setup.reward);
    EXPECT_DOUBLE_EQ(r.q(encode_state(neg), Action::GiveChoice), 0.05 * r3);
  }
}

TEST(RunEpisode, ReturnIsHandSummedOverFixedPath) {
  // Deterministic cycle through the states with a fixed action sequence.
  const auto model = fixture::point_mass_model([](int s, int) { return (s + 1) % kNumStates; });
  EpisodeConfig ec;
  ec.total_triggers = 100;
  PatientEnv env(model, ec);
  const RewardParams p;
  QTable q;
  const auto ep = run_episode(env, &q, {}, [](const PatientState& s, const EpisodeStatus&) {
    return static_cast<Action>(encode_state(s) % kNumLearnableActions);
  });
  EXPECT_EQ(ep.length, 50);
  EXPECT_EQ(ep.reason, DoneReason::RoundCap);
  double expected = 0;
  int s = encode_state(kInitialState);
  for (int t = 0; t < 50; ++t) {
    const int n = (s + 1) % kNumStates;
    StepFlags f;
    f.new_trigger = decode_state(n).rp == ResponseRelevance::RR;
    f.goal_reached = t == 49;
    expected += reward(static_cast<Action>(s % kNumLearnableActions), decode_state(n), f, p);
    s = n;
  }
  EXPECT_NEAR(ep.ret, expected, 1e-9);
  EXPECT_NE(q, QTable{});
}

TEST(Train, DeterministicForSeed) {
  const auto sugg = default_suggestion();
  SimSetup setup;
  for (Method m : kAllMethods) {
    const auto a = train(setup, small(m), &sugg, 11);
    const auto b = train(setup, small(m), &sugg, 11);
    const auto c = train(setup, small(m), &sugg, 12);
    EXPECT_EQ(a.q, b.q);
    EXPECT_EQ(a.log.snapshots, b.log.snapshots);
    EXPECT_NE(a.q.hash(), c.q.hash());
  }
}

TEST(Train, LogShapeAndReturnBounds) {
  const auto sugg = default_suggestion();
  SimSetup setup;
  const auto r = train(setup, small(Method::CrlDynamic, 40, 30), &sugg, 1);
  ASSERT_EQ(r.log.episodes.size(), 40u);
  ASSERT_EQ(r.log.snapshots.size(), 40u);
  EXPECT_EQ(r.log.snapshots.back(), r.q);
  const double lo = -200.0 + 50 * -7.5, hi = 15.0 + 50 * (7.0 + 1.0);
  for (const auto& row : r.log.episodes) {
    ASSERT_EQ(row.size(), 30u);
    for (const auto& e : row) {
      EXPECT_GE(e.ret, lo);
      EXPECT_LE(e.ret, hi);
      EXPECT_GE(e.length, 1);
      EXPECT_LE(e.length, 50);
    }
  }
}

TEST(Train, DagMethodStillLearnsQ) {
  const auto sugg = default_suggestion();
  const auto r = train(SimSetup{}, small(Method::DAG), &sugg, 2);
  EXPECT_NE(r.q, QTable{});
}

TEST(Train, MissingSuggestionIsConfigError) {
  for (Method m : {Method::DAG, Method::CrlStatic, Method::CrlDynamic})
    EXPECT_THROW(train(SimSetup{}, small(m, 1, 1), nullptr, 0), ConfigError);
  EXPECT_NO_THROW(train(SimSetup{}, small(Method::RL, 1, 1), nullptr, 0));
}

TEST(MethodJson, RoundTripAndValidation) {
  MethodConfig c = small(Method::CrlStatic, 12, 7);
  c.hyperparams.alpha = 0.1;
  const auto back = nlohmann::json(c).get<MethodConfig>();
  EXPECT_EQ(back.method, Method::CrlStatic);
  EXPECT_EQ(back.epochs, 12);
  EXPECT_EQ(back.episodes_per_epoch, 7);
  EXPECT_EQ(back.hyperparams.alpha, 0.1);
  EXPECT_THROW((nlohmann::json{{"method", "sarsa"}}.get<MethodConfig>()), ConfigError);
  EXPECT_THROW((nlohmann::json{{"epochs", 0}}.get<MethodConfig>()), ConfigError);
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(label(m)), m);
}
