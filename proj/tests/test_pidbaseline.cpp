#include <gtest/gtest.h>

#include <random>

#include "atg/errors.hpp"
#include "atg/evalkit.hpp"
#include "atg/pidbaseline.hpp"
#include "test_util.hpp"

namespace atg {
namespace {

TEST(Pid, IdealTargets) {
  PidConfig cfg;
  const IdealTargets t = ideal_targets(84, 84, cfg);
  EXPECT_DOUBLE_EQ(t.x, 42.0);
  EXPECT_DOUBLE_EQ(t.y, 42.0);
  EXPECT_NEAR(t.area, 1411.2, 1e-9);
  cfg.ideal_area_fraction = 1.0;
  EXPECT_DOUBLE_EQ(ideal_targets(84, 84, cfg).area, 84.0 * 84.0);
  cfg.ideal_area_fraction = 0.2;
  const IdealTargets s = ideal_targets(2, 2, cfg);
  EXPECT_DOUBLE_EQ(s.x, 1.0);
  EXPECT_DOUBLE_EQ(s.y, 1.0);
  EXPECT_NEAR(s.area, 0.8, 1e-15);
}

TEST(Pid, Errors) {
  const PidConfig cfg;
  const double side = std::sqrt(1411.2);
  const BBoxError zero = pid_errors({42, 42, side, side}, 84, 84, cfg);
  EXPECT_DOUBLE_EQ(zero.x_err, 0.0);
  EXPECT_DOUBLE_EQ(zero.y_err, 0.0);
  EXPECT_NEAR(zero.z_err, 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(pid_errors({60, 42, 10, 10}, 84, 84, cfg).x_err, 18.0);
  EXPECT_GT(pid_errors({42, 42, 4, 8}, 84, 84, cfg).z_err, 0.0);
  EXPECT_LT(pid_errors({42, 42, 60, 60}, 84, 84, cfg).z_err, 0.0);
}

TEST(Pid, ActionMapping) {
  const PidConfig cfg;
  EXPECT_EQ(select_action({0, 0, 0}, cfg), Action::NoOp);
  EXPECT_EQ(select_action({3, -3, 100}, cfg), Action::NoOp);
  EXPECT_EQ(select_action({-30, 0, 1000}, cfg), Action::TurnLeftMove);
  EXPECT_EQ(select_action({30, 0, 1000}, cfg), Action::TurnRightMove);
  EXPECT_EQ(select_action({-30, 0, 0}, cfg), Action::TurnLeft);
  EXPECT_EQ(select_action({30, 0, -500}, cfg), Action::TurnRight);
  EXPECT_EQ(select_action({0, 0, 1000}, cfg), Action::MoveForward);
  EXPECT_EQ(select_action({0, -20, 0}, cfg), Action::MoveForward);
  // Too close: there is no backward action.
  EXPECT_EQ(select_action({0, 20, -2000}, cfg), Action::NoOp);
}

TEST(Pid, MirrorConsistency) {
  const PidConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> px(-42, 42);
  std::uniform_real_distribution<double> area(-5000, 1500);
  for (int i = 0; i < 5000; ++i) {
    const BBoxError e{px(rng), px(rng), area(rng)};
    ASSERT_EQ(select_action({-e.x_err, e.y_err, e.z_err}, cfg), flip_action(select_action(e, cfg)));
  }
}

TEST(Pid, SingleEngagementThreshold) {
  const PidConfig cfg;
  int switches = 0;
  Action prev = select_action({0, 0, 0}, cfg);
  EXPECT_EQ(prev, Action::NoOp);
  for (double z = 0; z < 5000; z += 0.5) {
    const Action a = select_action({0, 0, z}, cfg);
    if (a != prev) ++switches;
    prev = a;
  }
  EXPECT_EQ(switches, 1);
  EXPECT_EQ(prev, Action::MoveForward);
}

TEST(Pid, ConfigValidation) {
  PidConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.ideal_area_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.deadband_x = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(PidEpisode, StationaryTargetAtMaximumRunsFullLength) {
  EvalSettings s;
  s.termination.max_length = 120;
  EnvSpec spec = testing::open_room();
  spec.agent_start = {8.5, 8.5, 0.0};
  spec.initial_target = {8.5, 8.5 + s.reward.d, 0.0};
  spec.waypoints = {{8.5, 8.5 + s.reward.d}, {8.5, 8.5 + s.reward.d}};
  spec.first_waypoint = 0;
  PidConfig cfg;
  // Accept whatever size the target has at distance d.
  cfg.deadband_z = 1e9;
  const EpisodeStats e = run_baseline(spec, std::make_shared<OracleProvider>(), cfg, s, 0);
  EXPECT_EQ(e.el, 120);
  EXPECT_NEAR(e.ar, 120.0 * s.reward.A, 1e-9);
  for (const TraceRecord& r : e.trace) EXPECT_EQ(r.action, Action::NoOp);
}

TEST(PidEpisode, FullDropoutWithNoOpNeverMoves) {
  EvalSettings s;
  s.termination.max_length = 60;
  PidConfig cfg;
  cfg.lost_target_policy = LostTargetPolicy::NoOp;
  const EnvSpec spec = standard_spec();
  const EpisodeStats e =
      run_baseline(spec, std::make_shared<NoisyProvider>(2.0, 1.0), cfg, s, 3);
  for (const TraceRecord& r : e.trace) EXPECT_EQ(r.action, Action::NoOp);
}

TEST(PidEpisode, NoisyProviderIsSeeded) {
  EvalSettings s;
  s.termination.max_length = 100;
  const EnvSpec spec = standard_spec();
  const auto a = run_baseline(spec, std::make_shared<NoisyProvider>(3.0, 0.2), {}, s, 7);
  const auto b = run_baseline(spec, std::make_shared<NoisyProvider>(3.0, 0.2), {}, s, 7);
  EXPECT_EQ(a.ar, b.ar);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].action, b.trace[i].action);
}

TEST(PidEpisode, OracleTracksStandardLoop) {
  const EvalSettings s;
  const EnvSpec spec = standard_spec();
  int full = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EpisodeStats e = run_baseline(spec, std::make_shared<OracleProvider>(), {}, s, seed);
    full += e.el == s.termination.max_length;
  }
  EXPECT_EQ(full, 10);
}

}  // namespace
}  // namespace atg
