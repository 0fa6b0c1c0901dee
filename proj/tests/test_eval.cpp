#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "common.hpp"
#include "mecsim/eval.hpp"
#include "mecsim/models.hpp"

using namespace mecsim;

namespace {

SystemConfig short_micro() {
  auto cfg = fixtures::micro_config();
  cfg.episode_len = 12;
  return cfg;
}

StepRecord record(double size, int layer, double slack, int action = 0) {
  StepRecord r;
  r.task.size_bits = size;
  r.task.quality_layer = layer;
  r.deadline_slack_s = slack;
  r.action = Action{action};
  r.response_time_s = 1;
  r.energy_j = 1;
  return r;
}

}  // namespace

TEST(Baselines, ActionsAndErrors) {
  const auto cfg = short_micro();
  OffloadEnv env(cfg);
  const auto obs = env.reset(1, 0);
  EXPECT_EQ(make_baseline("always_local", 0)(env, obs), JointAction(2, Action{0}));
  const auto best = make_baseline("always_offload_best_rate", 0)(env, obs);
  for (const auto& a : best) EXPECT_EQ(a.choice, 1);  // 400 Mbps 5G beats 50 Mbps 4G
  auto r1 = make_baseline("uniform_random", 4), r2 = make_baseline("uniform_random", 4);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(r1(env, obs), r2(env, obs));
  EXPECT_THROW(make_baseline("greedy", 0), EvalError);
}

TEST(Eval, RecordsReproduceEfficiency) {
  const auto cfg = short_micro();
  OffloadEnv env(cfg);
  std::vector<StepRecord> recs;
  const auto m = evaluate_policy(env, make_baseline("uniform_random", 2), 3, 5,
                                 [&](const StepRecord& r) { recs.push_back(r); });
  ASSERT_EQ(recs.size(), 3u * 12 * 2);
  EXPECT_EQ(m.decisions, 72);
  double eff = 0, freq = 0;
  for (const auto& r : recs) {
    EXPECT_NEAR(r.efficiency, efficiency(r.task.size_bits, r.response_time_s, r.energy_j),
                1e-12 * r.efficiency);
    eff += r.efficiency;
  }
  EXPECT_NEAR(m.mean_efficiency, eff / 72, 1e-9 * m.mean_efficiency);
  for (double f : m.action_freq) freq += f;
  EXPECT_NEAR(freq, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.local_fraction, m.action_freq[0]);
  EXPECT_THROW(summarize({}, 3, cfg.task_gen.layer_psnr_db), EvalError);
}

TEST(Eval, SameSeedSameMetrics) {
  const auto cfg = short_micro();
  OffloadEnv a(cfg), b(cfg);
  const auto m1 = evaluate_policy(a, make_baseline("uniform_random", 3), 2, 9);
  const auto m2 = evaluate_policy(b, make_baseline("uniform_random", 3), 2, 9);
  EXPECT_EQ(to_json(m1).dump(), to_json(m2).dump());
}

TEST(Oracle, JointActionEnumeration) {
  const auto all = all_joint_actions(2, 3);
  ASSERT_EQ(all.size(), 9u);
  std::set<std::pair<int, int>> seen;
  for (const auto& j : all) seen.insert({j[0].choice, j[1].choice});
  EXPECT_EQ(seen.size(), 9u);
  EXPECT_THROW(all_joint_actions(30, 4), EvalError);
}

TEST(Oracle, DominatesEveryFixedPolicy) {
  const auto cfg = short_micro();
  OffloadEnv env(cfg);
  const auto oracle = brute_force_oracle(env, 3, 7);
  for (const auto& name : baseline_names()) {
    OffloadEnv e(cfg);
    EXPECT_GE(oracle.mean_reward + 1e-12, evaluate_policy(e, make_baseline(name, 1), 3, 7).mean_reward)
        << name;
  }
  for (const auto& j : all_joint_actions(2, 3)) {
    OffloadEnv e(cfg);
    const PolicyFn fixed = [j](const OffloadEnv&, const std::vector<Observation>&) { return j; };
    EXPECT_GE(oracle.mean_reward + 1e-12, evaluate_policy(e, fixed, 3, 7).mean_reward);
  }
}

TEST(Oracle, ReplayingBestActionsReachesOracleValue) {
  const auto cfg = short_micro();
  OffloadEnv env(cfg);
  const auto oracle = brute_force_oracle(env, 2, 3);
  std::size_t i = 0;
  const PolicyFn replay = [&](const OffloadEnv&, const std::vector<Observation>&) {
    return oracle.best_actions.at(i++);
  };
  OffloadEnv e(cfg);
  EXPECT_NEAR(evaluate_policy(e, replay, 2, 3).mean_reward, oracle.mean_reward,
              1e-12 * std::abs(oracle.mean_reward));
}

TEST(Oracle, MicroEnvSplitsUsersBetweenLocalAndFiveG) {
  const auto cfg = short_micro();
  OffloadEnv env(cfg);
  const auto oracle = brute_force_oracle(env, 1, 1);
  for (const auto& j : oracle.best_actions) {
    std::vector<int> c{j[0].choice, j[1].choice};
    std::sort(c.begin(), c.end());
    EXPECT_EQ(c, (std::vector<int>{0, 1}));
  }
}

TEST(Oracle, IdenticalUsersArePermutationSymmetric) {
  const auto cfg = short_micro();
  OffloadEnv env(cfg);
  env.reset(4, 0);
  for (const auto& j : all_joint_actions(2, 3)) {
    const JointAction swapped{j[1], j[0]};
    double a = 0, b = 0;
    for (const auto& r : env.evaluate(j)) a += r.reward;
    for (const auto& r : env.evaluate(swapped)) b += r.reward;
    EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
  }
}

TEST(Qoe, HistogramAndViolationBins) {
  const std::vector<double> psnr{30, 32, 34};
  std::vector<StepRecord> recs{record(0, 1, 1), record(1, 1, -1), record(2, 2, 1),
                               record(8, 3, 1), record(9, 3, -1), record(10, 3, -1)};
  const auto q = qoe_summary(recs, psnr, 2);
  EXPECT_EQ(q.psnr_hist, (std::vector<long>{2, 1, 3}));
  EXPECT_EQ(q.size_count, (std::vector<long>{3, 3}));
  EXPECT_NEAR(q.violation_prob[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(q.violation_prob[1], 2.0 / 3, 1e-15);
  EXPECT_TRUE(q.violation_monotone);
  EXPECT_TRUE(q.psnr_monotone);

  const auto sparse = qoe_summary(recs, psnr, 5);
  EXPECT_TRUE(std::isnan(sparse.violation_prob[2]));
  EXPECT_THROW(qoe_summary({}, psnr), EvalError);

  std::vector<StepRecord> down{record(0, 1, -1), record(10, 1, 1)};
  EXPECT_FALSE(qoe_summary(down, psnr, 2).violation_monotone);
}

TEST(Stats, SignTest) {
  EXPECT_DOUBLE_EQ(sign_test_p(5, 5), 1.0 / 32);
  EXPECT_DOUBLE_EQ(sign_test_p(4, 5), 6.0 / 32);
  EXPECT_DOUBLE_EQ(sign_test_p(0, 5), 1.0);
  EXPECT_THROW(sign_test_p(6, 5), EvalError);
}

TEST(Stats, TrendTest) {
  const std::vector<double> x{0.5, 1, 1.5, 2};
  std::vector<std::vector<double>> falling(5, {0.9, 0.7, 0.4, 0.2});
  EXPECT_DOUBLE_EQ(ols_slope(x, falling[0]), -0.48);
  auto t = trend_test(x, falling, -1);
  EXPECT_TRUE(t.pass);
  EXPECT_EQ(t.successes, 5);
  EXPECT_FALSE(trend_test(x, falling, +1).pass);
  falling[2] = {0.5, 0.5, 0.5, 0.5};  // a tie counts against
  t = trend_test(x, falling, -1);
  EXPECT_EQ(t.successes, 4);
  EXPECT_FALSE(t.pass);
}

TEST(Sweep, ApplyAndParse) {
  const auto cfg = short_micro();
  EXPECT_EQ(apply_sweep(cfg, SweepVar::MecSpeed, 5e8).compute.mec_total_speed_bps, 5e8);
  EXPECT_EQ(sweep_var_from_string("task_size_scale"), SweepVar::TaskSizeScale);
  EXPECT_THROW(sweep_var_from_string("speed"), EvalError);
  EXPECT_THROW(apply_sweep(cfg, SweepVar::UserSpeed, -1), ConfigError);
}

TEST(Sweep, ExperimentTableShapeAndParallelism) {
  const auto cfg = short_micro();
  ExperimentSpec spec;
  spec.variable = SweepVar::MecSpeed;
  spec.values = {2e8, 4e8};
  spec.agents = {"always_local", "lin-ucb"};
  spec.seeds = {1, 2};
  spec.train_episodes = 2;
  spec.eval_episodes = 1;
  const auto rows = run_experiment(cfg, spec);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].agent, "always_local");
  EXPECT_TRUE(rows[0].checkpoint_hash.empty());
  EXPECT_EQ(rows[2].agent, "lin-ucb");
  EXPECT_EQ(rows[2].checkpoint_hash.size(), 16u);

  spec.jobs = 3;
  const auto par = run_experiment(cfg, spec);
  std::ostringstream a, b;
  write_results_csv(a, rows);
  write_results_csv(b, par);
  EXPECT_EQ(a.str(), b.str());

  std::ostringstream s;
  write_summary_csv(s, rows);
  std::istringstream lines(s.str());
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header.rfind("variable,value,agent,seeds,mean_response_s,mean_response_s_std", 0), 0u);
  int n = 0;
  while (std::getline(lines, line)) ++n;
  EXPECT_EQ(n, 4);

  spec.agents = {"sac"};
  EXPECT_THROW(run_experiment(cfg, spec), EvalError);
}

TEST(Sweep, TrainOnceSharesCheckpointAcrossValues) {
  const auto cfg = short_micro();
  ExperimentSpec spec;
  spec.variable = SweepVar::TaskSizeScale;
  spec.values = {0.5, 1.0, 2.0};
  spec.agents = {"ippg"};
  spec.seeds = {3};
  spec.train_episodes = 4;
  spec.eval_episodes = 1;
  spec.train_per_point = false;
  const auto rows = run_experiment(cfg, spec);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].checkpoint_hash, rows[2].checkpoint_hash);
}
