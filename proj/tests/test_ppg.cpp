#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "mecsim/ppg.hpp"

using namespace mecsim;

namespace {

std::vector<Observation> observe(const SystemConfig& cfg, std::uint64_t seed) {
  OffloadEnv env(cfg);
  return env.reset(seed, 0);
}

void zero_actor(PpgAgent& a) {
  for (auto& p : a.actor().params()) p.value.setZero();
}

}  // namespace

TEST(ReplayBuffer, PushClearAndShapes) {
  ReplayBuffer b(2, 3, 4);
  const std::vector<double> s(6, 1.0), lp{-1, -2}, pr(8, 0.25), r{1, 2}, sl{0.1, -0.1};
  const std::vector<int> t{0, 3};
  b.push(s, t, lp, pr, r, sl);
  b.push(s, t, lp, pr, r, sl);
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.value_targets(), b.rewards());
  EXPECT_EQ(b.taken()[3], 3);
  const std::vector<int> bad{0};
  EXPECT_THROW(b.push(s, bad, lp, pr, r, sl), std::invalid_argument);
  b.clear();
  EXPECT_TRUE(b.empty());
}

TEST(Lambda, StepExamples) {
  DeadlineCoeffs c{{1.0, 0.01, 2.0}, 0.1};
  const std::vector<double> slack{-0.5, 1.0, 0.0};
  lambda_step(c, slack);
  EXPECT_DOUBLE_EQ(c.lambda[0], 1.05);
  EXPECT_DOUBLE_EQ(c.lambda[1], 0.0);
  EXPECT_DOUBLE_EQ(c.lambda[2], 2.0);
  const std::vector<double> wrong{1.0};
  EXPECT_THROW(lambda_step(c, wrong), std::invalid_argument);
}

TEST(Lambda, MovesAgainstSlackAndStaysNonNegative) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> s(-2, 2), l(0, 3);
  for (int i = 0; i < 2000; ++i) {
    DeadlineCoeffs c{{l(rng)}, 0.05};
    const double before = c.lambda[0];
    const std::vector<double> slack{s(rng)};
    lambda_step(c, slack);
    EXPECT_GE(c.lambda[0], 0.0);
    if (slack[0] < 0) EXPECT_GT(c.lambda[0], before);
    if (slack[0] > 0) EXPECT_LE(c.lambda[0], before);
  }
}

TEST(Lambda, PhaseAveragesPerUser) {
  DeadlineCoeffs c{{0.0, 0.0}, 0.1};
  std::vector<StepRecord> recs(4);
  recs[0].user = 0;
  recs[0].deadline_slack_s = -1.0;
  recs[1].user = 0;
  recs[1].deadline_slack_s = 0.0;
  recs[2].user = 1;
  recs[2].deadline_slack_s = 1.0;
  recs[3].user = 1;
  recs[3].deadline_slack_s = 1.0;
  lambda_phase(c, recs, 5);
  EXPECT_NEAR(c.lambda[0], 5 * 0.1 * 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(c.lambda[1], 0.0);
  recs[0].user = 7;
  EXPECT_THROW(lambda_phase(c, recs), std::invalid_argument);
}

TEST(Ppg, ZeroWeightActorIsUniform) {
  const auto cfg = fixtures::micro_config();
  for (auto kind : {PpgKind::Centralized, PpgKind::Independent}) {
    PpgAgent a(kind, cfg, 3);
    zero_actor(a);
    const auto d = a.act(observe(cfg, 1), nullptr);
    for (double p : d.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-7);
    for (double h : d.entropy) EXPECT_NEAR(h, std::log(3.0), 1e-6);
  }
}

TEST(Ppg, SamplingFrequenciesMatchProbabilities) {
  const auto cfg = fixtures::micro_config();
  PpgAgent a(PpgKind::Independent, cfg, 3);
  zero_actor(a);
  auto& bias = a.actor().params()[a.actor().params().size() - 3].value;  // head.pi.b
  ASSERT_EQ(bias.cols(), 3);
  bias << 0.0f, 1.0f, -0.5f;
  const auto obs = observe(cfg, 2);
  Rng rng = make_rng(9, 0);
  std::vector<double> count(3, 0);
  const int n = 100000;
  std::vector<double> probs;
  for (int i = 0; i < n; ++i) {
    const auto d = a.act(obs, &rng);
    count[d.actions[0].choice] += 1;
    probs = d.probs;
  }
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(count[j] / n, probs[j], 0.01);
}

TEST(Ppg, GreedyIsDeterministicArgmax) {
  const auto cfg = fixtures::micro_config();
  PpgAgent a(PpgKind::Centralized, cfg, 5);
  const auto obs = observe(cfg, 3);
  const auto d1 = a.act(obs, nullptr), d2 = a.act(obs, nullptr);
  EXPECT_EQ(d1.actions, d2.actions);
  for (int k = 0; k < 2; ++k) {
    const auto* p = d1.probs.data() + k * 3;
    EXPECT_EQ(d1.actions[k].choice, std::max_element(p, p + 3) - p);
  }
}

TEST(Ppg, RolloutLogProbsGiveUnitRatio) {
  const auto cfg = fixtures::micro_config();
  PpgAgent a(PpgKind::Centralized, cfg, 5);
  OffloadEnv env(cfg);
  auto obs = env.reset(1, 0);
  Rng rng = make_rng(1, 1);
  for (int t = 0; t < 10; ++t) {
    const auto d = a.act(obs, &rng);
    const auto again = a.act(obs, nullptr);
    for (int k = 0; k < 2; ++k)
      EXPECT_EQ(std::exp(d.logp[k] - std::log(again.probs[k * 3 + d.actions[k].choice])), 1.0);
    obs = env.step(d.actions).observations;
  }
}

TEST(Ppg, UpdateRoundsEveryWindow) {
  auto cfg = fixtures::micro_config();
  cfg.episode_len = 8;
  cfg.ppg.n_update = 4;
  cfg.ppg.n_policy = 2;
  cfg.ppg.n_aux = 1;
  OffloadEnv env(cfg);
  PpgAgent a(PpgKind::Independent, cfg, 1);
  const auto log = train_ppg(env, a, 10, 7);
  int updates = 0;
  for (const auto& s : log) updates += s.update;
  EXPECT_EQ(updates, 10 / 4);
  EXPECT_TRUE(log[3].update);
  EXPECT_FALSE(log[4].update);
}

TEST(Ppg, TrainingIsDeterministic) {
  auto cfg = fixtures::micro_config();
  cfg.episode_len = 8;
  cfg.ppg.n_policy = 4;
  cfg.ppg.n_aux = 1;
  for (auto kind : {PpgKind::Centralized, PpgKind::Independent}) {
    OffloadEnv e1(cfg), e2(cfg);
    PpgAgent a(kind, cfg, 4), b(kind, cfg, 4);
    const auto l1 = train_ppg(e1, a, 8, 2), l2 = train_ppg(e2, b, 8, 2);
    std::ostringstream s1, s2;
    for (const auto& s : l1) write_train_row(s1, s);
    for (const auto& s : l2) write_train_row(s2, s);
    EXPECT_EQ(s1.str(), s2.str());
    EXPECT_EQ(a.checkpoint().dump(), b.checkpoint().dump());
  }
}

namespace {

double final_entropy(double beta) {
  auto cfg = fixtures::micro_config();
  cfg.episode_len = 12;
  cfg.ppg.entropy_weight = beta;
  cfg.ppg.lr = 3e-3;
  OffloadEnv env(cfg);
  PpgAgent a(PpgKind::Independent, cfg, 8);
  const auto log = train_ppg(env, a, 40, 3);
  return log.back().entropy;
}

}  // namespace

TEST(Ppg, EntropyBonusControlsCollapse) {
  const double hi = final_entropy(50.0), lo = final_entropy(0.0);
  EXPECT_GT(hi, lo);
  EXPECT_GT(hi, 0.98 * std::log(3.0));
  EXPECT_LT(lo, 0.9 * std::log(3.0));
}

TEST(Ppg, LambdaTracksDeadlines) {
  auto cfg = fixtures::micro_config();
  cfg.episode_len = 6;
  cfg.ppg.n_policy = 1;
  cfg.ppg.n_aux = 1;
  cfg.task_gen.deadline_s = 1e-3;
  require_valid(cfg);
  OffloadEnv env(cfg);
  PpgAgent a(PpgKind::Independent, cfg, 1);
  const double l0 = a.lambdas()[0];
  train_ppg(env, a, 4, 1);
  EXPECT_GT(a.lambdas()[0], l0);
}

TEST(Ppg, CheckpointRoundTrip) {
  auto cfg = fixtures::micro_config();
  cfg.episode_len = 8;
  cfg.ppg.n_policy = 3;
  cfg.ppg.n_aux = 1;
  OffloadEnv env(cfg);
  PpgAgent a(PpgKind::Centralized, cfg, 4);
  train_ppg(env, a, 4, 1);
  const auto text = a.checkpoint().dump();
  const PpgAgent b = PpgAgent::from_checkpoint(nlohmann::json::parse(text), cfg);
  EXPECT_EQ(b.checkpoint().dump(), text);
  const auto obs = observe(cfg, 5);
  EXPECT_EQ(a.act(obs, nullptr).probs, b.act(obs, nullptr).probs);
  auto other = cfg;
  other.num_users = 3;
  EXPECT_THROW(PpgAgent::from_checkpoint(nlohmann::json::parse(text), other), std::exception);
}
