#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "mecsim/losses.hpp"

using namespace mecsim;
using namespace mecsim::losses;

TEST(Losses, ClipObjectiveVectors) {
  EXPECT_DOUBLE_EQ(clip_objective(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clip_objective(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clip_objective(1.0, 2.5, 0.2), 2.5);
  EXPECT_DOUBLE_EQ(clip_objective(1.0, -2.5, 0.2), -2.5);
}

TEST(Losses, DualClipFloor) {
  EXPECT_DOUBLE_EQ(dual_clip_objective(5.0, -1.0, 0.2, 3.0), -3.0);
  EXPECT_DOUBLE_EQ(dual_clip_objective_grad(5.0, -1.0, 0.2, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(dual_clip_objective(2.0, -1.0, 0.2, 3.0), -2.0);
  EXPECT_DOUBLE_EQ(dual_clip_objective(5.0, 1.0, 0.2, 3.0), 1.2);
  const double inf = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> r(0.01, 10), a(-5, 5);
  for (int i = 0; i < 1000; ++i) {
    const double rho = r(rng), A = a(rng);
    EXPECT_DOUBLE_EQ(dual_clip_objective(rho, A, 0.2, inf), clip_objective(rho, A, 0.2));
    EXPECT_GE(dual_clip_objective(rho, A, 0.2, 3.0), clip_objective(rho, A, 0.2));
  }
}

TEST(Losses, DualClipGradientMatchesDifference) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> r(0.05, 6), a(-3, 3);
  for (int i = 0; i < 2000; ++i) {
    const double rho = r(rng), A = a(rng), h = 1e-6;
    const double fd = (dual_clip_objective(rho + h, A, 0.2, 3.0) -
                       dual_clip_objective(rho - h, A, 0.2, 3.0)) /
                      (2 * h);
    if (std::abs(rho - 0.8) < 1e-5 || std::abs(rho - 1.2) < 1e-5 ||
        std::abs(rho - 3.0) < 1e-5)
      continue;
    EXPECT_NEAR(dual_clip_objective_grad(rho, A, 0.2, 3.0), fd, 1e-6);
  }
}

TEST(Losses, UnitRatioPolicyLossIsMeanAdvantage) {
  nn::Mat logits(2, 6);
  logits << 0.1, 0.5, -0.3, 1.0, 0.0, 0.2, 0.3, 0.3, 0.3, -1.0, 2.0, 0.5;
  Eigen::MatrixXi taken(2, 2);
  taken << 0, 2, 1, 1;
  const nn::Mat logp = grouped_log_softmax(logits, 2, 3);
  nn::Mat old(2, 2);
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 2; ++k) old(b, k) = logp(b, k * 3 + taken(b, k));
  nn::Mat adv(2, 2);
  adv << 1.0, -2.0, 0.5, 3.0;
  const auto r = policy_loss(logits, 2, 3, taken, old, adv, 0.2, 3.0, 0.0);
  EXPECT_NEAR(r.objective, (1.0 - 2.0 + 0.5 + 3.0) / 2.0, 1e-14);
  EXPECT_DOUBLE_EQ(r.clip_fraction, 0.0);
}

TEST(Losses, ValueLossExample) {
  nn::Mat p(1, 2), t(1, 2);
  p << 3, 0;
  t << 1, -2;
  const auto v = value_loss(p, t);
  EXPECT_DOUBLE_EQ(v.loss, 2.0);
  EXPECT_DOUBLE_EQ(v.grad(0, 0), 1.0);
  EXPECT_THROW(value_loss(p, nn::Mat::Zero(2, 2)), std::invalid_argument);
}

TEST(Losses, KlHandValues) {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75}, same{0.5, 0.5}, z{1.0, 0.0};
  EXPECT_NEAR(categorical_kl(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(categorical_kl(p, same), 0.0);
  EXPECT_NEAR(categorical_kl(z, p), std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isinf(categorical_kl(p, z)));
}

TEST(Losses, KlIsNonNegative) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> p(5), q(5);
    double sp = 0, sq = 0;
    for (int j = 0; j < 5; ++j) {
      p[j] = u(rng);
      q[j] = u(rng) + 1e-9;
      sp += p[j];
      sq += q[j];
    }
    for (int j = 0; j < 5; ++j) {
      p[j] /= sp;
      q[j] /= sq;
    }
    EXPECT_GE(categorical_kl(p, q), -1e-15);
  }
}

TEST(Losses, JointAuxLossZeroAtTarget) {
  nn::Mat logits(1, 4);
  logits << 0.2, -0.4, 1.0, 0.0;
  const nn::Mat logp = grouped_log_softmax(logits, 2, 2);
  const nn::Mat probs = logp.array().exp();
  nn::Mat aux(1, 2), targ(1, 2);
  aux << 1, 2;
  targ << 1, 2;
  const auto r = joint_aux_loss(logits, 2, 2, probs, aux, targ);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
  EXPECT_LT(r.grad_logits.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Losses, LogitGradientsMatchFiniteDifference) {
  std::mt19937_64 rng(4);
  const int heads = 3, actions = 4, batch = 6;
  for (int trial = 0; trial < 20; ++trial) {
    nn::Mat logits = fixtures::random_mat(batch, heads * actions, rng, -2, 2);
    Eigen::MatrixXi taken(batch, heads);
    for (Eigen::Index i = 0; i < taken.size(); ++i) taken.data()[i] = static_cast<int>(rng() % actions);
    const nn::Mat adv = fixtures::random_mat(batch, heads, rng, -2, 2);
    const nn::Mat old = grouped_log_softmax(logits, heads, actions) +
                        fixtures::random_mat(batch, heads * actions, rng, -1.5, 1.5);
    nn::Mat old_logp(batch, heads);
    for (int b = 0; b < batch; ++b)
      for (int k = 0; k < heads; ++k) old_logp(b, k) = old(b, k * actions + taken(b, k));
    const auto r = policy_loss(logits, heads, actions, taken, old_logp, adv, 0.2, 3.0, 0.05);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      nn::Mat up = logits, dn = logits;
      up.data()[i] += 1e-6;
      dn.data()[i] -= 1e-6;
      const double fd = (policy_loss(up, heads, actions, taken, old_logp, adv, 0.2, 3.0, 0.05).loss -
                         policy_loss(dn, heads, actions, taken, old_logp, adv, 0.2, 3.0, 0.05).loss) /
                        2e-6;
      EXPECT_NEAR(r.grad_logits.data()[i], fd, 1e-7);
    }
  }
}

TEST(Losses, NetworkGradientsMatchFiniteDifference) {
  for (const auto& c : fixtures::all_loss_gradchecks(20240601)) {
    EXPECT_LT(c.result.max_rel, 1e-4) << c.name << " worst " << c.result.worst;
    EXPECT_GT(c.result.checked, 20) << c.name;
  }
}
