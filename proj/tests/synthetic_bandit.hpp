#pragma once

#include <random>
#include <vector>

#include "mecsim/bandit.hpp"

namespace mecsim::fixtures {

// Linear bandit: arm a at round t shows context x_{t,a} ~ N(0, I) and pays
// theta . x_{t,a} + N(0, noise^2).
struct LinearBanditRun {
  std::vector<double> cumulative_regret;  // after each round
  Vec theta_true;
  Vec theta_hat;
  Vec ridge;  // closed-form ridge solution on the observed data
  std::vector<Vec> chosen;
  std::vector<double> rewards;

  double regret_at(long t) const { return cumulative_regret.at(t - 1); }
};

inline LinearBanditRun run_linear_bandit(ExplorerKind explorer, long rounds, std::uint64_t seed,
                                         int arms = 3, int dim = 5, double noise = 0.1) {
  BanditSpec spec;
  spec.estimator = EstimatorKind::Linear;
  spec.explorer = explorer;
  spec.hyper.mu = 1.0;
  spec.hyper.eps0 = 0.2;
  spec.hyper.eps_tau = 100.0;
  spec.hyper.exploration_scale = 0.1;
  ContextualBandit bandit(spec, arms, dim, seed);

  Rng env = make_rng(seed, 77);
  std::normal_distribution<double> n01(0.0, 1.0);
  LinearBanditRun out;
  out.theta_true = Vec(dim);
  for (int i = 0; i < dim; ++i) out.theta_true[i] = n01(env);
  out.theta_true /= out.theta_true.norm();

  double regret = 0;
  std::vector<Vec> ctx(arms, Vec(dim));
  for (long t = 0; t < rounds; ++t) {
    double best = -1e300;
    for (auto& x : ctx) {
      for (int i = 0; i < dim; ++i) x[i] = n01(env);
      best = std::max(best, out.theta_true.dot(x));
    }
    const int a = bandit.select(ctx, true);
    const double mean = out.theta_true.dot(ctx[a]);
    const double r = mean + noise * n01(env);
    bandit.learn(ctx, a, r);
    regret += best - mean;
    out.cumulative_regret.push_back(regret);
    out.chosen.push_back(ctx[a]);
    out.rewards.push_back(r);
  }
  out.theta_hat = bandit.linear().theta();
  SqMat gram = SqMat::Identity(dim, dim) * spec.hyper.mu;
  Vec moment = Vec::Zero(dim);
  for (std::size_t i = 0; i < out.chosen.size(); ++i) {
    gram += out.chosen[i] * out.chosen[i].transpose();
    moment += out.rewards[i] * out.chosen[i];
  }
  out.ridge = gram.ldlt().solve(moment);
  return out;
}

}  // namespace mecsim::fixtures
