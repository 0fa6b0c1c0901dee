#pragma once

// Contextual bandits over per-action feature vectors: ridge-linear or
// two-layer neural value estimates with epsilon-greedy, UCB and Thompson
// exploration, and the per-user decentralized agent built from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mecsim/config.hpp"
#include "mecsim/env.hpp"
#include "mecsim/nn.hpp"
#include "mecsim/ppg.hpp"
#include "mecsim/util.hpp"

namespace mecsim {

using Vec = Eigen::VectorXd;
using SqMat = Eigen::MatrixXd;

class BanditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Z = mu I + sum g g^T with its inverse kept current by Sherman-Morrison.
class CovarianceState {
 public:
  CovarianceState() = default;
  CovarianceState(int dim, double mu)
      : mu_(mu), z_(SqMat::Identity(dim, dim) * mu), zinv_(SqMat::Identity(dim, dim) / mu) {
    if (!(mu > 0)) throw BanditError("covariance prior mu must be > 0");
  }

  int dim() const { return static_cast<int>(z_.rows()); }
  double mu() const { return mu_; }
  const SqMat& z() const { return z_; }
  const SqMat& z_inv() const { return zinv_; }

  // g^T Z^{-1} g
  double quad(const Vec& g) const { return g.dot(zinv_ * g); }

  void update(const Vec& g) {
    z_.noalias() += g * g.transpose();
    const Vec zg = zinv_ * g;
    const double denom = 1.0 + g.dot(zg);
    zinv_.noalias() -= (zg * zg.transpose()) / denom;
    zinv_ = 0.5 * (zinv_ + zinv_.transpose());
  }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<SqMat> es(z_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  double condition_number() const {
    Eigen::SelfAdjointEigenSolver<SqMat> es(z_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  }

  nlohmann::json to_json() const {
    return {{"mu", mu_},
            {"dim", dim()},
            {"z", std::vector<double>(z_.data(), z_.data() + z_.size())},
            {"z_inv", std::vector<double>(zinv_.data(), zinv_.data() + zinv_.size())}};
  }

  static CovarianceState from_json(const nlohmann::json& j) {
    CovarianceState c(j.at("dim").get<int>(), j.at("mu").get<double>());
    const auto z = j.at("z").get<std::vector<double>>();
    const auto zi = j.at("z_inv").get<std::vector<double>>();
    if (z.size() != static_cast<std::size_t>(c.z_.size()) || zi.size() != z.size())
      throw BanditError("covariance checkpoint has wrong size");
    std::copy(z.begin(), z.end(), c.z_.data());
    std::copy(zi.begin(), zi.end(), c.zinv_.data());
    return c;
  }

 private:
  double mu_ = 1.0;
  SqMat z_, zinv_;
};

enum class EstimatorKind { Linear, Neural };
enum class ExplorerKind { EpsGreedy, Ucb, Thompson };

struct BanditSpec {
  EstimatorKind estimator = EstimatorKind::Linear;
  ExplorerKind explorer = ExplorerKind::Ucb;
  BanditHyper hyper;
};

// Argmax with ties broken toward the lowest index.
inline int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline int select_eps_greedy(std::span<const double> values, double eps, Rng& rng) {
  if (eps < 0 || eps > 1) throw BanditError("epsilon must be in [0,1]");
  if (values.empty()) throw BanditError("no actions to select from");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (eps > 0 && u(rng) < eps) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(values.size()) - 1);
    return pick(rng);
  }
  return argmax_lowest(values);
}

// Bonus sqrt(g^T Z^{-1} g) per action.
inline std::vector<double> ucb_bonus(std::span<const Vec> features, const CovarianceState& z) {
  std::vector<double> b;
  b.reserve(features.size());
  for (const auto& g : features) b.push_back(std::sqrt(std::max(0.0, z.quad(g))));
  return b;
}

inline int select_ucb(std::span<const double> values, std::span<const Vec> features,
                      const CovarianceState& z, double scale = 1.0) {
  if (values.size() != features.size()) throw BanditError("values/features size mismatch");
  const auto bonus = ucb_bonus(features, z);
  std::vector<double> score(values.size());
  for (std::size_t a = 0; a < values.size(); ++a) score[a] = values[a] + scale * bonus[a];
  return argmax_lowest(score);
}

// Independent normal draw per action with variance scale^2 g^T Z^{-1} g.
inline std::vector<double> thompson_draws(std::span<const double> values,
                                          std::span<const Vec> features,
                                          const CovarianceState& z, double scale, Rng& rng) {
  if (values.size() != features.size()) throw BanditError("values/features size mismatch");
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> q(values.size());
  for (std::size_t a = 0; a < values.size(); ++a) {
    const double var = z.quad(features[a]);
    if (var < -1e-12) throw BanditError("posterior variance is negative");
    q[a] = values[a] + scale * std::sqrt(std::max(0.0, var)) * n01(rng);
  }
  return q;
}

inline int select_thompson(std::span<const double> values, std::span<const Vec> features,
                           const CovarianceState& z, double scale, Rng& rng) {
  const auto q = thompson_draws(values, features, z, scale, rng);
  return argmax_lowest(q);
}

// Ridge regression on features g: theta = Z^{-1} b with Z = mu I + sum g g^T.
class LinearEstimator {
 public:
  LinearEstimator() = default;
  explicit LinearEstimator(int dim) : theta_(Vec::Zero(dim)), b_(Vec::Zero(dim)) {}

  int dim() const { return static_cast<int>(theta_.size()); }
  const Vec& theta() const { return theta_; }
  void set_theta(const Vec& t) { theta_ = t; }
  const Vec& moment() const { return b_; }

  double value(const Vec& g) const { return theta_.dot(g); }
  Vec features(const Vec& x) const { return x; }

  void observe(const Vec& g, double reward) { b_.noalias() += reward * g; }
  void solve(const CovarianceState& z) { theta_.noalias() = z.z_inv() * b_; }

  nlohmann::json to_json() const {
    return {{"theta", std::vector<double>(theta_.data(), theta_.data() + theta_.size())},
            {"b", std::vector<double>(b_.data(), b_.data() + b_.size())}};
  }
  static LinearEstimator from_json(const nlohmann::json& j) {
    const auto t = j.at("theta").get<std::vector<double>>();
    const auto b = j.at("b").get<std::vector<double>>();
    LinearEstimator e(static_cast<int>(t.size()));
    e.theta_ = Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size()));
    e.b_ = Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
    return e;
  }

 private:
  Vec theta_, b_;
};

struct FitResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

// Regression loss over a batch of (context, reward): mean 0.5 (r - Q)^2 +
// w * ||params||^2. Gradients are accumulated into the network.
template <class T>
double regression_loss(nn::BasicNetwork<T>& net, const nn::MatT<T>& x,
                       std::span<const double> rewards, double reg_weight) {
  const auto out = net.forward(x);
  const auto& q = out["q"];
  const auto n = static_cast<double>(rewards.size());
  nn::MatT<T> grad(q.rows(), 1);
  double loss = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double d = static_cast<double>(q(i, 0)) - rewards[i];
    loss += 0.5 * d * d / n;
    grad(i, 0) = static_cast<T>(d / n);
  }
  net.backward({grad});
  for (auto& p : net.params()) {
    loss += reg_weight * static_cast<double>(p.value.squaredNorm());
    p.grad += static_cast<T>(2.0 * reg_weight) * p.value;
  }
  return loss;
}

// Two-layer network Q(x) whose last hidden layer supplies the exploration
// features g.
class NeuralEstimator {
 public:
  using Net = nn::BasicNetwork<float>;

  NeuralEstimator() = default;
  NeuralEstimator(int input_dim, const BanditHyper& h, std::uint64_t seed)
      : net_(spec(input_dim, h.hidden), seed), opt_(h.lr), reg_(h.reg_weight) {}

  static nn::NetworkSpec spec(int input_dim, int hidden) {
    nn::NetworkSpec s;
    s.input_dim = input_dim;
    s.layers.push_back(nn::DenseSpec{input_dim, hidden, nn::Activation::Relu});
    s.layers.push_back(nn::DenseSpec{hidden, hidden, nn::Activation::Relu});
    s.heads.push_back({"q", 1, 1.0});
    return s;
  }

  int feature_dim() const { return net_.trunk_width(); }
  Net& net() { return net_; }
  const Net& net() const { return net_; }

  // Values and last-layer features of a set of contexts (one per row).
  std::pair<std::vector<double>, std::vector<Vec>> evaluate(const nn::MatF& x) const {
    const auto out = net_.infer(x);
    std::vector<double> q(x.rows());
    std::vector<Vec> g(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      q[i] = static_cast<double>(out["q"](i, 0));
      g[i] = out.trunk.row(i).transpose().cast<double>();
    }
    return {q, g};
  }

  FitResult fit(const nn::MatF& x, std::span<const double> rewards) {
    if (x.rows() == 0) throw BanditError("fit on an empty batch");
    net_.zero_grad();
    FitResult r;
    r.loss = regression_loss(net_, x, rewards, reg_);
    if (!std::isfinite(r.loss)) throw BanditError("non-finite bandit loss");
    r.grad_norm = net_.grad_norm();
    opt_.step(net_.params());
    return r;
  }

 private:
  Net net_;
  nn::BasicAdam<float> opt_;
  double reg_ = 0.0;
};

// One bandit over a fixed number of actions with per-action feature vectors.
class ContextualBandit {
 public:
  ContextualBandit(const BanditSpec& spec, int num_actions, int context_dim, std::uint64_t seed)
      : spec_(spec), actions_(num_actions), context_dim_(context_dim), rng_(make_rng(seed, 21)) {
    if (spec_.estimator == EstimatorKind::Linear) {
      linear_ = LinearEstimator(context_dim);
      cov_ = CovarianceState(context_dim, spec_.hyper.mu);
    } else {
      neural_ = NeuralEstimator(context_dim, spec_.hyper, mix_seed(seed, 22));
      cov_ = CovarianceState(neural_.feature_dim(), spec_.hyper.mu);
    }
  }

  const BanditSpec& spec() const { return spec_; }
  int num_actions() const { return actions_; }
  int context_dim() const { return context_dim_; }
  long decisions() const { return t_; }
  const CovarianceState& covariance() const { return cov_; }
  const LinearEstimator& linear() const { return linear_; }
  NeuralEstimator& neural() { return neural_; }
  Rng& rng() { return rng_; }

  double epsilon() const {
    const auto& h = spec_.hyper;
    return h.eps0 / (1.0 + static_cast<double>(t_) / h.eps_tau);
  }

  struct Estimate {
    std::vector<double> values;
    std::vector<Vec> features;
  };

  Estimate estimate(std::span<const Vec> contexts) const {
    check(contexts);
    Estimate e;
    if (spec_.estimator == EstimatorKind::Linear) {
      for (const auto& x : contexts) {
        e.features.push_back(linear_.features(x));
        e.values.push_back(linear_.value(e.features.back()));
      }
    } else {
      nn::MatF x(static_cast<Eigen::Index>(contexts.size()), context_dim_);
      for (std::size_t a = 0; a < contexts.size(); ++a) x.row(a) = contexts[a].cast<float>();
      auto [q, g] = neural_.evaluate(x);
      e.values = std::move(q);
      e.features = std::move(g);
    }
    return e;
  }

  // Exploring choice (explore = true) or greedy argmax.
  int select(std::span<const Vec> contexts, bool explore) {
    const Estimate e = estimate(contexts);
    if (!explore) return argmax_lowest(e.values);
    const double s = spec_.hyper.exploration_scale;
    switch (spec_.explorer) {
      case ExplorerKind::EpsGreedy: return select_eps_greedy(e.values, epsilon(), rng_);
      case ExplorerKind::Ucb: return select_ucb(e.values, e.features, cov_, s);
      case ExplorerKind::Thompson: return select_thompson(e.values, e.features, cov_, s, rng_);
    }
    return argmax_lowest(e.values);
  }

  // Records the reward of the chosen action and refits.
  FitResult learn(std::span<const Vec> contexts, int action, double reward) {
    check(contexts);
    if (action < 0 || action >= actions_) throw BanditError("action out of range");
    ++t_;
    const Vec& x = contexts[action];
    if (spec_.estimator == EstimatorKind::Linear) {
      cov_.update(x);
      linear_.observe(x, reward);
      linear_.solve(cov_);
      return {};
    }
    const auto [q, g] = neural_.evaluate(x.transpose().cast<float>());
    cov_.update(g[0]);
    window_x_.push_back(x);
    window_r_.push_back(reward);
    if (static_cast<int>(window_x_.size()) > spec_.hyper.window) {
      window_x_.pop_front();
      window_r_.pop_front();
    }
    FitResult last;
    const int n = static_cast<int>(window_x_.size());
    const int b = std::min(spec_.hyper.batch, n);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int s = 0; s < spec_.hyper.fit_steps; ++s) {
      nn::MatF xb(b, context_dim_);
      std::vector<double> rb(b);
      for (int i = 0; i < b; ++i) {
        const int j = pick(rng_);
        xb.row(i) = window_x_[j].transpose().cast<float>();
        rb[i] = window_r_[j];
      }
      last = neural_.fit(xb, rb);
    }
    return last;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"decisions", t_}, {"covariance", cov_.to_json()}};
    if (spec_.estimator == EstimatorKind::Linear)
      j["linear"] = linear_.to_json();
    else
      j["network"] = nn::to_json(neural_.net());
    return j;
  }

  void load_json(const nlohmann::json& j) {
    t_ = j.at("decisions").get<long>();
    cov_ = CovarianceState::from_json(j.at("covariance"));
    if (spec_.estimator == EstimatorKind::Linear) {
      linear_ = LinearEstimator::from_json(j.at("linear"));
      if (linear_.dim() != context_dim_) throw BanditError("checkpoint context dim mismatch");
    } else {
      neural_.net() = nn::network_from_json<float>(j.at("network"));
      if (neural_.net().spec().input_dim != context_dim_)
        throw BanditError("checkpoint context dim mismatch");
    }
  }

 private:
  void check(std::span<const Vec> contexts) const {
    if (static_cast<int>(contexts.size()) != actions_)
      throw BanditError("expected " + std::to_string(actions_) + " contexts, got " +
                        std::to_string(contexts.size()));
    for (const auto& c : contexts)
      if (c.size() != context_dim_) throw BanditError("context has wrong dimension");
  }

  BanditSpec spec_;
  int actions_, context_dim_;
  LinearEstimator linear_;
  NeuralEstimator neural_;
  CovarianceState cov_;
  Rng rng_;
  long t_ = 0;
  std::deque<Vec> window_x_;
  std::deque<double> window_r_;
};

// Divisors for the per-action context layout [size, intensity, deadline,
// H response times, H energies, H tx times].
inline std::vector<double> action_context_scales(const SystemConfig& cfg) {
  const auto s = feature_scales(cfg);
  const int h = cfg.history_window;
  const double t = s[3], e = s[3 + 2 * h];
  std::vector<double> out{s[0], s[1], s[2]};
  for (int i = 0; i < h; ++i) out.push_back(t);
  for (int i = 0; i < h; ++i) out.push_back(e);
  for (int i = 0; i < h; ++i) out.push_back(t);
  return out;
}

struct BanditAgentKind {
  std::string name;
  EstimatorKind estimator;
  ExplorerKind explorer;
};

inline const std::vector<BanditAgentKind>& bandit_kinds() {
  static const std::vector<BanditAgentKind> k{
      {"lin-ucb", EstimatorKind::Linear, ExplorerKind::Ucb},
      {"lin-ts", EstimatorKind::Linear, ExplorerKind::Thompson},
      {"nn-eps", EstimatorKind::Neural, ExplorerKind::EpsGreedy},
      {"nn-ucb", EstimatorKind::Neural, ExplorerKind::Ucb},
      {"nn-ts", EstimatorKind::Neural, ExplorerKind::Thompson}};
  return k;
}

// One independent bandit per user. Each user's context for action a is its
// normalized per-action history followed by a one-hot action indicator.
class DsmabAgent {
 public:
  DsmabAgent(const std::string& name, const SystemConfig& cfg, std::uint64_t seed)
      : name_(name),
        users_(cfg.num_users),
        actions_(cfg.num_actions()),
        obs_dim_(cfg.observation_dim),
        scales_(action_context_scales(cfg)) {
    const auto& kinds = bandit_kinds();
    const auto it = std::find_if(kinds.begin(), kinds.end(),
                                 [&](const BanditAgentKind& k) { return k.name == name; });
    if (it == kinds.end()) throw BanditError("unknown bandit agent " + name);
    spec_ = BanditSpec{it->estimator, it->explorer, cfg.bandit};
    for (int u = 0; u < users_; ++u)
      bandits_.emplace_back(spec_, actions_, context_dim(), mix_seed(seed, 100 + u));
  }

  const std::string& name() const { return name_; }
  int num_users() const { return users_; }
  int num_actions() const { return actions_; }
  int context_dim() const { return obs_dim_ + actions_; }
  ContextualBandit& bandit(int u) { return bandits_.at(u); }
  const std::vector<double>& scales() const { return scales_; }
  void set_scales(std::vector<double> s) {
    if (static_cast<int>(s.size()) != obs_dim_) throw BanditError("scale vector has wrong length");
    scales_ = std::move(s);
  }

  std::vector<Vec> contexts(const OffloadEnv& env, int u) const {
    const auto raw = env.action_contexts(u);
    std::vector<Vec> out(actions_);
    for (int a = 0; a < actions_; ++a) {
      Vec x = Vec::Zero(context_dim());
      for (int i = 0; i < obs_dim_; ++i) x[i] = raw[a][i] / scales_[i];
      x[obs_dim_ + a] = 1.0;
      out[a] = std::move(x);
    }
    return out;
  }

  JointAction act(const OffloadEnv& env, bool explore) {
    JointAction j(users_);
    for (int u = 0; u < users_; ++u) j[u] = Action{bandits_[u].select(contexts(env, u), explore)};
    return j;
  }

  nlohmann::json header() const {
    return {{"format", "mecsim-checkpoint"}, {"version", 1}, {"agent", name_},
            {"num_users", users_},           {"num_actions", actions_},
            {"context_dim", context_dim()},  {"scales", scales_}};
  }

  nlohmann::json user_json(int u) const { return bandits_.at(u).to_json(); }
  void load_user(int u, const nlohmann::json& j) { bandits_.at(u).load_json(j); }

 private:
  std::string name_;
  int users_, actions_, obs_dim_;
  std::vector<double> scales_;
  BanditSpec spec_;
  std::vector<ContextualBandit> bandits_;
};

// Online learning: every user updates its own bandit after every decision.
inline std::vector<EpisodeStats> train_bandit(
    OffloadEnv& env, DsmabAgent& agent, int episodes, std::uint64_t seed,
    const std::function<void(const EpisodeStats&)>& on_episode = {}) {
  const int k = env.num_users();
  std::vector<EpisodeStats> log;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(train_episode_seed(seed, ep), ep);
    EpisodeStats s;
    s.episode = ep;
    s.update = true;
    double n = 0, fit_loss = 0, fits = 0;
    while (!env.done()) {
      std::vector<std::vector<Vec>> ctx(k);
      for (int u = 0; u < k; ++u) ctx[u] = agent.contexts(env, u);
      JointAction j(k);
      for (int u = 0; u < k; ++u) j[u] = Action{agent.bandit(u).select(ctx[u], true)};
      const StepResult r = env.step(j);
      for (int u = 0; u < k; ++u) {
        const auto& rec = r.records[u];
        const FitResult f = agent.bandit(u).learn(ctx[u], j[u].choice, rec.reward);
        fit_loss += f.loss;
        fits += 1;
        s.mean_reward += rec.reward;
        s.mean_response_s += rec.response_time_s;
        s.mean_energy_j += rec.energy_j;
        s.violation_rate += rec.violated() ? 1.0 : 0.0;
        n += 1;
      }
    }
    s.mean_reward /= n;
    s.mean_response_s /= n;
    s.mean_energy_j /= n;
    s.violation_rate /= n;
    s.entropy = std::nan("");
    s.losses.policy_loss = std::nan("");
    s.losses.value_loss = fit_loss / fits;
    s.losses.aux_kl = std::nan("");
    s.losses.aux_value_loss = std::nan("");
    const auto& l = env.lambdas();
    s.lambda_mean = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
    s.lambda_min = *std::min_element(l.begin(), l.end());
    s.lambda_max = *std::max_element(l.begin(), l.end());
    if (on_episode) on_episode(s);
    log.push_back(s);
  }
  return log;
}

}  // namespace mecsim
