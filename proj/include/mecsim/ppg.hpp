#pragma once

// Centralized (CPPG) and independent (IPPG) phasic policy-gradient agents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mecsim/config.hpp"
#include "mecsim/env.hpp"
#include "mecsim/losses.hpp"
#include "mecsim/nn.hpp"
#include "mecsim/util.hpp"

namespace mecsim {

using nn::Mat;
using nn::MatF;
using PolicyNet = nn::BasicNetwork<float>;
using PolicyAdam = nn::BasicAdam<float>;

enum class PpgKind { Centralized, Independent };

inline const char* to_string(PpgKind k) {
  return k == PpgKind::Centralized ? "cppg" : "ippg";
}

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, nlohmann::json diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const nlohmann::json& diagnostics() const { return diagnostics_; }

 private:
  nlohmann::json diagnostics_;
};

// Transitions of the current update window, one row per environment step.
// Under gamma = 0 the value target of a transition is its reward.
class ReplayBuffer {
 public:
  ReplayBuffer(int users, int obs_dim, int actions)
      : users_(users), obs_dim_(obs_dim), actions_(actions) {}

  int users() const { return users_; }
  int obs_dim() const { return obs_dim_; }
  int actions() const { return actions_; }
  std::size_t size() const { return rewards_.size() / users_; }
  bool empty() const { return rewards_.empty(); }

  // `state` holds users*obs_dim normalized features, `probs` users*actions.
  void push(std::span<const double> state, std::span<const int> taken,
            std::span<const double> logp, std::span<const double> probs,
            std::span<const double> rewards, std::span<const double> slack) {
    const auto k = static_cast<std::size_t>(users_);
    if (state.size() != k * obs_dim_ || taken.size() != k || logp.size() != k ||
        probs.size() != k * actions_ || rewards.size() != k || slack.size() != k)
      throw std::invalid_argument("ReplayBuffer::push: shape mismatch");
    states_.insert(states_.end(), state.begin(), state.end());
    taken_.insert(taken_.end(), taken.begin(), taken.end());
    logp_.insert(logp_.end(), logp.begin(), logp.end());
    probs_.insert(probs_.end(), probs.begin(), probs.end());
    rewards_.insert(rewards_.end(), rewards.begin(), rewards.end());
    slack_.insert(slack_.end(), slack.begin(), slack.end());
  }

  void clear() {
    states_.clear();
    taken_.clear();
    logp_.clear();
    probs_.clear();
    rewards_.clear();
    slack_.clear();
  }

  const std::vector<double>& states() const { return states_; }
  const std::vector<int>& taken() const { return taken_; }
  const std::vector<double>& logp() const { return logp_; }
  const std::vector<double>& probs() const { return probs_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const std::vector<double>& value_targets() const { return rewards_; }
  const std::vector<double>& slack() const { return slack_; }

 private:
  int users_, obs_dim_, actions_;
  std::vector<double> states_;
  std::vector<int> taken_;
  std::vector<double> logp_, probs_, rewards_, slack_;
};

// Per-user Lagrange multipliers of the deadline constraint.
struct DeadlineCoeffs {
  std::vector<double> lambda;
  double lr = 0.05;
};

// One projected sub-gradient step per user: lambda grows when the mean
// deadline slack is negative and shrinks otherwise, never below zero.
inline void lambda_step(DeadlineCoeffs& coeffs, std::span<const double> mean_slack) {
  if (mean_slack.size() != coeffs.lambda.size())
    throw std::invalid_argument("lambda_step: one slack per user expected");
  for (std::size_t k = 0; k < coeffs.lambda.size(); ++k)
    coeffs.lambda[k] = std::max(0.0, coeffs.lambda[k] - coeffs.lr * mean_slack[k]);
}

inline void lambda_phase(DeadlineCoeffs& coeffs, std::span<const StepRecord> records,
                         int epochs = 1) {
  std::vector<double> sum(coeffs.lambda.size(), 0.0), n(coeffs.lambda.size(), 0.0);
  for (const auto& r : records) {
    if (r.user < 0 || r.user >= static_cast<int>(sum.size()))
      throw std::invalid_argument("lambda_phase: record user out of range");
    sum[r.user] += r.deadline_slack_s;
    n[r.user] += 1;
  }
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = n[k] > 0 ? sum[k] / n[k] : 0.0;
  for (int e = 0; e < epochs; ++e) lambda_step(coeffs, sum);
}

struct Decision {
  JointAction actions;
  std::vector<double> logp;     // log pi(u_k | s) of the chosen actions
  std::vector<double> probs;    // users x actions
  std::vector<double> entropy;  // per user
  std::vector<double> state;    // normalized input features, users x obs_dim
};

struct UpdateStats {
  double policy_loss = 0, value_loss = 0, aux_kl = 0, aux_value_loss = 0;
  double clip_fraction = 0, entropy = 0;
};

inline nn::NetworkSpec ppg_network_spec(PpgKind kind, int users, int obs_dim, int actions,
                                        const PPGHyper& h, bool actor) {
  using namespace nn;
  NetworkSpec s;
  const int heads = kind == PpgKind::Centralized ? users : 1;
  if (kind == PpgKind::Centralized) {
    s.input_dim = users * obs_dim;
    s.layers.push_back(Conv1dSpec{users, obs_dim, h.hidden, h.conv_kernel, Activation::Relu});
    s.layers.push_back(DenseSpec{users * h.hidden, h.hidden, Activation::Relu});
  } else {
    s.input_dim = obs_dim;
    s.layers.push_back(DenseSpec{obs_dim, h.hidden, Activation::Relu});
    s.layers.push_back(DenseSpec{h.hidden, h.hidden, Activation::Relu});
  }
  if (actor) {
    s.heads.push_back({"pi", heads * actions, 0.01});
    s.heads.push_back({"aux", heads, 1.0});
  } else {
    s.heads.push_back({"v", heads, 1.0});
  }
  return s;
}

class PpgAgent {
 public:
  PpgAgent(PpgKind kind, const SystemConfig& cfg, std::uint64_t seed)
      : kind_(kind),
        users_(cfg.num_users),
        obs_dim_(cfg.observation_dim),
        actions_(cfg.num_actions()),
        hyper_(cfg.ppg),
        scales_(feature_scales(cfg)),
        actor_(ppg_network_spec(kind, users_, obs_dim_, actions_, hyper_, true),
               mix_seed(seed, 11)),
        critic_(ppg_network_spec(kind, users_, obs_dim_, actions_, hyper_, false),
                mix_seed(seed, 12)),
        actor_opt_(hyper_.lr),
        critic_opt_(hyper_.lr),
        coeffs_{std::vector<double>(users_, cfg.lambda_init), hyper_.lambda_lr},
        rng_(make_rng(seed, 13)) {}

  PpgKind kind() const { return kind_; }
  int num_users() const { return users_; }
  int num_actions() const { return actions_; }
  int obs_dim() const { return obs_dim_; }
  const PPGHyper& hyper() const { return hyper_; }
  PolicyNet& actor() { return actor_; }
  PolicyNet& critic() { return critic_; }
  const PolicyNet& actor() const { return actor_; }
  const PolicyNet& critic() const { return critic_; }
  const std::vector<double>& scales() const { return scales_; }
  const std::vector<double>& lambdas() const { return coeffs_.lambda; }
  DeadlineCoeffs& coeffs() { return coeffs_; }
  Rng& rng() { return rng_; }

  std::vector<double> normalize(const std::vector<Observation>& obs) const {
    if (static_cast<int>(obs.size()) != users_)
      throw std::invalid_argument("agent expects " + std::to_string(users_) +
                                  " observations, got " + std::to_string(obs.size()));
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(users_) * obs_dim_);
    for (const auto& o : obs) {
      if (static_cast<int>(o.size()) != obs_dim_)
        throw std::invalid_argument("observation has wrong length");
      for (int i = 0; i < obs_dim_; ++i) x.push_back(o[i] / scales_[i]);
    }
    return x;
  }

  // Samples (rng != nullptr) or takes the per-user argmax (rng == nullptr).
  Decision act(const std::vector<Observation>& obs, Rng* rng) const {
    Decision d;
    d.state = normalize(obs);
    const Mat logits = policy_logits(d.state);
    d.actions.resize(users_);
    d.logp.resize(users_);
    d.entropy.resize(users_);
    d.probs.resize(static_cast<std::size_t>(users_) * actions_);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int k = 0; k < users_; ++k) {
      const double* z = logits.data() + static_cast<std::size_t>(k) * actions_;
      const auto se = nn::softmax_entropy(std::span<const double>(z, actions_));
      int a = 0;
      if (rng) {
        const double u = unif(*rng);
        double acc = 0;
        a = actions_ - 1;
        for (int j = 0; j < actions_; ++j) {
          acc += se.probs[j];
          if (u < acc) {
            a = j;
            break;
          }
        }
      } else {
        a = static_cast<int>(std::max_element(se.probs.begin(), se.probs.end()) -
                             se.probs.begin());
      }
      d.actions[k] = Action{a};
      d.logp[k] = std::log(se.probs[a]);
      d.entropy[k] = se.entropy;
      std::copy(se.probs.begin(), se.probs.end(), d.probs.begin() + k * actions_);
    }
    return d;
  }

  // Policy, dual-clip, auxiliary and coefficient phases on one window.
  UpdateStats update(const ReplayBuffer& buf) {
    if (buf.empty()) throw std::invalid_argument("update on an empty replay buffer");
    const Batch all = make_batch(buf);
    const Eigen::Index n = all.x.rows();
    UpdateStats st;

    // Advantages against the critic that was current during the rollout.
    Mat adv = all.targ - critic_.infer(all.x)["v"].cast<double>();
    if (hyper_.normalize_advantages && adv.size() > 1) {
      const double mean = adv.mean();
      const double sd = std::sqrt((adv.array() - mean).square().mean());
      adv = (adv.array() - mean) / (sd + 1e-8);
    }

    const int heads = heads_per_row();
    const auto mb = static_cast<Eigen::Index>(std::min<long>(hyper_.minibatch, n));
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    for (int it = 0; it < hyper_.n_policy; ++it) {
      // uniform random minibatch without replacement
      for (Eigen::Index i = 0; i < mb; ++i) {
        std::uniform_int_distribution<Eigen::Index> d(i, n - 1);
        std::swap(idx[i], idx[d(rng_)]);
      }
      const std::span<const Eigen::Index> sel(idx.data(), mb);
      const Batch b = all.rows(sel);
      const Mat a = gather(adv, sel);

      actor_.zero_grad();
      const auto out = actor_.forward(b.x);
      const auto pl = losses::policy_loss(out["pi"].cast<double>(), heads, actions_, b.taken, b.old_logp, a,
                                          hyper_.clip_eps, hyper_.dual_clip,
                                          hyper_.entropy_weight);
      actor_.backward({pl.grad_logits.cast<float>(), MatF()});
      apply(actor_, actor_opt_, "policy", pl.loss);

      critic_.zero_grad();
      const auto vo = critic_.forward(b.x);
      const auto vl = losses::value_loss(vo["v"].cast<double>(), b.targ);
      critic_.backward({vl.grad.cast<float>()});
      apply(critic_, critic_opt_, "value", vl.loss);

      st.policy_loss = pl.loss;
      st.value_loss = vl.loss;
      st.clip_fraction = pl.clip_fraction;
      st.entropy = pl.entropy / heads;
    }

    for (int it = 0; it < hyper_.n_aux; ++it) {
      std::shuffle(idx.begin(), idx.end(), rng_);
      double kl = 0, aux = 0, vloss = 0;
      for (Eigen::Index s = 0; s < n; s += mb) {
        const Eigen::Index len = std::min(mb, n - s);
        const std::span<const Eigen::Index> sel(idx.data() + s, len);
        const Batch b = all.rows(sel);
        const double w = static_cast<double>(len) / static_cast<double>(n);

        critic_.zero_grad();
        const auto vo = critic_.forward(b.x);
        const auto vl = losses::value_loss(vo["v"].cast<double>(), b.targ);
        critic_.backward({vl.grad.cast<float>()});
        apply(critic_, critic_opt_, "value", vl.loss);

        actor_.zero_grad();
        const auto out = actor_.forward(b.x);
        const auto jl =
            losses::joint_aux_loss(out["pi"].cast<double>(), heads, actions_, b.old_probs,
                                   out["aux"].cast<double>(), b.targ);
        actor_.backward({jl.grad_logits.cast<float>(), jl.grad_aux.cast<float>()});
        apply(actor_, actor_opt_, "joint", jl.loss);

        kl += w * jl.kl;
        aux += w * jl.aux;
        vloss += w * vl.loss;
      }
      st.aux_kl = kl;
      st.aux_value_loss = aux;
      st.value_loss = vloss;
    }

    std::vector<double> mean_slack(users_, 0.0);
    const std::size_t steps = buf.size();
    for (std::size_t t = 0; t < steps; ++t)
      for (int k = 0; k < users_; ++k) mean_slack[k] += buf.slack()[t * users_ + k];
    for (double& s : mean_slack) s /= static_cast<double>(steps);
    for (int it = 0; it < hyper_.n_lambda; ++it) lambda_step(coeffs_, mean_slack);
    return st;
  }

  nlohmann::json checkpoint() const {
    return {{"format", "mecsim-checkpoint"},
            {"version", 1},
            {"agent", to_string(kind_)},
            {"num_users", users_},
            {"num_actions", actions_},
            {"obs_dim", obs_dim_},
            {"scales", scales_},
            {"lambda", coeffs_.lambda},
            {"lambda_lr", coeffs_.lr},
            {"actor", nn::to_json(actor_)},
            {"critic", nn::to_json(critic_)}};
  }

  // Restores networks and coefficients; the config supplies dimensions and
  // hyperparameters and must agree with the checkpoint.
  static PpgAgent from_checkpoint(const nlohmann::json& j, const SystemConfig& cfg) {
    const std::string name = j.at("agent").get<std::string>();
    const PpgKind kind = name == "cppg" ? PpgKind::Centralized : PpgKind::Independent;
    if (name != "cppg" && name != "ippg") throw std::invalid_argument("not a PPG checkpoint: " + name);
    PpgAgent a(kind, cfg, 0);
    a.actor_ = nn::network_from_json<float>(j.at("actor"));
    a.critic_ = nn::network_from_json<float>(j.at("critic"));
    a.scales_ = j.at("scales").get<std::vector<double>>();
    a.coeffs_.lambda = j.at("lambda").get<std::vector<double>>();
    a.coeffs_.lr = j.at("lambda_lr").get<double>();
    if (a.actor_.spec().input_dim != a.actor_input_dim())
      throw std::invalid_argument("checkpoint network does not match config dimensions");
    return a;
  }

 private:
  struct Batch {
    MatF x;
    Mat old_logp, old_probs, targ;
    Eigen::MatrixXi taken;

    Batch rows(std::span<const Eigen::Index> sel) const {
      Batch b;
      const auto n = static_cast<Eigen::Index>(sel.size());
      b.x.resize(n, x.cols());
      b.old_logp.resize(n, old_logp.cols());
      b.old_probs.resize(n, old_probs.cols());
      b.targ.resize(n, targ.cols());
      b.taken.resize(n, taken.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        b.x.row(i) = x.row(sel[i]);
        b.old_logp.row(i) = old_logp.row(sel[i]);
        b.old_probs.row(i) = old_probs.row(sel[i]);
        b.targ.row(i) = targ.row(sel[i]);
        b.taken.row(i) = taken.row(sel[i]);
      }
      return b;
    }
  };

  int heads_per_row() const { return kind_ == PpgKind::Centralized ? users_ : 1; }
  int actor_input_dim() const {
    return kind_ == PpgKind::Centralized ? users_ * obs_dim_ : obs_dim_;
  }

  static Mat gather(const Mat& m, std::span<const Eigen::Index> sel) {
    Mat out(static_cast<Eigen::Index>(sel.size()), m.cols());
    for (std::size_t i = 0; i < sel.size(); ++i) out.row(i) = m.row(sel[i]);
    return out;
  }

  // Rows are environment steps (centralized) or (step, user) pairs.
  Batch make_batch(const ReplayBuffer& buf) const {
    const int h = heads_per_row();
    const auto rows = static_cast<Eigen::Index>(buf.size() * (users_ / h));
    const int in = actor_input_dim();
    Batch b;
    b.x = ConstMap(buf.states().data(), rows, in).cast<float>();
    b.old_logp = ConstMap(buf.logp().data(), rows, h);
    b.old_probs = ConstMap(buf.probs().data(), rows, h * actions_);
    b.targ = ConstMap(buf.value_targets().data(), rows, h);
    b.taken = Eigen::Map<const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        buf.taken().data(), rows, h);
    return b;
  }
  using ConstMap = nn::ConstMatMap;

  Mat policy_logits(const std::vector<double>& state) const {
    const int h = heads_per_row();
    const MatF x = ConstMap(state.data(), users_ / h, actor_input_dim()).cast<float>();
    return actor_.infer(x)["pi"].cast<double>();
  }

  void apply(PolicyNet& net, PolicyAdam& opt, const char* phase, double loss) {
    if (!std::isfinite(loss)) {
      throw TrainingAborted(std::string("non-finite ") + phase + " loss",
                            {{"phase", phase}, {"loss", fmt_double(loss)},
                             {"lambda", coeffs_.lambda}});
    }
    net.clip_grad_norm(hyper_.max_grad_norm);
    try {
      opt.step(net.params());
    } catch (const nn::NonFiniteError& e) {
      throw TrainingAborted(e.what(), {{"phase", phase}, {"lambda", coeffs_.lambda}});
    }
  }

  PpgKind kind_;
  int users_, obs_dim_, actions_;
  PPGHyper hyper_;
  std::vector<double> scales_;
  PolicyNet actor_, critic_;
  PolicyAdam actor_opt_, critic_opt_;
  DeadlineCoeffs coeffs_;
  Rng rng_;
};

// Training-log schema, one row per episode.
inline constexpr const char* kTrainLogHeader =
    "episode,update,mean_reward,mean_response_s,mean_energy_j,violation_rate,entropy,"
    "policy_loss,value_loss,aux_kl,aux_value_loss,lambda_mean,lambda_min,lambda_max";

struct EpisodeStats {
  int episode = 0;
  bool update = false;
  double mean_reward = 0, mean_response_s = 0, mean_energy_j = 0, violation_rate = 0;
  double entropy = 0;
  UpdateStats losses;
  double lambda_mean = 0, lambda_min = 0, lambda_max = 0;
};

inline void write_train_row(std::ostream& out, const EpisodeStats& s) {
  const double nan = std::nan("");
  out << s.episode << ',' << (s.update ? 1 : 0) << ',' << fmt_double(s.mean_reward) << ','
      << fmt_double(s.mean_response_s) << ',' << fmt_double(s.mean_energy_j) << ','
      << fmt_double(s.violation_rate) << ',' << fmt_double(s.entropy) << ','
      << fmt_double(s.update ? s.losses.policy_loss : nan) << ','
      << fmt_double(s.update ? s.losses.value_loss : nan) << ','
      << fmt_double(s.update ? s.losses.aux_kl : nan) << ','
      << fmt_double(s.update ? s.losses.aux_value_loss : nan) << ','
      << fmt_double(s.lambda_mean) << ',' << fmt_double(s.lambda_min) << ','
      << fmt_double(s.lambda_max) << '\n';
}

inline std::uint64_t train_episode_seed(std::uint64_t seed, int episode) {
  return mix_seed(seed, 0x7261696eULL + static_cast<std::uint64_t>(episode));
}

// Rollouts with the sampling policy; every n_update episodes the three
// training phases run on the window and the buffer is cleared.
inline std::vector<EpisodeStats> train_ppg(
    OffloadEnv& env, PpgAgent& agent, int episodes, std::uint64_t seed,
    const std::function<void(const EpisodeStats&)>& on_episode = {}) {
  const int k = env.num_users();
  ReplayBuffer buf(k, env.obs_dim(), env.num_actions());
  std::vector<EpisodeStats> log;
  std::vector<int> taken(k);
  std::vector<double> slack(k);
  for (int ep = 0; ep < episodes; ++ep) {
    env.set_lambdas(agent.lambdas());
    auto obs = env.reset(train_episode_seed(seed, ep), ep);
    EpisodeStats s;
    s.episode = ep;
    double n = 0;
    while (!env.done()) {
      const Decision d = agent.act(obs, &agent.rng());
      StepResult r = env.step(d.actions);
      for (int u = 0; u < k; ++u) {
        taken[u] = d.actions[u].choice;
        slack[u] = r.records[u].deadline_slack_s;
        const auto& rec = r.records[u];
        s.mean_reward += rec.reward;
        s.mean_response_s += rec.response_time_s;
        s.mean_energy_j += rec.energy_j;
        s.violation_rate += rec.violated() ? 1.0 : 0.0;
        s.entropy += d.entropy[u];
        n += 1;
      }
      buf.push(d.state, taken, d.logp, d.probs, r.rewards, slack);
      obs = std::move(r.observations);
    }
    s.mean_reward /= n;
    s.mean_response_s /= n;
    s.mean_energy_j /= n;
    s.violation_rate /= n;
    s.entropy /= n;
    if ((ep + 1) % agent.hyper().n_update == 0) {
      s.update = true;
      s.losses = agent.update(buf);
      buf.clear();
    }
    const auto& l = agent.lambdas();
    s.lambda_mean = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
    s.lambda_min = *std::min_element(l.begin(), l.end());
    s.lambda_max = *std::max_element(l.begin(), l.end());
    if (on_episode) on_episode(s);
    log.push_back(s);
  }
  return log;
}

}  // namespace mecsim
