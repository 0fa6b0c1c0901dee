#pragma once

// Multi-user, multi-connectivity offloading environment with a gym-like
// reset/step interface.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mecsim/config.hpp"
#include "mecsim/mec.hpp"
#include "mecsim/models.hpp"
#include "mecsim/traces.hpp"
#include "mecsim/util.hpp"

namespace mecsim {

// Per-user features: [size, intensity, deadline, H tx times, H response
// times, H energies], histories most-recent-first.
using Observation = std::vector<double>;

struct StepRecord {
  int episode = 0;
  int step = 0;
  int user = 0;
  Action action;
  Task task;
  double tx_time_s = 0.0;
  double exec_time_s = 0.0;
  double rx_time_s = 0.0;
  double response_time_s = 0.0;
  double energy_j = 0.0;
  double efficiency = 0.0;
  double reward = 0.0;
  double deadline_slack_s = 0.0;
  double mec_share_bps = 0.0;
  double lambda = 0.0;

  bool violated() const { return deadline_slack_s < 0; }
  bool operator==(const StepRecord&) const = default;
};

struct StepResult {
  std::vector<Observation> observations;
  std::vector<double> rewards;
  std::vector<StepRecord> records;
  bool done = false;
};

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed per-feature divisors that bring observations to O(1) for learners.
inline std::vector<double> feature_scales(const SystemConfig& cfg) {
  const auto& g = cfg.task_gen;
  double mean_size = 0, wsum = 0;
  for (int l = 0; l < kNumQualityLayers; ++l) {
    mean_size += g.layer_weights[l] * g.layer_size_mean_bits[l];
    wsum += g.layer_weights[l];
  }
  mean_size = mean_size / wsum * g.size_scale;
  const double energy_ref =
      local_energy(mean_size, g.intensity.mean_cpb, cfg.compute.user_cpu_freq_hz,
                   cfg.compute.cpu_capacitance);
  const int h = cfg.history_window;
  std::vector<double> s;
  s.push_back(mean_size);
  s.push_back(g.intensity.mean_cpb);
  s.push_back(g.deadline_s);
  for (int i = 0; i < h; ++i) s.push_back(g.deadline_s);
  for (int i = 0; i < h; ++i) s.push_back(g.deadline_s);
  for (int i = 0; i < h; ++i) s.push_back(energy_ref);
  return s;
}

class OffloadEnv {
 public:
  OffloadEnv(SystemConfig cfg, std::shared_ptr<const TraceSet> traces)
      : cfg_(std::move(cfg)), traces_(std::move(traces)) {
    require_valid(cfg_);
    if (!traces_ || static_cast<int>(traces_->uplink.size()) != cfg_.num_channels ||
        static_cast<int>(traces_->downlink.size()) != cfg_.num_channels)
      throw EnvError("trace set does not match channel count");
    lambdas_.assign(cfg_.num_users, cfg_.lambda_init);
  }

  explicit OffloadEnv(const SystemConfig& cfg) : OffloadEnv(cfg, build_traces(cfg)) {}

  const SystemConfig& config() const { return cfg_; }
  const TraceSet& traces() const { return *traces_; }
  std::shared_ptr<const TraceSet> shared_traces() const { return traces_; }
  int num_users() const { return cfg_.num_users; }
  int num_actions() const { return cfg_.num_actions(); }
  int obs_dim() const { return cfg_.observation_dim; }
  int step_index() const { return step_; }
  int episode() const { return episode_; }
  bool done() const { return step_ >= cfg_.episode_len; }
  const std::vector<Task>& tasks() const { return tasks_; }
  const std::vector<double>& lambdas() const { return lambdas_; }

  // Deadline coefficients used in rewards until changed.
  void set_lambdas(std::span<const double> l) {
    if (static_cast<int>(l.size()) != cfg_.num_users)
      throw EnvError("set_lambdas: expected one coefficient per user");
    lambdas_.assign(l.begin(), l.end());
  }

  std::vector<Observation> reset(std::uint64_t seed, int episode = 0) {
    const int k = cfg_.num_users, a = cfg_.num_actions(), h = cfg_.history_window;
    episode_ = episode;
    step_ = 0;
    user_rng_.clear();
    for (int u = 0; u < k; ++u) user_rng_.push_back(make_rng(seed, 1 + u));
    Rng offs = make_rng(seed, 0);
    offsets_.assign(static_cast<std::size_t>(k) * cfg_.num_channels, 0.0);
    for (int u = 0; u < k; ++u) {
      for (int c = 0; c < cfg_.num_channels; ++c) {
        std::uniform_real_distribution<double> d(0.0, traces_->uplink[c].duration());
        offsets_[u * cfg_.num_channels + c] = d(offs);
      }
    }
    hist_tx_.assign(static_cast<std::size_t>(k) * h, 0.0);
    hist_resp_.assign(static_cast<std::size_t>(k) * h, 0.0);
    hist_energy_.assign(static_cast<std::size_t>(k) * h, 0.0);
    act_resp_.assign(static_cast<std::size_t>(k) * a * h, 0.0);
    act_energy_.assign(static_cast<std::size_t>(k) * a * h, 0.0);
    act_tx_.assign(static_cast<std::size_t>(k) * a * h, 0.0);
    tasks_.resize(k);
    for (int u = 0; u < k; ++u) tasks_[u] = sample_task(cfg_.task_gen, user_rng_[u]);
    return observations();
  }

  std::vector<Observation> observations() const {
    std::vector<Observation> out(cfg_.num_users);
    for (int u = 0; u < cfg_.num_users; ++u) out[u] = observation(u);
    return out;
  }

  Observation observation(int u) const {
    const int h = cfg_.history_window;
    Observation o;
    o.reserve(cfg_.observation_dim);
    o.push_back(tasks_[u].size_bits);
    o.push_back(tasks_[u].intensity_cpb);
    o.push_back(tasks_[u].deadline_s);
    for (int i = 0; i < h; ++i) o.push_back(hist_tx_[u * h + i]);
    for (int i = 0; i < h; ++i) o.push_back(hist_resp_[u * h + i]);
    for (int i = 0; i < h; ++i) o.push_back(hist_energy_[u * h + i]);
    return o;
  }

  // Per-action context: [size, intensity, deadline, H response times, H
  // energies, H tx times], histories only of decisions that took the action.
  std::vector<std::vector<double>> action_contexts(int u) const {
    const int h = cfg_.history_window, a_count = cfg_.num_actions();
    std::vector<std::vector<double>> out(a_count);
    for (int a = 0; a < a_count; ++a) {
      auto& x = out[a];
      x.reserve(cfg_.observation_dim);
      x.push_back(tasks_[u].size_bits);
      x.push_back(tasks_[u].intensity_cpb);
      x.push_back(tasks_[u].deadline_s);
      const std::size_t base = (static_cast<std::size_t>(u) * a_count + a) * h;
      for (int i = 0; i < h; ++i) x.push_back(act_resp_[base + i]);
      for (int i = 0; i < h; ++i) x.push_back(act_energy_[base + i]);
      for (int i = 0; i < h; ++i) x.push_back(act_tx_[base + i]);
    }
    return out;
  }

  // Uplink rate of channel `c` (1-based) for user `u`, averaged over the
  // epoch preceding the current step.
  double recent_rate(int u, int c) const {
    const double x = offsets_[u * cfg_.num_channels + (c - 1)] + step_ * cfg_.epoch_s;
    const auto& tr = traces_->uplink[c - 1];
    const double a = x >= cfg_.epoch_s ? x - cfg_.epoch_s : x;
    return tr.avg_rate(a, a + cfg_.epoch_s);
  }

  // Outcome of a joint action on the pending tasks, without advancing.
  std::vector<StepRecord> evaluate(std::span<const Action> actions) const {
    const int k = cfg_.num_users;
    if (done()) throw EnvError("step on a terminated episode");
    if (static_cast<int>(actions.size()) != k)
      throw EnvError("joint action has " + std::to_string(actions.size()) +
                     " entries, expected " + std::to_string(k));
    for (const auto& a : actions) {
      if (a.choice < 0 || a.choice > cfg_.num_channels)
        throw EnvError("action " + std::to_string(a.choice) + " out of range [0," +
                       std::to_string(cfg_.num_channels) + "]");
    }
    const auto& m = cfg_.compute;
    const double t0 = step_ * cfg_.epoch_s;
    std::vector<StepRecord> rec(k);
    std::vector<MecJob> jobs;
    std::vector<int> job_user;
    for (int u = 0; u < k; ++u) {
      auto& r = rec[u];
      const Task& task = tasks_[u];
      r.episode = episode_;
      r.step = step_;
      r.user = u;
      r.action = actions[u];
      r.task = task;
      r.lambda = lambdas_[u];
      if (actions[u].local()) {
        r.exec_time_s = exec_time(task.size_bits, task.intensity_cpb, m.user_speed_bps,
                                  m.reference_intensity_cpb);
        r.energy_j = local_energy(task.size_bits, task.intensity_cpb,
                                  m.user_cpu_freq_hz, m.cpu_capacitance);
      } else {
        const int c = actions[u].channel() - 1;
        const double start = offsets_[u * cfg_.num_channels + c] + t0;
        r.tx_time_s = traces_->uplink[c].solve_tx_end(start, task.size_bits) - start;
        jobs.push_back({r.tx_time_s,
                        reference_work(task.size_bits, task.intensity_cpb,
                                       m.reference_intensity_cpb)});
        job_user.push_back(u);
      }
    }
    const MecSchedule sched = share_processor(jobs, m.mec_total_speed_bps);
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const int u = job_user[j];
      auto& r = rec[u];
      const Task& task = tasks_[u];
      const int c = r.action.channel() - 1;
      const auto& ch = cfg_.channels[c];
      r.exec_time_s = sched.completion_s[j] - jobs[j].arrival_s;
      r.mec_share_bps = sched.mean_share_bps[j];
      const double rx_start = offsets_[u * cfg_.num_channels + c] + t0 + sched.completion_s[j];
      r.rx_time_s =
          traces_->downlink[c].solve_tx_end(rx_start, task.result_size_bits) - rx_start;
      r.energy_j = comm_energy(task.size_bits, ch.tx_power_j_per_bit, r.tx_time_s) +
                   comm_energy(task.result_size_bits, ch.rx_power_j_per_bit, r.rx_time_s);
    }
    for (auto& r : rec) {
      r.response_time_s = r.tx_time_s + r.exec_time_s + r.rx_time_s;
      r.deadline_slack_s = r.task.deadline_s - r.response_time_s;
      r.efficiency = efficiency(r.task.size_bits, r.response_time_s, r.energy_j);
      r.reward = r.efficiency / cfg_.reward_scale + r.lambda * r.deadline_slack_s;
    }
    return rec;
  }

  StepResult step(std::span<const Action> actions) {
    StepResult out;
    out.records = evaluate(actions);
    commit(out.records);
    out.rewards.reserve(out.records.size());
    for (const auto& r : out.records) out.rewards.push_back(r.reward);
    out.done = done();
    out.observations = observations();
    return out;
  }

  // MEC schedule of a joint action (for inspection and tests).
  MecSchedule mec_schedule(std::span<const Action> actions) const {
    const auto recs = evaluate(actions);
    std::vector<MecJob> jobs;
    for (const auto& r : recs) {
      if (!r.action.local())
        jobs.push_back({r.tx_time_s, reference_work(r.task.size_bits, r.task.intensity_cpb,
                                                    cfg_.compute.reference_intensity_cpb)});
    }
    return share_processor(jobs, cfg_.compute.mec_total_speed_bps);
  }

 private:
  static void push_front(std::vector<double>& buf, std::size_t base, int h, double v) {
    for (int i = h - 1; i > 0; --i) buf[base + i] = buf[base + i - 1];
    buf[base] = v;
  }

  void commit(const std::vector<StepRecord>& recs) {
    const int h = cfg_.history_window, a_count = cfg_.num_actions();
    for (const auto& r : recs) {
      const int u = r.user;
      push_front(hist_tx_, static_cast<std::size_t>(u) * h, h, r.tx_time_s);
      push_front(hist_resp_, static_cast<std::size_t>(u) * h, h, r.response_time_s);
      push_front(hist_energy_, static_cast<std::size_t>(u) * h, h, r.energy_j);
      const std::size_t base =
          (static_cast<std::size_t>(u) * a_count + r.action.choice) * h;
      push_front(act_resp_, base, h, r.response_time_s);
      push_front(act_energy_, base, h, r.energy_j);
      push_front(act_tx_, base, h, r.tx_time_s);
    }
    ++step_;
    // Tasks are drawn every step, terminal included, so the per-user task
    // streams never depend on the actions taken.
    for (int u = 0; u < cfg_.num_users; ++u)
      tasks_[u] = sample_task(cfg_.task_gen, user_rng_[u]);
  }

  SystemConfig cfg_;
  std::shared_ptr<const TraceSet> traces_;
  int episode_ = 0;
  int step_ = 0;
  std::vector<Rng> user_rng_;
  std::vector<double> offsets_;
  std::vector<double> hist_tx_, hist_resp_, hist_energy_;
  std::vector<double> act_resp_, act_energy_, act_tx_;
  std::vector<Task> tasks_;
  std::vector<double> lambdas_;
};

// Line-delimited record stream, one decision per line.
inline constexpr const char* kRecordHeader =
    "episode,step,user,action,size_bits,intensity_cpb,quality_layer,deadline_s,"
    "result_size_bits,tx_time_s,exec_time_s,rx_time_s,response_time_s,energy_j,"
    "efficiency,reward,deadline_slack_s,mec_share_bps,lambda";

inline void write_record(std::ostream& out, const StepRecord& r) {
  out << r.episode << ',' << r.step << ',' << r.user << ',' << r.action.choice << ','
      << fmt_double(r.task.size_bits) << ',' << fmt_double(r.task.intensity_cpb) << ','
      << r.task.quality_layer << ',' << fmt_double(r.task.deadline_s) << ','
      << fmt_double(r.task.result_size_bits) << ',' << fmt_double(r.tx_time_s) << ','
      << fmt_double(r.exec_time_s) << ',' << fmt_double(r.rx_time_s) << ','
      << fmt_double(r.response_time_s) << ',' << fmt_double(r.energy_j) << ','
      << fmt_double(r.efficiency) << ',' << fmt_double(r.reward) << ','
      << fmt_double(r.deadline_slack_s) << ',' << fmt_double(r.mec_share_bps) << ','
      << fmt_double(r.lambda) << '\n';
}

}  // namespace mecsim
